#pragma once

#include <cstdint>

#include "shopagent/environment.hpp"
#include "shopagent/vocab.hpp"

namespace shopagent::model {

inline constexpr int kDefaultContextLimit = 256;
inline constexpr int kMinContextLimit = 16;

/// Segment tags carried alongside every context token.
enum Segment : std::uint8_t { kGoalSegment = 0, kPrevSegment = 1, kCurSegment = 2 };
inline constexpr int kNumSegments = 3;

/// Token ids laid out as goal, SEP, previous page, SEP, current page. The
/// previous page and its separator are omitted when there is none.
struct ContextEncoding {
  std::vector<std::int32_t> token_ids;
  std::vector<std::uint8_t> segments;

  int length() const { return static_cast<int>(token_ids.size()); }
  bool operator==(const ContextEncoding&) const = default;
};

/// Left-truncates to `limit`, dropping the previous page first, then the
/// current page, and the goal last.
ContextEncoding encode_context(const Vocabulary& vocab, const Tokens& goal,
                               const env::Observation* prev_obs, const env::Observation& cur_obs,
                               int limit = kDefaultContextLimit);

/// How much page history the policy sees.
struct ContextOptions {
  int limit = kDefaultContextLimit;
  int obs_history = 2;  // 1: current page only, 2: previous and current page

  bool operator==(const ContextOptions&) const = default;
};

/// encode_context with the previous page dropped when obs_history is 1.
ContextEncoding policy_context(const Vocabulary& vocab, const Tokens& goal, const env::Observation* prev_obs,
                               const env::Observation& cur_obs, const ContextOptions& options);

}  // namespace shopagent::model
