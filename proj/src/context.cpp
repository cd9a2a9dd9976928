#include "shopagent/context.hpp"

#include <algorithm>

namespace shopagent::model {

ContextEncoding encode_context(const Vocabulary& vocab, const Tokens& goal,
                               const env::Observation* prev_obs, const env::Observation& cur_obs,
                               int limit) {
  require(limit >= kMinContextLimit, "context limit must be at least 16");
  std::vector<int> g = vocab.encode(goal);
  std::vector<int> p = prev_obs ? vocab.encode(prev_obs->text) : std::vector<int>{};
  std::vector<int> c = vocab.encode(cur_obs.text);
  bool has_prev = prev_obs != nullptr;

  auto total = [&] {
    return g.size() + 1 + (has_prev ? p.size() + 1 : 0) + c.size();
  };
  const auto cap = static_cast<std::size_t>(limit);
  auto drop_front = [](std::vector<int>& v, std::size_t n) {
    n = std::min(n, v.size());
    v.erase(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n));
  };

  if (total() > cap && has_prev) {
    drop_front(p, total() - cap);
    // An emptied previous page also loses its separator.
    if (p.empty()) has_prev = false;
  }
  if (total() > cap) drop_front(c, total() - cap);
  if (total() > cap) drop_front(g, total() - cap);

  ContextEncoding out;
  out.token_ids.reserve(total());
  out.segments.reserve(total());
  auto push = [&](const std::vector<int>& ids, Segment seg) {
    for (int id : ids) {
      out.token_ids.push_back(id);
      out.segments.push_back(seg);
    }
  };
  push(g, kGoalSegment);
  push({Vocabulary::kSep}, kGoalSegment);
  if (has_prev) {
    push(p, kPrevSegment);
    push({Vocabulary::kSep}, kPrevSegment);
  }
  push(c, kCurSegment);
  return out;
}

ContextEncoding policy_context(const Vocabulary& vocab, const Tokens& goal, const env::Observation* prev_obs,
                               const env::Observation& cur_obs, const ContextOptions& options) {
  require(options.obs_history == 1 || options.obs_history == 2, "observation history must be 1 or 2");
  return encode_context(vocab, goal, options.obs_history == 2 ? prev_obs : nullptr, cur_obs, options.limit);
}

}  // namespace shopagent::model
