#pragma once

#include <memory>
#include <optional>
#include <utility>

#include "shopagent/catalog.hpp"

namespace shopagent::env {

/// Episode length cap used when none is configured.
inline constexpr int kDefaultHorizon = 30;
inline constexpr int kResultsPerPage = 5;
inline constexpr std::size_t kMaxQueryTokens = 8;

enum class ActionKind : std::uint8_t { SearchQuery = 0, Click = 1 };

/// One legal move on a page. A SearchQuery with an empty surface is the open
/// query slot offered by the search page; the policy fills it in.
struct ActionSpec {
  ActionKind kind = ActionKind::Click;
  Tokens surface;

  bool is_query_slot() const { return kind == ActionKind::SearchQuery && surface.empty(); }
  bool operator==(const ActionSpec&) const = default;
};

ActionSpec click(std::string_view label);
ActionSpec query(Tokens surface);

// Button labels, tokenized.
namespace buttons {
const ActionSpec& search();
const ActionSpec& back_to_search();
const ActionSpec& prev();
const ActionSpec& next();
const ActionSpec& description();
const ActionSpec& features();
const ActionSpec& reviews();
const ActionSpec& buy_now();
}  // namespace buttons

enum class PageKind : std::uint8_t { Search = 0, Results = 1, Item = 2, ItemSub = 3 };
enum class SubKind : std::uint8_t { Description = 0, Features = 1, Reviews = 2 };

const char* to_string(PageKind kind);
std::optional<PageKind> page_kind_from_string(std::string_view s);

struct PageState {
  PageKind kind = PageKind::Search;
  int results_page_index = 1;
  std::vector<int> ranked_product_ids;
  int focused_product = -1;
  OptionChoice selected_options;
  SubKind sub_kind = SubKind::Description;
  Tokens last_query;

  bool operator==(const PageState&) const = default;
};

struct Observation {
  Tokens text;
  std::vector<ActionSpec> actions;

  bool operator==(const Observation&) const = default;
};

struct Purchase {
  int product = -1;
  OptionChoice options;
  bool operator==(const Purchase&) const = default;
};

struct EpisodeState {
  Instruction instruction;
  PageState page;
  int step_count = 0;
  bool done = false;
  std::optional<Purchase> purchased;

  bool operator==(const EpisodeState&) const = default;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
};

/// Scores products by query overlap: one point per query token found in the
/// title plus two per token found in the product type. Highest first, ties by
/// ascending id. An empty query yields no results.
std::vector<int> rank_products(const Catalog& catalog, const Tokens& query);

/// Fraction-of-type-tokens heuristic standing in for the product-type match.
double type_match_factor(const Product& product, const Instruction& instruction);

/// Goal-conditioned purchase reward in [0, 1].
double compute_reward(const Product& product, const OptionChoice& selected_options,
                      const Instruction& instruction);

/// Pure rendering of a page.
Observation render(const Catalog& catalog, const Instruction& instruction, const PageState& page);

/// Whether `action` is accepted on a page offering `offered`.
bool is_legal(const std::vector<ActionSpec>& offered, const ActionSpec& action);

/// Pure transition. Throws ContractViolation for illegal actions or finished
/// episodes; `state` is never modified.
std::pair<EpisodeState, StepResult> transition(const Catalog& catalog, const EpisodeState& state,
                                               const ActionSpec& action, int horizon);

/// One shopping session over a shared, immutable catalog.
class ShopEnv {
 public:
  explicit ShopEnv(std::shared_ptr<const Catalog> catalog, int horizon = kDefaultHorizon);

  Observation reset(Instruction instruction);
  StepResult step(const ActionSpec& action);

  const EpisodeState& state() const { return state_; }
  const Observation& observation() const { return observation_; }
  const Catalog& catalog() const { return *catalog_; }
  std::shared_ptr<const Catalog> catalog_ptr() const { return catalog_; }
  int horizon() const { return horizon_; }

 private:
  std::shared_ptr<const Catalog> catalog_;
  int horizon_;
  EpisodeState state_;
  Observation observation_;
  bool started_ = false;
};

}  // namespace shopagent::env
