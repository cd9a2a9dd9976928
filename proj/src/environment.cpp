#include "shopagent/environment.hpp"

#include <algorithm>
#include <cmath>

#include "shopagent/text.hpp"

namespace shopagent::env {

ActionSpec click(std::string_view label) { return ActionSpec{ActionKind::Click, text::tokenize(label)}; }
ActionSpec query(Tokens surface) { return ActionSpec{ActionKind::SearchQuery, std::move(surface)}; }

namespace buttons {
#define SHOPAGENT_BUTTON(fn, label)           \
  const ActionSpec& fn() {                    \
    static const ActionSpec kSpec = click(label); \
    return kSpec;                             \
  }
SHOPAGENT_BUTTON(search, "Search")
SHOPAGENT_BUTTON(back_to_search, "Back to Search")
SHOPAGENT_BUTTON(prev, "< Prev")
SHOPAGENT_BUTTON(next, "Next >")
SHOPAGENT_BUTTON(description, "Description")
SHOPAGENT_BUTTON(features, "Features")
SHOPAGENT_BUTTON(reviews, "Reviews")
SHOPAGENT_BUTTON(buy_now, "Buy Now")
#undef SHOPAGENT_BUTTON
}  // namespace buttons

const char* to_string(PageKind kind) {
  switch (kind) {
    case PageKind::Search: return "search";
    case PageKind::Results: return "results";
    case PageKind::Item: return "item";
    case PageKind::ItemSub: return "itemsub";
  }
  return "?";
}

std::optional<PageKind> page_kind_from_string(std::string_view s) {
  for (auto k : {PageKind::Search, PageKind::Results, PageKind::Item, PageKind::ItemSub})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

std::vector<int> rank_products(const Catalog& catalog, const Tokens& query) {
  if (query.empty()) return {};
  std::vector<std::pair<int, int>> scored;  // (-score, id)
  scored.reserve(catalog.products.size());
  for (const auto& p : catalog.products) {
    int score = 0;
    for (const auto& q : query) {
      if (std::find(p.title.begin(), p.title.end(), q) != p.title.end()) score += 1;
      if (std::find(p.product_type.begin(), p.product_type.end(), q) != p.product_type.end()) score += 2;
    }
    scored.emplace_back(-score, p.id);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<int> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

double type_match_factor(const Product& product, const Instruction& instruction) {
  if (instruction.target_type.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& t : instruction.target_type)
    hits += std::find(product.title.begin(), product.title.end(), t) != product.title.end();
  const double f = static_cast<double>(hits) / static_cast<double>(instruction.target_type.size());
  if (f >= 0.75) return 1.0;
  if (f >= 0.5) return 0.5;
  if (f > 0.0) return 0.1;
  return 0.0;
}

double compute_reward(const Product& product, const OptionChoice& selected_options,
                      const Instruction& instruction) {
  std::size_t matched = 0;
  for (const auto& a : instruction.required_attributes) matched += product.attributes.count(a);
  for (const auto& [name, value] : instruction.required_options) {
    auto it = selected_options.find(name);
    matched += it != selected_options.end() && it->second == value;
  }
  matched += product.price <= instruction.price_cap;
  const std::size_t total =
      instruction.required_attributes.size() + instruction.required_options.size() + 1;
  return type_match_factor(product, instruction) * static_cast<double>(matched) /
         static_cast<double>(total);
}

namespace {

std::string dollars(double price) {
  return std::to_string(static_cast<long long>(std::floor(price)));
}

void append(Tokens& dst, const Tokens& src) { dst.insert(dst.end(), src.begin(), src.end()); }

int page_count(const PageState& page) {
  const auto n = static_cast<int>(page.ranked_product_ids.size());
  return (n + kResultsPerPage - 1) / kResultsPerPage;
}

std::vector<int> visible_products(const PageState& page) {
  const auto& ids = page.ranked_product_ids;
  const std::size_t begin = static_cast<std::size_t>(page.results_page_index - 1) * kResultsPerPage;
  const std::size_t end = std::min(ids.size(), begin + kResultsPerPage);
  if (begin >= end) return {};
  return {ids.begin() + static_cast<std::ptrdiff_t>(begin), ids.begin() + static_cast<std::ptrdiff_t>(end)};
}

}  // namespace

Observation render(const Catalog& catalog, const Instruction& instruction, const PageState& page) {
  Observation obs;
  Tokens& t = obs.text;
  switch (page.kind) {
    case PageKind::Search:
      t.push_back("instruction");
      append(t, instruction.goal_text);
      obs.actions = {ActionSpec{ActionKind::SearchQuery, {}}, buttons::search()};
      break;

    case PageKind::Results: {
      obs.actions.push_back(buttons::back_to_search());
      if (page.results_page_index > 1) obs.actions.push_back(buttons::prev());
      const auto shown = visible_products(page);
      if (shown.empty()) {
        append(t, {"no", "matches", "for"});
        append(t, page.last_query);
      } else {
        append(t, {"results", "for"});
        append(t, page.last_query);
        append(t, {"page", std::to_string(page.results_page_index), "of",
                   std::to_string(page_count(page))});
      }
      for (int id : shown) {
        const Product& p = catalog.at(id);
        append(t, p.title);
        append(t, {"price", dollars(p.price)});
        obs.actions.push_back(ActionSpec{ActionKind::Click, p.title});
      }
      if (page.results_page_index < page_count(page)) obs.actions.push_back(buttons::next());
      break;
    }

    case PageKind::Item: {
      const Product& p = catalog.at(page.focused_product);
      append(t, p.title);
      append(t, {"price", dollars(p.price), "options"});
      for (const auto& [name, values] : p.options) {
        t.push_back(name);
        append(t, values);
      }
      if (!page.selected_options.empty()) {
        t.push_back("selected");
        for (const auto& [name, value] : page.selected_options) append(t, {name, value});
      }
      obs.actions = {buttons::back_to_search(), buttons::prev(),    buttons::description(),
                     buttons::features(),       buttons::reviews(), buttons::buy_now()};
      for (const auto& [name, values] : p.options)
        for (const auto& v : values) obs.actions.push_back(ActionSpec{ActionKind::Click, {v}});
      break;
    }

    case PageKind::ItemSub: {
      const Product& p = catalog.at(page.focused_product);
      switch (page.sub_kind) {
        case SubKind::Description:
          append(t, {"description", "the"});
          append(t, p.product_type);
          append(t, {"by", p.title.front(), "from", p.category});
          break;
        case SubKind::Features:
          t.push_back("features");
          for (const auto& a : p.attributes) t.push_back(a);
          break;
        case SubKind::Reviews:
          append(t, {"reviews", "rated", std::to_string(3 + p.id % 3), "stars"});
          break;
      }
      obs.actions = {buttons::back_to_search(), buttons::prev()};
      break;
    }
  }
  return obs;
}

bool is_legal(const std::vector<ActionSpec>& offered, const ActionSpec& action) {
  if (action.kind == ActionKind::SearchQuery) {
    if (action.surface.empty() || action.surface.size() > kMaxQueryTokens) return false;
    return std::any_of(offered.begin(), offered.end(),
                       [](const ActionSpec& a) { return a.is_query_slot(); });
  }
  return std::find(offered.begin(), offered.end(), action) != offered.end();
}

std::pair<EpisodeState, StepResult> transition(const Catalog& catalog, const EpisodeState& state,
                                               const ActionSpec& action, int horizon) {
  require(!state.done, "step called on a finished episode");
  const Observation current = render(catalog, state.instruction, state.page);
  require(is_legal(current.actions, action),
          "illegal action '" + text::join(action.surface) + "' on " + to_string(state.page.kind) + " page");

  EpisodeState next = state;
  next.step_count += 1;
  PageState& page = next.page;
  double reward = 0.0;

  auto to_results = [&](const Tokens& q) {
    page.kind = PageKind::Results;
    page.last_query = q;
    page.ranked_product_ids = rank_products(catalog, q);
    page.results_page_index = 1;
    page.focused_product = -1;
    page.selected_options.clear();
  };
  auto to_search = [&] {
    page.kind = PageKind::Search;
    page.ranked_product_ids.clear();
    page.results_page_index = 1;
    page.focused_product = -1;
    page.selected_options.clear();
  };

  switch (state.page.kind) {
    case PageKind::Search:
      if (action.kind == ActionKind::SearchQuery) to_results(action.surface);
      else to_results(page.last_query);
      break;

    case PageKind::Results:
      if (action == buttons::back_to_search()) {
        to_search();
      } else if (action == buttons::prev()) {
        page.results_page_index -= 1;
      } else if (action == buttons::next()) {
        page.results_page_index += 1;
      } else {
        for (int id : visible_products(state.page)) {
          if (catalog.at(id).title == action.surface) {
            page.kind = PageKind::Item;
            page.focused_product = id;
            page.selected_options.clear();
            break;
          }
        }
      }
      break;

    case PageKind::Item:
      if (action == buttons::back_to_search()) {
        to_search();
      } else if (action == buttons::prev()) {
        page.kind = PageKind::Results;
        page.focused_product = -1;
        page.selected_options.clear();
      } else if (action == buttons::description()) {
        page.kind = PageKind::ItemSub;
        page.sub_kind = SubKind::Description;
      } else if (action == buttons::features()) {
        page.kind = PageKind::ItemSub;
        page.sub_kind = SubKind::Features;
      } else if (action == buttons::reviews()) {
        page.kind = PageKind::ItemSub;
        page.sub_kind = SubKind::Reviews;
      } else if (action == buttons::buy_now()) {
        const Product& p = catalog.at(page.focused_product);
        next.purchased = Purchase{p.id, page.selected_options};
        next.done = true;
        reward = compute_reward(p, page.selected_options, state.instruction);
      } else {
        const Product& p = catalog.at(page.focused_product);
        for (const auto& [name, values] : p.options)
          if (std::find(values.begin(), values.end(), action.surface.front()) != values.end())
            page.selected_options[name] = action.surface.front();
      }
      break;

    case PageKind::ItemSub:
      if (action == buttons::back_to_search()) to_search();
      else page.kind = PageKind::Item;
      break;
  }

  if (!next.done && next.step_count >= horizon) next.done = true;
  StepResult result{render(catalog, next.instruction, next.page), reward, next.done};
  return {std::move(next), std::move(result)};
}

ShopEnv::ShopEnv(std::shared_ptr<const Catalog> catalog, int horizon)
    : catalog_(std::move(catalog)), horizon_(horizon) {
  require(catalog_ != nullptr && !catalog_->products.empty(), "ShopEnv needs a non-empty catalog");
  require(horizon_ >= 1, "horizon must be positive");
}

Observation ShopEnv::reset(Instruction instruction) {
  require(!instruction.required_attributes.empty(), "instruction needs at least one attribute");
  require(instruction.price_cap > 0.0, "instruction price cap must be positive");
  state_ = EpisodeState{};
  state_.instruction = std::move(instruction);
  observation_ = render(*catalog_, state_.instruction, state_.page);
  started_ = true;
  return observation_;
}

StepResult ShopEnv::step(const ActionSpec& action) {
  require(started_, "step called before reset");
  auto [next, result] = transition(*catalog_, state_, action, horizon_);
  state_ = std::move(next);
  observation_ = result.observation;
  return result;
}

}  // namespace shopagent::env
