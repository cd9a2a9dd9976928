#include "shopagent/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "shopagent/records.hpp"
#include "shopagent/text.hpp"

namespace shopagent::env {
namespace {

struct CategoryTemplate {
  const char* name;
  std::vector<const char*> types;
  std::vector<const char*> brands;
  std::vector<const char*> attributes;  // category-private pool
  std::vector<std::pair<const char*, std::vector<const char*>>> options;
};

const std::vector<CategoryTemplate>& category_templates() {
  static const std::vector<CategoryTemplate> kTemplates = {
      {"beauty",
       {"shampoo", "lipstick", "serum", "moisturizer"},
       {"lumina", "velvet", "aurora", "petal", "sola", "bloom"},
       {"hydrating", "vegan", "matte", "soothing", "brightening", "nourishing", "volumizing",
        "antiaging", "unscented", "glossy", "mineral", "gentle"},
       {{"scent", {"lavender", "citrus", "vanilla", "rose"}},
        {"size", {"mini", "regular", "jumbo", "travel"}},
        {"shade", {"nude", "coral", "berry", "plum"}}}},
      {"garden",
       {"planter", "hose", "shovel", "lantern"},
       {"greenleaf", "terra", "oakridge", "fernway", "meadow", "stonebrook"},
       {"weatherproof", "rustproof", "solar", "foldable", "heavyduty", "ergonomic", "galvanized",
        "drainage", "expandable", "ceramic", "cedar", "frostproof"},
       {{"color", {"green", "terracotta", "black", "white"}},
        {"length", {"short", "standard", "long", "extra"}},
        {"material", {"steel", "plastic", "wood", "bamboo"}}}},
      {"grocery",
       {"coffee", "cereal", "tea", "crackers"},
       {"harvest", "goldenfield", "farmhouse", "orchard", "purely", "sunmill"},
       {"organic", "glutenfree", "sugarfree", "keto", "roasted", "decaf", "kosher", "wholegrain",
        "spicy", "lowsodium", "nongmo", "caffeinated"},
       {{"flavor", {"original", "hazelnut", "mocha", "honey"}},
        {"pack", {"single", "twin", "bulk", "case"}},
        {"weight", {"8oz", "16oz", "32oz"}}}},
      {"electronics",
       {"headphones", "charger", "speaker", "keyboard"},
       {"voltix", "sonica", "nexon", "pulse", "arctech", "zenwave"},
       {"wireless", "bluetooth", "noisecancelling", "fastcharging", "portable", "rechargeable",
        "backlit", "usbc", "mechanical", "stereo", "compact", "waterresistant"},
       {{"color", {"black", "silver", "blue", "red"}},
        {"model", {"basic", "pro", "max", "ultra"}},
        {"warranty", {"limited", "extended", "lifetime"}}}},
      {"fashion",
       {"sneakers", "jacket", "dress", "backpack"},
       {"urbanite", "northloom", "kestrel", "maven", "driftwood", "solstice"},
       {"cotton", "slimfit", "breathable", "leather", "quickdry", "stretch", "vintage",
        "insulated", "handmade", "embroidered", "oversized", "recycled"},
       {{"color", {"navy", "olive", "charcoal", "ivory"}},
        {"size", {"petite", "medium", "large", "xlarge"}},
        {"fit", {"regular", "relaxed", "tailored", "cropped"}}}},
  };
  return kTemplates;
}

// Attributes a category may borrow once it already owns enough private ones.
const std::vector<const char*> kSharedAttributes = {"premium", "lightweight", "durable"};
constexpr std::size_t kPrivateBeforeShared = 6;
constexpr double kSharedProbability = 0.15;

constexpr const char* kTemplateWords =
    "i am looking for and with price lower than dollars "
    "instruction search results page of no matches for "
    "selected options description features reviews rated stars "
    "the is a product by from "
    "back to search prev next buy now";

template <typename T>
std::vector<T> pick_distinct(Rng& rng, const std::vector<T>& pool, std::size_t k) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Partial Fisher-Yates, then restore pool order for stable rendering.
  k = std::min(k, idx.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  out.reserve(k);
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

std::string format_dollars(double amount) {
  return std::to_string(static_cast<long long>(std::floor(amount)));
}

}  // namespace

const Product& Catalog::at(int id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < products.size(),
          "product id out of range: " + std::to_string(id));
  return products[static_cast<std::size_t>(id)];
}

Catalog generate_catalog(std::uint64_t seed, int n_products, int n_categories) {
  require(n_products > 0, "generate_catalog: n_products must be positive");
  require(n_categories >= 1 && n_categories <= kMaxCategories,
          "generate_catalog: n_categories must be in [1, 5]");
  require(n_products >= n_categories, "generate_catalog: need n_products >= n_categories");

  const auto& templates = category_templates();
  Rng rng(mix_seed(seed, 0xCA7A106));
  Catalog catalog;
  for (int c = 0; c < n_categories; ++c) catalog.categories.emplace_back(templates[c].name);

  std::vector<std::set<std::string>> private_used(static_cast<std::size_t>(n_categories));
  std::unordered_set<std::string> titles;

  for (int i = 0; i < n_products; ++i) {
    const auto c = static_cast<std::size_t>(i % n_categories);
    const CategoryTemplate& tpl = templates[c];
    Product p;
    p.id = i;
    p.category = tpl.name;

    for (int attempt = 0;; ++attempt) {
      const std::string type = tpl.types[uniform_index(rng, tpl.types.size())];
      const std::string brand = tpl.brands[uniform_index(rng, tpl.brands.size())];
      const int n_attr = uniform_int(rng, 1, 3);
      std::vector<const char*> attrs = pick_distinct(rng, tpl.attributes, static_cast<std::size_t>(n_attr));
      const bool shared_ok = private_used[c].size() >= kPrivateBeforeShared;
      const bool take_shared = uniform01(rng) < kSharedProbability;
      std::set<std::string> attributes(attrs.begin(), attrs.end());
      if (shared_ok && take_shared) attributes.insert(kSharedAttributes[c % kSharedAttributes.size()]);

      Tokens title{brand};
      for (const char* a : attrs) title.emplace_back(a);
      title.push_back(type);
      const std::string key = text::join(title);
      if (titles.count(key) && attempt < 32) continue;
      titles.insert(key);
      p.title = std::move(title);
      p.product_type = Tokens{type};
      p.attributes = std::move(attributes);
      for (const char* a : attrs) private_used[c].insert(a);
      break;
    }

    const int n_opt = uniform_int(rng, 1, static_cast<int>(tpl.options.size()));
    for (const auto& [name, values] : pick_distinct(rng, tpl.options, static_cast<std::size_t>(n_opt))) {
      const int n_val = uniform_int(rng, 2, std::min<int>(4, static_cast<int>(values.size())));
      std::vector<std::string> chosen;
      for (const char* v : pick_distinct(rng, values, static_cast<std::size_t>(n_val))) chosen.emplace_back(v);
      p.options.emplace(name, std::move(chosen));
    }
    p.price = std::round(uniform_real(rng, 5.0, 100.0) * 100.0) / 100.0;
    catalog.products.push_back(std::move(p));
  }
  return catalog;
}

double unique_attribute_fraction(const Catalog& catalog, const std::string& category) {
  std::set<std::string> mine, others;
  for (const auto& p : catalog.products) {
    auto& dst = p.category == category ? mine : others;
    dst.insert(p.attributes.begin(), p.attributes.end());
  }
  if (mine.empty()) return 0.0;
  std::size_t unique = 0;
  for (const auto& a : mine) unique += others.count(a) == 0;
  return static_cast<double>(unique) / static_cast<double>(mine.size());
}

Tokens render_goal(const std::set<std::string>& attributes, const Tokens& target_type,
                   const OptionChoice& options, double price_cap) {
  std::string s = "i am looking for ";
  bool first = true;
  for (const auto& a : attributes) {
    if (!first) s += " and ";
    s += a;
    first = false;
  }
  s += " " + text::join(target_type);
  if (!options.empty()) {
    s += " with";
    first = true;
    for (const auto& [name, value] : options) {
      s += first ? " " : " and ";
      s += name + " " + value;
      first = false;
    }
  }
  s += ", and price lower than " + format_dollars(price_cap) + " dollars";
  return text::tokenize(s);
}

Instruction sample_instruction(const Catalog& catalog, Rng& rng,
                               const std::optional<std::string>& category) {
  require(!catalog.products.empty(), "sample_instruction: empty catalog");
  const Product* target = nullptr;
  if (category) {
    std::vector<const Product*> pool;
    for (const auto& p : catalog.products)
      if (p.category == *category) pool.push_back(&p);
    require(!pool.empty(), "sample_instruction: no products in category " + *category);
    target = pool[uniform_index(rng, pool.size())];
  } else {
    target = &catalog.products[uniform_index(rng, catalog.products.size())];
  }

  Instruction g;
  g.target_product = target->id;
  g.target_type = target->product_type;
  g.source_category = target->category;

  std::vector<std::string> attrs(target->attributes.begin(), target->attributes.end());
  const int k = uniform_int(rng, 1, std::min<int>(3, static_cast<int>(attrs.size())));
  for (auto& a : pick_distinct(rng, attrs, static_cast<std::size_t>(k))) g.required_attributes.insert(a);

  for (const auto& [name, values] : target->options) {
    if (uniform01(rng) < 0.5) g.required_options[name] = values[uniform_index(rng, values.size())];
  }

  if (uniform01(rng) < 0.9) {
    g.price_cap = std::ceil(target->price * uniform_real(rng, 1.0, 1.5));
  } else {
    g.price_cap = std::max(1.0, std::floor(target->price * uniform_real(rng, 0.5, 0.95)));
  }
  g.goal_text = render_goal(g.required_attributes, g.target_type, g.required_options, g.price_cap);
  return g;
}

GoalStream::GoalStream(const Catalog& catalog, std::uint64_t seed, GoalPurpose purpose,
                       std::optional<std::string> category)
    : catalog_(&catalog),
      rng_(mix_seed(seed, 0x60A1 + static_cast<std::uint64_t>(purpose))),
      purpose_(purpose),
      category_(std::move(category)) {}

Instruction GoalStream::next() {
  Instruction g = sample_instruction(*catalog_, rng_, category_);
  g.id = (static_cast<std::uint64_t>(purpose_) << 48) | index_++;
  return g;
}

std::vector<Instruction> GoalStream::take(std::size_t n) {
  std::vector<Instruction> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(next());
  return out;
}

GoalPurpose purpose_of(const Instruction& instruction) {
  return static_cast<GoalPurpose>(instruction.id >> 48);
}

Tokens template_vocabulary() {
  Tokens out = text::tokenize(kTemplateWords);
  for (const auto& tpl : category_templates()) {
    out.emplace_back(tpl.name);
    for (auto* w : tpl.types) out.emplace_back(w);
    for (auto* w : tpl.brands) out.emplace_back(w);
    for (auto* w : tpl.attributes) out.emplace_back(w);
    for (const auto& [name, values] : tpl.options) {
      out.emplace_back(name);
      for (auto* v : values) out.emplace_back(v);
    }
  }
  for (auto* w : kSharedAttributes) out.emplace_back(w);
  return out;
}

// ---------------------------------------------------------------------------
// Line-delimited records

using nlohmann::json;

json product_to_json(const Product& p) {
  return json{{"id", p.id},
              {"category", p.category},
              {"title", p.title},
              {"product_type", p.product_type},
              {"attributes", p.attributes},
              {"options", p.options},
              {"price", p.price}};
}

Product product_from_json(const json& j) {
  Product p;
  p.id = j.at("id").get<int>();
  p.category = j.at("category").get<std::string>();
  p.title = j.at("title").get<Tokens>();
  p.product_type = j.at("product_type").get<Tokens>();
  p.attributes = j.at("attributes").get<std::set<std::string>>();
  p.options = j.at("options").get<OptionTable>();
  p.price = j.at("price").get<double>();
  return p;
}

json instruction_to_json(const Instruction& g) {
  return json{{"id", g.id},
              {"goal_text", g.goal_text},
              {"required_attributes", g.required_attributes},
              {"required_options", g.required_options},
              {"price_cap", g.price_cap},
              {"target_type", g.target_type},
              {"source_category", g.source_category},
              {"target_product", g.target_product}};
}

Instruction instruction_from_json(const json& j) {
  Instruction g;
  g.id = j.at("id").get<std::uint64_t>();
  g.goal_text = j.at("goal_text").get<Tokens>();
  g.required_attributes = j.at("required_attributes").get<std::set<std::string>>();
  g.required_options = j.at("required_options").get<OptionChoice>();
  g.price_cap = j.at("price_cap").get<double>();
  g.target_type = j.at("target_type").get<Tokens>();
  g.source_category = j.at("source_category").get<std::string>();
  g.target_product = j.at("target_product").get<int>();
  return g;
}

namespace {

template <typename F>
void for_each_record(std::istream& in, F&& f) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw ContractViolation("malformed record on line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

void write_catalog(std::ostream& out, const Catalog& catalog) {
  for (const auto& p : catalog.products) out << product_to_json(p).dump() << '\n';
}

Catalog read_catalog(std::istream& in) {
  Catalog c;
  for_each_record(in, [&](const json& j) { c.products.push_back(product_from_json(j)); });
  for (std::size_t i = 0; i < c.products.size(); ++i) {
    require(c.products[i].id == static_cast<int>(i), "catalog ids must be dense and ordered");
    const auto& cat = c.products[i].category;
    if (std::find(c.categories.begin(), c.categories.end(), cat) == c.categories.end())
      c.categories.push_back(cat);
  }
  return c;
}

void write_instructions(std::ostream& out, const std::vector<Instruction>& goals) {
  for (const auto& g : goals) out << instruction_to_json(g).dump() << '\n';
}

std::vector<Instruction> read_instructions(std::istream& in) {
  std::vector<Instruction> out;
  for_each_record(in, [&](const json& j) { out.push_back(instruction_from_json(j)); });
  return out;
}

}  // namespace shopagent::env
