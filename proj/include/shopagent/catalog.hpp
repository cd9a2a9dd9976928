#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shopagent/common.hpp"

namespace shopagent::env {

/// Bumped whenever category pools or rendering templates change, so that
/// frozen fixtures can detect drift.
inline constexpr int kTemplateVersion = 1;

/// Number of category templates the generator knows about.
inline constexpr int kMaxCategories = 5;

using OptionTable = std::map<std::string, std::vector<std::string>>;
using OptionChoice = std::map<std::string, std::string>;

struct Product {
  int id = 0;
  std::string category;
  Tokens title;
  Tokens product_type;
  std::set<std::string> attributes;
  OptionTable options;
  double price = 0.0;

  bool operator==(const Product&) const = default;
};

struct Instruction {
  std::uint64_t id = 0;
  Tokens goal_text;
  std::set<std::string> required_attributes;
  OptionChoice required_options;
  double price_cap = 0.0;
  Tokens target_type;
  std::string source_category;
  int target_product = 0;

  bool operator==(const Instruction&) const = default;
};

struct Catalog {
  std::vector<Product> products;  // products[i].id == i
  std::vector<std::string> categories;

  const Product& at(int id) const;
  bool operator==(const Catalog&) const = default;
};

Catalog generate_catalog(std::uint64_t seed, int n_products, int n_categories);

/// Fraction of a category's attributes that no other category uses.
double unique_attribute_fraction(const Catalog& catalog, const std::string& category);

/// Fixed goal template over the instruction's structured fields.
Tokens render_goal(const std::set<std::string>& attributes, const Tokens& target_type,
                   const OptionChoice& options, double price_cap);

/// Draws a goal for a uniformly chosen product, optionally restricted to
/// one category. The returned instruction carries id 0; goal streams assign ids.
Instruction sample_instruction(const Catalog& catalog, Rng& rng,
                               const std::optional<std::string>& category = std::nullopt);

/// Separates training goals from held-out goals by id prefix.
enum class GoalPurpose : std::uint64_t { Train = 1, Eval = 2, Demo = 3 };

/// Deterministic, seeded source of instructions with stream-unique ids.
class GoalStream {
 public:
  GoalStream(const Catalog& catalog, std::uint64_t seed, GoalPurpose purpose,
             std::optional<std::string> category = std::nullopt);

  Instruction next();
  std::vector<Instruction> take(std::size_t n);

 private:
  const Catalog* catalog_;
  Rng rng_;
  GoalPurpose purpose_;
  std::optional<std::string> category_;
  std::uint64_t index_ = 0;
};

GoalPurpose purpose_of(const Instruction& instruction);

/// Every fixed word the page and goal templates can emit.
Tokens template_vocabulary();

// Line-delimited JSON records, one product / instruction per line.
void write_catalog(std::ostream& out, const Catalog& catalog);
Catalog read_catalog(std::istream& in);
void write_instructions(std::ostream& out, const std::vector<Instruction>& goals);
std::vector<Instruction> read_instructions(std::istream& in);

}  // namespace shopagent::env
