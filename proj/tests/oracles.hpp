#pragma once

// Independent reference implementations used as test oracles.

#include <algorithm>
#include <set>

#include "shopagent/catalog.hpp"
#include "shopagent/environment.hpp"
#include "shopagent/ppo.hpp"

namespace shopagent::fixture {

using env::Catalog;
using env::Instruction;
using env::OptionChoice;
using env::Product;

// Reward written out term by term from the purchase-matching formula.
inline double brute_force_reward(const Product& p, const OptionChoice& selected, const Instruction& g) {
  const std::set<std::string> title(p.title.begin(), p.title.end());
  int type_hits = 0;
  for (const auto& t : g.target_type) type_hits += title.count(t) ? 1 : 0;
  double r_type = 0.0;
  if (!g.target_type.empty()) {
    const double f = static_cast<double>(type_hits) / static_cast<double>(g.target_type.size());
    r_type = f >= 0.75 ? 1.0 : f >= 0.5 ? 0.5 : f > 0.0 ? 0.1 : 0.0;
  }
  int att = 0;
  for (const auto& a : g.required_attributes)
    if (std::find(p.attributes.begin(), p.attributes.end(), a) != p.attributes.end()) ++att;
  int opt = 0;
  for (const auto& [name, value] : g.required_options)
    if (selected.count(name) && selected.at(name) == value) ++opt;
  const int price = p.price <= g.price_cap ? 1 : 0;
  const std::size_t denom = g.required_attributes.size() + g.required_options.size() + 1;
  return r_type * static_cast<double>(att + opt + price) / static_cast<double>(denom);
}

// Brute-force ranking: score every product, stable sort by (score desc, id asc).
inline std::vector<int> brute_force_rank(const Catalog& c, const Tokens& q) {
  if (q.empty()) return {};
  std::vector<std::pair<int, int>> s;
  for (const auto& p : c.products) {
    int score = 0;
    for (const auto& t : q) {
      score += static_cast<int>(std::count(p.title.begin(), p.title.end(), t) > 0);
      score += 2 * static_cast<int>(std::count(p.product_type.begin(), p.product_type.end(), t) > 0);
    }
    s.push_back({score, p.id});
  }
  std::stable_sort(s.begin(), s.end(), [](auto& a, auto& b) { return a.first > b.first; });
  std::vector<int> out;
  for (auto& x : s) out.push_back(x.second);
  return out;
}

inline OptionChoice random_choice(const Product& p, Rng& rng) {
  OptionChoice c;
  for (const auto& [name, values] : p.options)
    if (uniform01(rng) < 0.7) c[name] = values[uniform_index(rng, values.size())];
  return c;
}

inline Instruction perturbed_goal(const Catalog& c, Rng& rng) {
  Instruction g = env::sample_instruction(c, rng);
  if (uniform01(rng) < 0.3) {
    // Borrow a type from another product so partial type matches occur.
    const auto& other = c.products[uniform_index(rng, c.products.size())];
    g.target_type = other.product_type;
    if (uniform01(rng) < 0.5) g.target_type.push_back(other.title.front());
  }
  if (uniform01(rng) < 0.3) g.required_attributes.insert("unmatched");
  return g;
}

// Advantage as the truncated sum of discounted TD errors, term by term.
inline ppo::GAEResult gae_by_definition(const std::vector<double>& r, const std::vector<double>& v, const std::vector<bool>& d,
                            double bootstrap, double gamma, double lambda) {
  const std::size_t n = r.size();
  ppo::GAEResult out;
  for (std::size_t t = 0; t < n; ++t) {
    double a = 0.0, w = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      const double next = k + 1 < n ? v[k + 1] : bootstrap;
      const double delta = r[k] + gamma * next * (d[k] ? 0.0 : 1.0) - v[k];
      a += w * delta;
      if (d[k]) break;
      w *= gamma * lambda;
    }
    out.advantages.push_back(a);
    out.returns.push_back(a + v[t]);
  }
  return out;
}

}  // namespace shopagent::fixture
