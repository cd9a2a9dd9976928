#include "shopagent/vocab.hpp"

#include <istream>
#include <ostream>
#include <set>

namespace shopagent::model {
namespace {
const std::vector<std::string> kSpecials = {"<pad>", "<unk>", "<eos>", "<sep>"};
constexpr int kMaxPriceToken = 200;
}  // namespace

Vocabulary::Vocabulary() : Vocabulary(kSpecials) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  require(tokens_.size() >= kSpecials.size(), "vocabulary must contain the special tokens");
  for (std::size_t i = 0; i < kSpecials.size(); ++i)
    require(tokens_[i] == kSpecials[i], "vocabulary specials out of order");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const bool fresh = index_.emplace(tokens_[i], static_cast<int>(i)).second;
    require(fresh, "duplicate vocabulary token: " + tokens_[i]);
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  require(id >= 0 && id < size(), "token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Tokens Vocabulary::decode(const std::vector<int>& ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

Vocabulary build_vocabulary(const env::Catalog& catalog) {
  std::set<std::string> words;
  for (const auto& p : catalog.products) {
    words.insert(p.category);
    words.insert(p.title.begin(), p.title.end());
    words.insert(p.product_type.begin(), p.product_type.end());
    words.insert(p.attributes.begin(), p.attributes.end());
    for (const auto& [name, values] : p.options) {
      words.insert(name);
      words.insert(values.begin(), values.end());
    }
  }
  for (const auto& w : env::template_vocabulary()) words.insert(w);
  for (int n = 0; n <= kMaxPriceToken; ++n) words.insert(std::to_string(n));

  std::vector<std::string> tokens = kSpecials;
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocabulary(std::move(tokens));
}

void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

Vocabulary read_vocabulary(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

}  // namespace shopagent::model
