#pragma once

#include <iosfwd>
#include <string>
#include <unordered_map>

#include "shopagent/catalog.hpp"

namespace shopagent::model {

/// Closed-world token table. Ids 0..3 are the specials.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);  // must start with the specials

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;  // UNK when absent
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const Tokens& tokens) const;
  Tokens decode(const std::vector<int>& ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Specials, then the sorted union of catalog words, template words and the
/// integers used for prices.
Vocabulary build_vocabulary(const env::Catalog& catalog);

void write_vocabulary(std::ostream& out, const Vocabulary& vocab);
Vocabulary read_vocabulary(std::istream& in);

}  // namespace shopagent::model
