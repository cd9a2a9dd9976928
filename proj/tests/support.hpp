#pragma once

// Shared fixtures for the unit tests.

#include <memory>

#include "shopagent/bc.hpp"
#include "shopagent/context.hpp"
#include "shopagent/environment.hpp"
#include "shopagent/model.hpp"
#include "shopagent/vocab.hpp"

namespace shopagent::fixture {

/// The standard 50-product, 5-category catalog.
inline std::shared_ptr<const env::Catalog> standard_catalog() {
  static const auto catalog = std::make_shared<const env::Catalog>(env::generate_catalog(1, 50, 5));
  return catalog;
}

inline std::shared_ptr<const model::Vocabulary> standard_vocab() {
  static const auto vocab = std::make_shared<const model::Vocabulary>(model::build_vocabulary(*standard_catalog()));
  return vocab;
}

/// Narrow model for gradient checks and fast loops.
inline model::ModelConfig small_config(const model::Vocabulary& vocab) { return {vocab.size(), 16, 8}; }

inline model::ModelConfig full_config(const model::Vocabulary& vocab) { return {vocab.size(), 64, 64}; }

/// Context of the first page of a fresh episode.
inline model::ContextEncoding search_context(const env::Catalog& catalog, const model::Vocabulary& vocab,
                                             const env::Instruction& goal) {
  const auto obs = env::render(catalog, goal, env::PageState{});
  return model::encode_context(vocab, goal.goal_text, nullptr, obs);
}

}  // namespace shopagent::fixture
