#pragma once

#include <string>
#include <string_view>

#include "shopagent/common.hpp"

namespace shopagent::text {

/// Lowercases, strips punctuation and splits on whitespace.
Tokens tokenize(std::string_view s);

std::string join(const Tokens& tokens, std::string_view sep = " ");

}  // namespace shopagent::text
