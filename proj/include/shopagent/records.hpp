#pragma once

// JSON field mappings shared by the line-delimited file formats.

#include "json.hpp"
#include "shopagent/catalog.hpp"

namespace shopagent::env {

nlohmann::json product_to_json(const Product& p);
Product product_from_json(const nlohmann::json& j);
nlohmann::json instruction_to_json(const Instruction& g);
Instruction instruction_from_json(const nlohmann::json& j);

}  // namespace shopagent::env
