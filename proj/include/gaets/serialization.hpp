#pragma once

#include "gaets/training.hpp"

#include <json.hpp>

namespace gaets {

nlohmann::json to_json(const TrainConfig& config);

/// Reads the keys present in `j` on top of `base`; unknown keys are a
/// ConfigError so typos do not pass silently.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

/// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace gaets
