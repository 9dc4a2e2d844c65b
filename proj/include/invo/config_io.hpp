#pragma once

// JSON forms of the configuration structs. Missing keys keep their defaults;
// unknown keys are rejected so that typos do not silently fall back.

#include <filesystem>

#include <json.hpp>

#include "invo/model.hpp"
#include "invo/signal.hpp"
#include "invo/train.hpp"

namespace invo {

void to_json(nlohmann::json& j, const StageSpec& s);
void from_json(const nlohmann::json& j, StageSpec& s);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);
void to_json(nlohmann::json& j, const SgdConfig& c);
void from_json(const nlohmann::json& j, SgdConfig& c);

// Training run file: {"model": {...}, "sgd": {...}}, both optional.
struct RunConfig {
  ModelConfig model;
  SgdConfig sgd;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace invo
