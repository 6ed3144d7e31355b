/*
 * Copyright 2026 The vitpipe Authors
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef VITPIPE_BUNDLE_HPP
#define VITPIPE_BUNDLE_HPP

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "vitpipe/model.hpp"

namespace vitpipe {

/// Missing files, unreadable data, or a manifest that does not describe a model.
class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json table_to_json(const LutTable& t);
LutTable table_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

/// A model directory: manifest.json, one little-endian binary per tensor, tables/*.json.
/// Float parameters are stored alongside when given so a reference can be rebuilt.
struct Bundle {
  IntModel model;
  std::optional<FloatParams> float_params;
};

void save_bundle(const std::filesystem::path& dir, const IntModel& model,
                 const FloatParams* float_params = nullptr);
Bundle load_bundle(const std::filesystem::path& dir);

/// Float image as JSON: {"shape": [C, H, W], "data": [...]} in C-major order.
void save_image(const std::filesystem::path& file, const ModelConfig& cfg, const Eigen::MatrixXd& image);
Eigen::MatrixXd load_image(const std::filesystem::path& file, const ModelConfig& cfg);

nlohmann::json read_json(const std::filesystem::path& file);
void write_json(const std::filesystem::path& file, const nlohmann::json& j);

}  // namespace vitpipe

#endif  // VITPIPE_BUNDLE_HPP
