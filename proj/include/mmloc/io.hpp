#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mmloc/features.hpp"
#include "mmloc/geometry.hpp"
#include "mmloc/nn.hpp"

namespace mmloc::io {

/// Writes to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Stock scenarios with the published AP layouts: rect3, rect4, lroom3.
bool is_stock_scenario(const std::string& name);
Scenario stock_scenario(const std::string& name);
Scenario parse_scenario(const std::string& json_text, const std::string& name = "");
std::string scenario_to_json(const Scenario& s);
/// A stock name or a path to a scenario JSON file.
Scenario load_scenario(const std::string& name_or_path);

/// Dataset CSV; angles in radians, positions in meters, 17 significant digits.
std::string dataset_to_csv(const Dataset& ds, bool audit_columns = false);
/// `roster` fixes the expected feature width and the fingerprint.
Dataset dataset_from_csv(const std::string& text, const AnchorRoster& roster);

std::string model_to_json(const nn::Model& m);
nn::Model model_from_json(const std::string& text);

std::string config_to_json(const nn::TrainConfig& c);
/// Missing keys keep `defaults`.
nn::TrainConfig config_from_json(const std::string& text, const nn::TrainConfig& defaults = {});

/// %.17g formatting.
std::string fmt_double(double v);

}  // namespace mmloc::io
