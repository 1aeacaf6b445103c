#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "ppde/paths.hpp"

namespace ppde {

/// Writes `<stem>.bin` and `<stem>.json`.
///
/// The binary file is columnar little-endian float64: one column of N values
/// per (time index, component) pair in index-major order, then the weight
/// column, then (if present) one column per driving-increment (step, component).
/// The JSON sidecar records grid, dimension, seed, measure tag and layout.
void write_ensemble(const PathEnsemble& ensemble, const std::filesystem::path& stem);

PathEnsemble read_ensemble(const std::filesystem::path& stem);

nlohmann::json ensemble_metadata(const PathEnsemble& ensemble);

}  // namespace ppde
