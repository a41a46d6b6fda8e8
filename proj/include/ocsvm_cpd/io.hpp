#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "ocsvm_cpd/calibration.hpp"
#include "ocsvm_cpd/normalizer.hpp"
#include "ocsvm_cpd/svm.hpp"

namespace ocsvm_cpd {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;

Json to_json(const Normalizer& normalizer);
Normalizer normalizer_from_json(const Json& j);

/// {"gamma","nu","offset_b","alphas","support_vectors","feature_mask","normalizer","format_version"}
Json to_json(const TrainedModel& model);
/// Throws SchemaError on any missing or ill-typed field.
TrainedModel model_from_json(const Json& j);

Json to_json(const CalibrationConfig& config);

/// {"best":{...},"loss","trace":[...],"model":{...},"config_echo":{...}}
Json result_to_json(const CalibrationResult& result, const Json& config_echo);

/// Accepts a bare model document or a calibration result holding one under "model".
TrainedModel load_model_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace ocsvm_cpd
