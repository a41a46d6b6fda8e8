#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ocsvm_cpd/matrix.hpp"
#include "ocsvm_cpd/normalizer.hpp"

namespace ocsvm_cpd {

/// One system's run-to-failure record. Row t holds cycle t + 1.
struct TimeSeriesInstance {
    std::int64_t unit_id = 0;
    Matrix op_settings;  // T x k (k = 3 for C-MAPSS, may be 0 for CSV)
    Matrix sensors;      // T x d_raw

    std::size_t cycles() const noexcept { return sensors.rows(); }
    std::vector<double> settings_at(std::size_t t) const;

    friend bool operator==(const TimeSeriesInstance&, const TimeSeriesInstance&) = default;
};

inline constexpr std::size_t kCmapssSettings = 3;
inline constexpr std::size_t kCmapssSensors = 21;
inline constexpr std::size_t kCmapssColumns = 2 + kCmapssSettings + kCmapssSensors;

/// Whitespace-separated C-MAPSS rows: unit, cycle, setting1..3, s1..s21.
/// Throws ParseError (with line) on a bad row and DataError on cycle gaps or
/// interleaved units.
std::vector<TimeSeriesInstance> parse_cmapss(std::istream& in);
void write_cmapss(std::ostream& out, const std::vector<TimeSeriesInstance>& instances);

/// Generic CSV: header `unit,cycle,<columns...>`; columns named settingK are
/// op settings, the rest are features.
struct CsvDataset {
    std::vector<std::string> setting_names;
    std::vector<std::string> feature_names;
    std::vector<TimeSeriesInstance> instances;
};

CsvDataset parse_csv(std::istream& in);
void write_csv(std::ostream& out, const CsvDataset& data);

/// Statistics come from the first floor(healthy_fraction * T) cycles of every
/// instance. Near-constant features (std < Normalizer::kMinStd, in any group)
/// are masked out.
Normalizer fit_normalizer(const std::vector<TimeSeriesInstance>& instances, double healthy_fraction,
                          NormalizerMode mode, int condition_decimals = 1);

/// T x |feature_mask| matrix of z-scores. Throws DataError for a row whose
/// condition group was not seen during fitting.
Matrix apply_normalizer(const Normalizer& normalizer, const TimeSeriesInstance& instance);

struct SyntheticConfig {
    std::size_t num_units = 20;
    std::size_t dim = 5;
    std::size_t t_min = 150;
    std::size_t t_max = 350;
    double rho_min = 0.55;
    double rho_max = 0.85;
    double drift_magnitude = 6.0;
    double ramp_power = 0.5;
    double noise_std = 1.0;
};

struct SyntheticTruth {
    std::int64_t unit_id = 0;
    std::size_t true_change_cycle = 0;  // last healthy cycle, in [1, T-1]
    std::size_t cycles = 0;
    double drift_magnitude = 0.0;
    std::vector<double> drift_direction;

    friend bool operator==(const SyntheticTruth&, const SyntheticTruth&) = default;
};

struct SyntheticData {
    std::vector<TimeSeriesInstance> instances;
    std::vector<SyntheticTruth> truths;
};

/// Healthy cycles are N(0, noise^2 I); after the change cycle c the mean moves
/// along a random unit direction by drift * ((t - c) / (T - c))^ramp_power.
/// Units are numbered from 1 and op settings are three zero columns.
SyntheticData generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

/// Feature names f1..fd used when writing synthetic data as CSV.
CsvDataset synthetic_to_csv(const SyntheticData& data);

void write_truth_csv(std::ostream& out, const std::vector<SyntheticTruth>& truths);

struct TruthRow {
    std::int64_t unit_id;
    std::size_t true_change_cycle;
    std::size_t cycles;
};
std::vector<TruthRow> parse_truth_csv(std::istream& in);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace ocsvm_cpd
