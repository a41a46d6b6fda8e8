#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ocsvm_cpd {

enum class NormalizerMode { global, per_condition };

std::string to_string(NormalizerMode mode);
NormalizerMode normalizer_mode_from_string(const std::string& name);

/// z-score statistics for one operating-condition group. Global mode has a
/// single group with an empty key.
struct ConditionStats {
    std::vector<double> key;  // op settings rounded to `condition_decimals`
    std::vector<double> mean;
    std::vector<double> std;  // population std, every entry >= kMinStd
};

struct Normalizer {
    static constexpr double kMinStd = 1e-8;

    NormalizerMode mode = NormalizerMode::global;
    int condition_decimals = 1;
    std::size_t input_width = 0;            // raw sensor columns at fit time; 0 = unchecked
    std::vector<std::size_t> feature_mask;  // indices into the raw sensor columns
    std::vector<ConditionStats> groups;

    /// Group for a row of raw op settings; throws DataError for an unseen key.
    const ConditionStats& group_for(const std::vector<double>& settings) const;

    bool empty() const noexcept { return feature_mask.empty(); }
};

/// Rounds every setting to `decimals` places (half away from zero).
std::vector<double> condition_key(const std::vector<double>& settings, int decimals);

std::string format_condition_key(const std::vector<double>& key);

}  // namespace ocsvm_cpd
