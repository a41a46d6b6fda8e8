#include "ocsvm_cpd/normalizer.hpp"

#include <cmath>
#include <stdexcept>

#include "ocsvm_cpd/dataset.hpp"
#include "ocsvm_cpd/errors.hpp"

namespace ocsvm_cpd {

std::string to_string(NormalizerMode mode) {
    return mode == NormalizerMode::global ? "global" : "per_condition";
}

NormalizerMode normalizer_mode_from_string(const std::string& name) {
    if (name == "global") return NormalizerMode::global;
    if (name == "per_condition") return NormalizerMode::per_condition;
    throw std::invalid_argument("unknown normalizer mode '" + name + "'");
}

std::vector<double> condition_key(const std::vector<double>& settings, int decimals) {
    const double scale = std::pow(10.0, decimals);
    std::vector<double> key;
    key.reserve(settings.size());
    for (double v : settings) {
        const double r = std::round(v * scale) / scale;
        key.push_back(r == 0.0 ? 0.0 : r);  // fold -0
    }
    return key;
}

std::string format_condition_key(const std::vector<double>& key) {
    std::string s = "(";
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (i) s += ", ";
        s += format_double(key[i]);
    }
    return s + ")";
}

const ConditionStats& Normalizer::group_for(const std::vector<double>& settings) const {
    if (mode == NormalizerMode::global) {
        if (groups.size() != 1) throw DataError("global normalizer must hold exactly one group");
        return groups.front();
    }
    const auto key = condition_key(settings, condition_decimals);
    for (const auto& g : groups)
        if (g.key == key) return g;
    throw DataError("operating condition " + format_condition_key(key) + " was not seen during fitting");
}

}  // namespace ocsvm_cpd
