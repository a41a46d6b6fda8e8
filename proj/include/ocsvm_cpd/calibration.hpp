#pragma once

// Self-consistent calibration of a one-class SVM for change-point detection.
//
// A hypothesis is a kernel width plus one life fraction per training series.
// The SVM is trained on the hypothesized-healthy prefixes of all series; the
// hypothesis scores well when the trained model labels each series the way
// the hypothesis does (healthy up to c_i, faulty after).

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocsvm_cpd/dataset.hpp"
#include "ocsvm_cpd/de.hpp"
#include "ocsvm_cpd/matrix.hpp"
#include "ocsvm_cpd/svm.hpp"

namespace ocsvm_cpd {

struct HypothesisBounds {
    double log10_gamma_min = -2.0;
    double log10_gamma_max = 2.0;
    double rho_min = 0.5;
    double rho_max = 1.0;  // c_i is clamped to T_i - 1, so 1.0 is never reached after decoding
};

struct Hypothesis {
    double log10_gamma = 0.0;
    double gamma = 1.0;
    std::vector<double> rho;
    std::vector<std::size_t> change_cycles;  // c_i in [1, T_i - 1]: last hypothesized-healthy cycle
};

/// vector = (log10 gamma, rho_1..rho_m); c_i = clamp(round(rho_i T_i), 1, T_i - 1).
Hypothesis decode_hypothesis(std::span<const double> vector, const std::vector<std::size_t>& lengths);

/// The (m+1)-dimensional search box.
std::vector<Bound> hypothesis_box(const HypothesisBounds& bounds, std::size_t num_instances);

/// First c_i rows of each instance, instance order then cycle order.
Matrix assemble_training_set(const std::vector<Matrix>& instances, const std::vector<std::size_t>& change_cycles);

/// 1 for cycles 1..c, 0 for c+1..T. Requires 1 <= c <= T - 1.
std::vector<int> hypothesized_labels(std::size_t cycles, std::size_t change_cycle);

/// Mean binary cross-entropy with probabilities clipped to [eps, 1 - eps].
double log_loss(std::span<const int> labels, std::span<const double> probabilities, double eps);

struct CalibrationConfig {
    double nu = 0.05;
    std::size_t population = 105;
    std::size_t generations = 10;
    HypothesisBounds bounds;
    DeStrategy strategy = DeStrategy::best1bin;
    double f_min = 0.5;
    double f_max = 1.0;
    double cr = 0.7;
    std::optional<double> tolerance;
    std::uint64_t seed = 0;
    SmoOptions smo;
    double eps = 1e-7;
    std::size_t threads = 1;

    void validate() const;
};

/// Sum over instances of the per-instance mean log loss between the
/// hypothesized labels and the trained model's hard predictions. Never throws
/// for infeasible candidates: returns +inf and, when `cause` is given, why.
double fitness(std::span<const double> vector, const std::vector<Matrix>& instances,
               const CalibrationConfig& config, std::string* cause = nullptr);

struct GenerationSummary {
    std::size_t generation = 0;
    double best_loss = 0.0;
    double mean_loss = 0.0;
    std::size_t evaluations = 0;
};

struct CalibrationResult {
    Hypothesis best;
    double loss = 0.0;
    TrainedModel model;
    std::vector<GenerationSummary> trace;
    std::size_t infeasible_candidates = 0;
    double seconds = 0.0;  // wall clock; not part of the serialized result
};

/// Runs DE over the hypothesis box on already-normalized instances (T x d
/// each, T >= 4) and retrains the SVM at the best hypothesis. Throws
/// CalibrationError when no candidate was feasible.
CalibrationResult calibrate(const std::vector<Matrix>& instances, const CalibrationConfig& config,
                            const WarningSink& on_warning = {});

/// Normalizes raw instances first and stores the normalizer in the model.
CalibrationResult calibrate(const std::vector<TimeSeriesInstance>& instances, const Normalizer& normalizer,
                            const CalibrationConfig& config, const WarningSink& on_warning = {});

}  // namespace ocsvm_cpd
