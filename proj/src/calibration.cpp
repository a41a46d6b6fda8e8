#include "ocsvm_cpd/calibration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ocsvm_cpd/errors.hpp"

namespace ocsvm_cpd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

Hypothesis decode_hypothesis(std::span<const double> vector, const std::vector<std::size_t>& lengths) {
    if (vector.size() != lengths.size() + 1)
        throw std::invalid_argument("decode_hypothesis: expected " + std::to_string(lengths.size() + 1) +
                                    " entries, got " + std::to_string(vector.size()));
    Hypothesis h;
    h.log10_gamma = vector[0];
    h.gamma = std::pow(10.0, vector[0]);
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        const std::size_t T = lengths[i];
        if (T < 2) throw std::invalid_argument("decode_hypothesis: series shorter than 2 cycles");
        const double rho = vector[i + 1];
        const double scaled = std::round(rho * static_cast<double>(T));
        const double clamped = std::clamp(scaled, 1.0, static_cast<double>(T - 1));
        h.rho.push_back(rho);
        h.change_cycles.push_back(static_cast<std::size_t>(clamped));
    }
    return h;
}

std::vector<Bound> hypothesis_box(const HypothesisBounds& bounds, std::size_t num_instances) {
    std::vector<Bound> box;
    box.push_back({bounds.log10_gamma_min, bounds.log10_gamma_max});
    for (std::size_t i = 0; i < num_instances; ++i) box.push_back({bounds.rho_min, bounds.rho_max});
    return box;
}

Matrix assemble_training_set(const std::vector<Matrix>& instances, const std::vector<std::size_t>& change_cycles) {
    if (instances.size() != change_cycles.size())
        throw std::invalid_argument("assemble_training_set: one change cycle per instance required");
    Matrix out;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const std::size_t c = change_cycles[i];
        if (c < 1 || c + 1 > instances[i].rows())
            throw std::invalid_argument("assemble_training_set: change cycle out of [1, T-1]");
        for (std::size_t t = 0; t < c; ++t) out.append_row(instances[i].row(t));
    }
    return out;
}

std::vector<int> hypothesized_labels(std::size_t cycles, std::size_t change_cycle) {
    if (change_cycle < 1 || change_cycle + 1 > cycles)
        throw std::invalid_argument("hypothesized_labels: need 1 <= c <= T-1 (c=" + std::to_string(change_cycle) +
                                    ", T=" + std::to_string(cycles) + ")");
    std::vector<int> labels(cycles, 0);
    std::fill_n(labels.begin(), change_cycle, 1);
    return labels;
}

double log_loss(std::span<const int> labels, std::span<const double> probabilities, double eps) {
    if (labels.size() != probabilities.size())
        throw std::invalid_argument("log_loss: label and probability lengths differ");
    if (labels.empty()) throw std::invalid_argument("log_loss: empty input");
    double total = 0.0;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        // Clip 1 - p on its own so that a hard eps / 1 - eps prediction costs
        // exactly -ln(eps) per mismatch whichever way it is wrong.
        const double p = labels[t] ? probabilities[t] : 1.0 - probabilities[t];
        total += std::log(std::clamp(p, eps, 1.0 - eps));
    }
    return -total / static_cast<double>(labels.size());
}

void CalibrationConfig::validate() const {
    if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("nu must lie in (0, 1]");
    if (population < 4) throw std::invalid_argument("population must be at least 4");
    if (!(bounds.log10_gamma_min < bounds.log10_gamma_max))
        throw std::invalid_argument("log10 gamma bounds must satisfy lo < hi");
    if (!(bounds.rho_min > 0.0 && bounds.rho_min < bounds.rho_max && bounds.rho_max <= 1.0))
        throw std::invalid_argument("rho bounds must satisfy 0 < lo < hi <= 1");
    if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("log-loss eps must lie in (0, 0.5)");
}

double fitness(std::span<const double> vector, const std::vector<Matrix>& instances,
               const CalibrationConfig& config, std::string* cause) {
    auto fail = [&](std::string why) {
        if (cause) *cause = std::move(why);
        return kInf;
    };
    std::vector<std::size_t> lengths;
    for (const auto& inst : instances) lengths.push_back(inst.rows());

    try {
        const auto h = decode_hypothesis(vector, lengths);
        const Matrix train = assemble_training_set(instances, h.change_cycles);
        if (config.nu * static_cast<double>(train.rows()) < 1.0)
            return fail("nu * n < 1 for " + std::to_string(train.rows()) + " training rows");
        const TrainedModel model = train_ocsvm(train, config.nu, h.gamma, config.smo);

        double loss = 0.0;
        for (std::size_t i = 0; i < instances.size(); ++i) {
            const auto& inst = instances[i];
            std::vector<double> p(inst.rows());
            for (std::size_t t = 0; t < inst.rows(); ++t)
                p[t] = classify(model, inst.row(t)) > 0 ? 1.0 - config.eps : config.eps;
            loss += log_loss(hypothesized_labels(inst.rows(), h.change_cycles[i]), p, config.eps);
        }
        return loss;
    } catch (const ConvergenceError& e) {
        return fail(e.what());
    } catch (const std::invalid_argument& e) {
        return fail(e.what());
    }
}

CalibrationResult calibrate(const std::vector<Matrix>& instances, const CalibrationConfig& config,
                            const WarningSink& on_warning) {
    config.validate();
    if (instances.empty()) throw std::invalid_argument("calibrate: no training instances");
    for (const auto& inst : instances) {
        if (inst.rows() < 4) throw std::invalid_argument("calibrate: every series needs at least 4 cycles");
        if (inst.cols() != instances.front().cols())
            throw std::invalid_argument("calibrate: instances differ in feature count");
    }
    const auto start = std::chrono::steady_clock::now();

    DEConfig de;
    de.strategy = config.strategy;
    de.f_min = config.f_min;
    de.f_max = config.f_max;
    de.cr = config.cr;
    de.population = config.population;
    de.generations = config.generations;
    de.bounds = hypothesis_box(config.bounds, instances.size());
    de.seed = config.seed;
    de.tolerance = config.tolerance;
    de.threads = config.threads;
    de.on_warning = on_warning;

    // Infeasible candidates surface as exceptions so the engine reports them
    // in slot order and scores them +inf.
    const Objective objective = [&](std::span<const double> x) {
        std::string cause;
        const double value = fitness(x, instances, config, &cause);
        if (!cause.empty()) throw std::runtime_error(cause);
        return value;
    };
    const DEResult run = de_run(objective, de);
    if (!std::isfinite(run.best_value))
        throw CalibrationError("calibration failed: all " + std::to_string(run.warnings) +
                               " evaluated candidates were infeasible");

    CalibrationResult result;
    std::vector<std::size_t> lengths;
    for (const auto& inst : instances) lengths.push_back(inst.rows());
    result.best = decode_hypothesis(run.best, lengths);
    result.loss = run.best_value;
    result.model = train_ocsvm(assemble_training_set(instances, result.best.change_cycles), config.nu,
                               result.best.gamma, config.smo);
    for (const auto& g : run.trace.generations)
        result.trace.push_back({g.generation, g.best_value, g.mean_value, g.evaluations});
    result.infeasible_candidates = run.warnings;
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

CalibrationResult calibrate(const std::vector<TimeSeriesInstance>& instances, const Normalizer& normalizer,
                            const CalibrationConfig& config, const WarningSink& on_warning) {
    std::vector<Matrix> normalized;
    normalized.reserve(instances.size());
    for (const auto& inst : instances) normalized.push_back(apply_normalizer(normalizer, inst));
    auto result = calibrate(normalized, config, on_warning);
    result.model.feature_mask = normalizer.feature_mask;
    result.model.normalizer = normalizer;
    return result;
}

}  // namespace ocsvm_cpd
