#pragma once

// Bounded differential evolution over a black-box objective.
//
// Each generation first builds all NP trial vectors (consuming the RNG in slot
// order) and only then evaluates them, possibly on several threads. Selection
// is applied per slot afterwards, so a run is bit-identical for any thread
// count.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocsvm_cpd/matrix.hpp"
#include "ocsvm_cpd/rng.hpp"

namespace ocsvm_cpd {

enum class DeStrategy { rand1bin, best1bin };

std::string to_string(DeStrategy s);
DeStrategy de_strategy_from_string(const std::string& name);

struct Bound {
    double lo;
    double hi;
};

using WarningSink = std::function<void(const std::string&)>;

struct DEConfig {
    DeStrategy strategy = DeStrategy::best1bin;
    // F is drawn uniformly from [f_min, f_max) once per donor; equal ends fix it.
    double f_min = 0.5;
    double f_max = 1.0;
    double cr = 0.7;
    std::size_t population = 15;
    std::size_t generations = 100;
    std::vector<Bound> bounds;
    std::uint64_t seed = 0;
    // Stop early once std(values) <= atol + tol * |mean(values)|. Off when unset.
    std::optional<double> tolerance;
    double atol = 0.0;
    std::size_t threads = 1;
    WarningSink on_warning;  // receives NaN / exception notices in slot order

    void validate() const;
};

struct DEGeneration {
    std::size_t generation = 0;  // 0 is the initial population
    std::vector<double> best_vector;
    double best_value = 0.0;
    double mean_value = 0.0;  // over finite values; +inf when none are finite
    std::size_t evaluations = 0;  // cumulative
};

struct DETrace {
    std::vector<DEGeneration> generations;
};

struct DEResult {
    std::vector<double> best;
    double best_value = 0.0;
    DETrace trace;
    std::size_t warnings = 0;
};

using Objective = std::function<double(std::span<const double>)>;

/// NP x D population, each coordinate uniform in [lo, hi).
Matrix de_init(const std::vector<Bound>& bounds, std::size_t population, Rng& rng);
Matrix de_init(const std::vector<Bound>& bounds, std::size_t population, std::uint64_t seed);

/// Donor indices for one target slot. `r3` is unused by best1.
struct DonorIndices {
    std::size_t r1 = 0;
    std::size_t r2 = 0;
    std::size_t r3 = 0;
    std::size_t best = 0;
};

/// rand1: x_r1 + F (x_r2 - x_r3);  best1: x_best + F (x_r1 - x_r2).
std::vector<double> mutate_with(const Matrix& population, DeStrategy strategy, double f,
                                const DonorIndices& idx);

/// Draws F and indices distinct from `target` and from each other, then
/// builds the donor. Throws std::invalid_argument when NP < 4.
std::vector<double> mutate(const Matrix& population, std::size_t target, std::size_t best,
                           DeStrategy strategy, double f_min, double f_max, Rng& rng);

/// Binomial crossover with one forced donor coordinate.
std::vector<double> crossover_binomial(std::span<const double> target, std::span<const double> donor,
                                       double cr, Rng& rng);

std::vector<double> clip_to_bounds(std::span<const double> v, const std::vector<Bound>& bounds);

/// Greedy selection: a trial replaces its target iff f(trial) <= f(target).
/// NaN objective values count as +inf.
DEResult de_run(const Objective& objective, const DEConfig& config);

/// CSV with header `generation,best_loss,mean_loss,evals`.
void write_trace_csv(std::ostream& out, const DETrace& trace);

/// Runs fn(0..n-1) on up to `threads` workers. Every index is visited once;
/// the first exception is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace ocsvm_cpd
