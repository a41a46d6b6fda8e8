#include "ocsvm_cpd/de.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "ocsvm_cpd/dataset.hpp"

namespace ocsvm_cpd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t draw_excluding(Rng& rng, std::size_t n, std::initializer_list<std::size_t> taken) {
    for (;;) {
        const auto k = static_cast<std::size_t>(rng.below(n));
        if (std::find(taken.begin(), taken.end(), k) == taken.end()) return k;
    }
}

std::size_t argmin_earliest(const std::vector<double>& values) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < values.size(); ++k)
        if (values[k] < values[best]) best = k;
    return best;
}

double finite_mean(const std::vector<double>& values) {
    double sum = 0.0;
    std::size_t count = 0;
    for (double v : values)
        if (std::isfinite(v)) {
            sum += v;
            ++count;
        }
    return count ? sum / static_cast<double>(count) : kInf;
}

struct SlotResult {
    double value = kInf;
    std::string warning;
};

SlotResult evaluate(const Objective& objective, std::span<const double> x) {
    SlotResult r;
    try {
        r.value = objective(x);
    } catch (const std::exception& e) {
        r.value = kInf;
        r.warning = std::string("objective threw: ") + e.what();
        return r;
    }
    if (std::isnan(r.value)) {
        r.value = kInf;
        r.warning = "objective returned NaN; treated as +inf";
    }
    return r;
}

}  // namespace

std::string to_string(DeStrategy s) { return s == DeStrategy::best1bin ? "best1bin" : "rand1bin"; }

DeStrategy de_strategy_from_string(const std::string& name) {
    if (name == "best1bin") return DeStrategy::best1bin;
    if (name == "rand1bin") return DeStrategy::rand1bin;
    throw std::invalid_argument("unknown DE strategy '" + name + "'");
}

void DEConfig::validate() const {
    if (population < 4) throw std::invalid_argument("DE population must be at least 4");
    if (bounds.empty()) throw std::invalid_argument("DE needs at least one dimension");
    for (const auto& b : bounds)
        if (!(b.lo < b.hi)) throw std::invalid_argument("DE bound with lo >= hi");
    if (!(cr >= 0.0 && cr <= 1.0)) throw std::invalid_argument("DE crossover rate must lie in [0, 1]");
    if (!(f_min > 0.0 && f_max <= 2.0 && f_min <= f_max))
        throw std::invalid_argument("DE mutation factor interval must lie in (0, 2]");
}

Matrix de_init(const std::vector<Bound>& bounds, std::size_t population, Rng& rng) {
    for (const auto& b : bounds)
        if (!(b.lo < b.hi)) throw std::invalid_argument("de_init: bound with lo >= hi");
    Matrix pop(population, bounds.size());
    for (std::size_t i = 0; i < population; ++i)
        for (std::size_t j = 0; j < bounds.size(); ++j) pop(i, j) = rng.uniform(bounds[j].lo, bounds[j].hi);
    return pop;
}

Matrix de_init(const std::vector<Bound>& bounds, std::size_t population, std::uint64_t seed) {
    Rng rng(seed);
    return de_init(bounds, population, rng);
}

std::vector<double> mutate_with(const Matrix& population, DeStrategy strategy, double f,
                                const DonorIndices& idx) {
    const auto base = population.row(strategy == DeStrategy::best1bin ? idx.best : idx.r1);
    const auto a = population.row(strategy == DeStrategy::best1bin ? idx.r1 : idx.r2);
    const auto b = population.row(strategy == DeStrategy::best1bin ? idx.r2 : idx.r3);
    std::vector<double> donor(population.cols());
    for (std::size_t k = 0; k < donor.size(); ++k) donor[k] = base[k] + f * (a[k] - b[k]);
    return donor;
}

std::vector<double> mutate(const Matrix& population, std::size_t target, std::size_t best,
                           DeStrategy strategy, double f_min, double f_max, Rng& rng) {
    const std::size_t np = population.rows();
    if (np < 4) throw std::invalid_argument("mutate: population must have at least 4 members");
    const double f = f_min == f_max ? f_min : rng.uniform(f_min, f_max);
    DonorIndices idx;
    idx.best = best;
    idx.r1 = draw_excluding(rng, np, {target});
    idx.r2 = draw_excluding(rng, np, {target, idx.r1});
    if (strategy == DeStrategy::rand1bin) idx.r3 = draw_excluding(rng, np, {target, idx.r1, idx.r2});
    return mutate_with(population, strategy, f, idx);
}

std::vector<double> crossover_binomial(std::span<const double> target, std::span<const double> donor,
                                       double cr, Rng& rng) {
    if (target.size() != donor.size()) throw std::invalid_argument("crossover: dimension mismatch");
    const auto forced = static_cast<std::size_t>(rng.below(target.size()));
    std::vector<double> trial(target.begin(), target.end());
    for (std::size_t k = 0; k < trial.size(); ++k) {
        const bool take = rng.uniform01() < cr;
        if (take || k == forced) trial[k] = donor[k];
    }
    return trial;
}

std::vector<double> clip_to_bounds(std::span<const double> v, const std::vector<Bound>& bounds) {
    if (v.size() != bounds.size()) throw std::invalid_argument("clip_to_bounds: dimension mismatch");
    std::vector<double> out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::clamp(v[k], bounds[k].lo, bounds[k].hi);
    return out;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(std::max<std::size_t>(1, threads), n);
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t k = next++; k < n; k = next++) {
            try {
                fn(k);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    pool.clear();
    if (error) std::rethrow_exception(error);
}

DEResult de_run(const Objective& objective, const DEConfig& config) {
    config.validate();
    const std::size_t np = config.population;
    const std::size_t dim = config.bounds.size();
    Rng rng(config.seed);
    DEResult result;

    auto evaluate_all = [&](const Matrix& candidates) {
        std::vector<SlotResult> slots(candidates.rows());
        parallel_for(candidates.rows(), config.threads,
                     [&](std::size_t k) { slots[k] = evaluate(objective, candidates.row(k)); });
        std::vector<double> values(slots.size());
        for (std::size_t k = 0; k < slots.size(); ++k) {
            values[k] = slots[k].value;
            if (!slots[k].warning.empty()) {
                ++result.warnings;
                if (config.on_warning) config.on_warning("candidate " + std::to_string(k) + ": " + slots[k].warning);
            }
        }
        return values;
    };

    Matrix pop = de_init(config.bounds, np, rng);
    std::vector<double> values = evaluate_all(pop);
    std::size_t evaluations = np;

    auto record = [&](std::size_t generation) {
        const std::size_t best = argmin_earliest(values);
        const auto row = pop.row(best);
        result.trace.generations.push_back(
            {generation, {row.begin(), row.end()}, values[best], finite_mean(values), evaluations});
    };
    record(0);

    for (std::size_t g = 1; g <= config.generations; ++g) {
        const std::size_t best = argmin_earliest(values);
        Matrix trials(np, dim);
        for (std::size_t i = 0; i < np; ++i) {
            const auto donor = mutate(pop, i, best, config.strategy, config.f_min, config.f_max, rng);
            const auto trial = clip_to_bounds(crossover_binomial(pop.row(i), donor, config.cr, rng), config.bounds);
            std::copy(trial.begin(), trial.end(), trials.row(i).begin());
        }
        const auto trial_values = evaluate_all(trials);
        evaluations += np;
        for (std::size_t i = 0; i < np; ++i) {
            if (trial_values[i] <= values[i]) {
                std::copy(trials.row(i).begin(), trials.row(i).end(), pop.row(i).begin());
                values[i] = trial_values[i];
            }
        }
        record(g);

        if (config.tolerance) {
            const double mean = finite_mean(values);
            if (std::isfinite(mean) && std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
                double var = 0.0;
                for (double v : values) var += (v - mean) * (v - mean);
                const double sd = std::sqrt(var / static_cast<double>(np));
                if (sd <= config.atol + *config.tolerance * std::abs(mean)) break;
            }
        }
    }

    const auto& last = result.trace.generations.back();
    result.best = last.best_vector;
    result.best_value = last.best_value;
    return result;
}

void write_trace_csv(std::ostream& out, const DETrace& trace) {
    out << "generation,best_loss,mean_loss,evals\n";
    for (const auto& g : trace.generations)
        out << g.generation << ',' << format_double(g.best_value) << ',' << format_double(g.mean_value) << ','
            << g.evaluations << '\n';
}

}  // namespace ocsvm_cpd
