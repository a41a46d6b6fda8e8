#include "ocsvm_cpd/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <list>
#include <string>

namespace ocsvm_cpd {

namespace {

constexpr double kBoundaryBand = 1e-11;

double box_bound(double nu, std::size_t n) { return 1.0 / (nu * static_cast<double>(n)); }

void check_training_input(const Matrix& points, double nu, double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw std::invalid_argument("gamma must be positive and finite");
    if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("nu must lie in (0, 1]");
    if (points.rows() < 2) throw std::invalid_argument("need at least 2 training points");
    if (points.cols() == 0) throw std::invalid_argument("training points have zero dimension");
    if (nu * static_cast<double>(points.rows()) < 1.0)
        throw std::invalid_argument("nu * n < 1: box constraint 1/(nu n) exceeds 1");
    for (double v : points.data())
        if (!std::isfinite(v)) throw std::invalid_argument("training points must be finite");
}

// LRU cache of Gram rows for one training run.
class KernelRowCache {
public:
    KernelRowCache(const Matrix& points, double gamma, std::size_t capacity_bytes)
        : points_(points), gamma_(gamma), slots_(points.rows(), entries_.end()) {
        const std::size_t row_bytes = std::max<std::size_t>(1, points.rows() * sizeof(double));
        capacity_ = std::max<std::size_t>(2, capacity_bytes / row_bytes);
    }

    std::span<const double> row(std::size_t i) {
        auto& slot = slots_[i];
        if (slot != entries_.end()) {
            entries_.splice(entries_.begin(), entries_, slot);
            return entries_.front().values;
        }
        if (entries_.size() >= capacity_) {
            slots_[entries_.back().index] = entries_.end();
            entries_.pop_back();
        }
        Entry e{i, std::vector<double>(points_.rows())};
        const auto xi = points_.row(i);
        for (std::size_t j = 0; j < points_.rows(); ++j)
            e.values[j] = j == i ? 1.0 : rbf_kernel(xi, points_.row(j), gamma_);
        entries_.push_front(std::move(e));
        slot = entries_.begin();
        return entries_.front().values;
    }

private:
    struct Entry {
        std::size_t index;
        std::vector<double> values;
    };

    const Matrix& points_;
    double gamma_;
    std::size_t capacity_ = 2;
    std::list<Entry> entries_;
    std::vector<std::list<Entry>::iterator> slots_;
};

struct Violation {
    std::size_t up = 0;    // argmin G over a < C
    std::size_t down = 0;  // argmax G over a > 0
    double gap = 0.0;      // G[down] - G[up], >= 0 when both exist
};

Violation maximal_violating_pair(const std::vector<double>& alpha, const std::vector<double>& grad,
                                 double bound) {
    double g_min = std::numeric_limits<double>::infinity();
    double g_max = -std::numeric_limits<double>::infinity();
    Violation v;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        if (alpha[k] < bound && grad[k] < g_min) {
            g_min = grad[k];
            v.up = k;
        }
        if (alpha[k] > 0.0 && grad[k] > g_max) {
            g_max = grad[k];
            v.down = k;
        }
    }
    v.gap = (std::isfinite(g_min) && std::isfinite(g_max)) ? std::max(0.0, g_max - g_min) : 0.0;
    return v;
}

void reconstruct_gradient(KernelRowCache& cache, const std::vector<double>& alpha,
                          std::vector<double>& grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        if (alpha[j] == 0.0) continue;
        const auto qj = cache.row(j);
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += alpha[j] * qj[k];
    }
}

double objective_of(const std::vector<double>& alpha, const std::vector<double>& grad) {
    double f = 0.0;
    for (std::size_t k = 0; k < alpha.size(); ++k) f += alpha[k] * grad[k];
    return 0.5 * f;
}

}  // namespace

KernelParams::KernelParams(double g) : gamma(g) {
    if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("gamma must be positive");
}

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma) {
    if (x.size() != y.size())
        throw std::invalid_argument("rbf_kernel: dimension mismatch (" + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()) + ")");
    double d2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double diff = x[k] - y[k];
        d2 += diff * diff;
    }
    return std::exp(-gamma * d2);
}

Matrix gram_matrix(const Matrix& points, double gamma) {
    const std::size_t n = points.rows();
    Matrix q(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        q(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double k = rbf_kernel(points.row(i), points.row(j), gamma);
            q(i, j) = k;
            q(j, i) = k;
        }
    }
    return q;
}

TrainedModel detail::finalize_model(const Matrix& points, const std::vector<double>& alphas,
                                    double nu, double gamma) {
    const std::size_t n = points.rows();
    const double bound = box_bound(nu, n);

    // A coefficient within rounding of either end of the box is snapped to it;
    // otherwise a 1e-17 residue left by the equality constraint would count
    // as a free support vector and move the offset.
    const double snap = 1e-12 * bound;
    std::vector<double> a(alphas);
    for (double& v : a) {
        if (v <= snap) v = 0.0;
        else if (v >= bound - snap) v = bound;
    }

    TrainedModel model;
    model.gamma = gamma;
    model.nu = nu;
    std::vector<std::size_t> free_idx;
    for (std::size_t i = 0; i < n; ++i) {
        if (a[i] <= 0.0) continue;
        model.support_vectors.append_row(points.row(i));
        model.alphas.push_back(a[i]);
        if (a[i] < bound) free_idx.push_back(i);
    }
    if (model.alphas.empty()) throw std::logic_error("finalize_model: no support vectors");

    // Expansion evaluated exactly the way decision_value evaluates it, so a
    // free support vector scores b up to rounding in the mean below.
    auto expansion = [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t k = 0; k < model.alphas.size(); ++k)
            s += model.alphas[k] * rbf_kernel(model.support_vectors.row(k), points.row(i), gamma);
        return s;
    };

    if (!free_idx.empty()) {
        const double ref = expansion(free_idx.front());
        double shift = 0.0;
        for (std::size_t k = 1; k < free_idx.size(); ++k) shift += expansion(free_idx[k]) - ref;
        model.offset_b = ref + shift / static_cast<double>(free_idx.size());
    } else {
        double lb = -std::numeric_limits<double>::infinity();  // max over a = C
        double ub = std::numeric_limits<double>::infinity();   // min over a = 0
        for (std::size_t i = 0; i < n; ++i) {
            if (a[i] >= bound) lb = std::max(lb, expansion(i));
            else if (a[i] <= 0.0) ub = std::min(ub, expansion(i));
        }
        if (!std::isfinite(lb)) model.offset_b = ub;
        else if (!std::isfinite(ub)) model.offset_b = lb;
        else model.offset_b = 0.5 * (lb + ub);
    }
    return model;
}

TrainedModel train_ocsvm(const Matrix& points, double nu, double gamma, const SmoOptions& options,
                         SmoStats* stats) {
    check_training_input(points, nu, gamma);
    const std::size_t n = points.rows();
    const double bound = box_bound(nu, n);
    const double scale = nu * static_cast<double>(n);

    // libsvm-style start: saturate the first floor(nu n) points, remainder on the next.
    std::vector<double> alpha(n, 0.0);
    const auto saturated = std::min(n, static_cast<std::size_t>(std::floor(scale)));
    for (std::size_t i = 0; i < saturated; ++i) alpha[i] = bound;
    if (saturated < n) alpha[saturated] = std::max(0.0, 1.0 - static_cast<double>(saturated) * bound);

    KernelRowCache cache(points, gamma, options.cache_bytes);
    std::vector<double> grad(n, 0.0);
    reconstruct_gradient(cache, alpha, grad);

    std::size_t iter = 0;
    int reconstructions = 0;
    Violation v = maximal_violating_pair(alpha, grad, bound);
    for (;;) {
        if (v.gap * scale <= options.kkt_tol) {
            // Confirm against a fresh gradient to shed accumulated rounding.
            if (reconstructions >= 3) break;
            ++reconstructions;
            reconstruct_gradient(cache, alpha, grad);
            v = maximal_violating_pair(alpha, grad, bound);
            if (v.gap * scale <= options.kkt_tol) break;
        }
        if (iter >= options.max_iter) {
            const double residual = v.gap * scale;
            if (stats) *stats = {iter, residual, objective_of(alpha, grad)};
            throw ConvergenceError("SMO did not converge within " + std::to_string(options.max_iter) +
                                       " pair updates (residual " + std::to_string(residual) + ")",
                                   detail::finalize_model(points, alpha, nu, gamma), residual);
        }
        ++iter;

        const std::size_t i = v.up;
        const std::size_t j = v.down;
        const auto qi = cache.row(i);
        const auto qj = cache.row(j);
        double curvature = qi[i] + qj[j] - 2.0 * qi[j];
        if (curvature <= 0.0) curvature = 1e-12;

        double step = (grad[j] - grad[i]) / curvature;
        bool i_hits = false;
        bool j_hits = false;
        if (step >= bound - alpha[i]) {
            step = bound - alpha[i];
            i_hits = true;
        }
        if (step >= alpha[j]) {
            step = alpha[j];
            j_hits = true;
            i_hits = alpha[i] + step >= bound;
        }
        alpha[i] = i_hits ? bound : alpha[i] + step;
        alpha[j] = j_hits ? 0.0 : alpha[j] - step;
        for (std::size_t k = 0; k < n; ++k) grad[k] += step * (qi[k] - qj[k]);

        v = maximal_violating_pair(alpha, grad, bound);
    }

    if (stats) *stats = {iter, v.gap * scale, objective_of(alpha, grad)};
    return detail::finalize_model(points, alpha, nu, gamma);
}

double decision_value(const TrainedModel& model, std::span<const double> x) {
    if (x.size() != model.support_vectors.cols())
        throw std::invalid_argument("decision_value: expected dimension " +
                                    std::to_string(model.support_vectors.cols()) + ", got " +
                                    std::to_string(x.size()));
    double s = 0.0;
    for (std::size_t k = 0; k < model.alphas.size(); ++k)
        s += model.alphas[k] * rbf_kernel(model.support_vectors.row(k), x, model.gamma);
    // Points within solver residue of the offset lie on the boundary.
    const double value = s - model.offset_b;
    return std::abs(value) <= kBoundaryBand * std::max(std::abs(s), std::abs(model.offset_b)) ? 0.0 : value;
}

int classify(const TrainedModel& model, std::span<const double> x) {
    return decision_value(model, x) >= 0.0 ? +1 : -1;
}

double dual_objective(const TrainedModel& model) {
    double f = 0.0;
    const std::size_t m = model.alphas.size();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            f += model.alphas[i] * model.alphas[j] *
                 rbf_kernel(model.support_vectors.row(i), model.support_vectors.row(j), model.gamma);
    return 0.5 * f;
}

}  // namespace ocsvm_cpd
