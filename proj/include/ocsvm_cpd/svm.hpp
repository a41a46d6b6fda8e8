#pragma once

// RBF-kernel one-class SVM (Schölkopf formulation) trained through its dual:
//
//   min_a  1/2 a^T Q a    s.t.  0 <= a_i <= 1/(nu n),  sum a_i = 1,
//
// with Q_ij = exp(-gamma |x_i - x_j|^2). The decision function is
// f(x) = sum_i a_i K(s_i, x) - b, positive inside the estimated support.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocsvm_cpd/matrix.hpp"
#include "ocsvm_cpd/normalizer.hpp"

namespace ocsvm_cpd {

struct KernelParams {
    double gamma;

    explicit KernelParams(double g);
};

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma);

/// Gram matrix of `points` (n x n, row-major).
Matrix gram_matrix(const Matrix& points, double gamma);

struct TrainedModel {
    Matrix support_vectors;     // one row per support vector, in training order
    std::vector<double> alphas;  // strictly positive, sum to 1
    double offset_b = 0.0;
    double gamma = 1.0;
    double nu = 0.5;
    // Preprocessing applied to raw rows before they reach the kernel. Empty for
    // models trained directly on feature matrices.
    std::vector<std::size_t> feature_mask;
    Normalizer normalizer;

    std::size_t dimension() const noexcept { return support_vectors.cols(); }
};

struct SmoOptions {
    // Stop when nu*n*(max_{a>0} G - min_{a<C} G) <= kkt_tol, i.e. the maximal
    // pair violation measured with the dual rescaled so that a_i in [0, 1].
    double kkt_tol = 1e-3;
    std::size_t max_iter = 10'000'000;
    std::size_t cache_bytes = 200u << 20;
};

struct SmoStats {
    std::size_t iterations = 0;
    double residual = 0.0;  // final scaled KKT violation
    double objective = 0.0;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, TrainedModel best, double residual)
        : std::runtime_error(what), best_(std::move(best)), residual_(residual) {}
    const TrainedModel& best_iterate() const noexcept { return best_; }
    double residual() const noexcept { return residual_; }

private:
    TrainedModel best_;
    double residual_;
};

/// SMO with maximal-violating-pair selection. Throws std::invalid_argument
/// when nu*n < 1, n < 2 or inputs are not finite; ConvergenceError after
/// max_iter pair updates.
TrainedModel train_ocsvm(const Matrix& points, double nu, double gamma,
                         const SmoOptions& options = {}, SmoStats* stats = nullptr);

/// sum_i a_i K(s_i, x) - b. Values within 1e-11 (relative) of zero are
/// returned as exactly 0: free support vectors land there.
double decision_value(const TrainedModel& model, std::span<const double> x);

/// +1 (normal) when decision_value >= 0, otherwise -1.
int classify(const TrainedModel& model, std::span<const double> x);

/// 1/2 a^T Q a over the support vectors of `model`.
double dual_objective(const TrainedModel& model);

/// Dense primal active-set solve of the same dual. Test-scale oracle only:
/// n <= 50, else std::invalid_argument.
TrainedModel qp_reference_solve(const Matrix& points, double nu, double gamma);

namespace detail {
/// Builds a model from a full dual vector: drops zero coefficients and
/// derives the offset from the free support vectors.
TrainedModel finalize_model(const Matrix& points, const std::vector<double>& alphas, double nu,
                            double gamma);
}  // namespace detail

}  // namespace ocsvm_cpd
