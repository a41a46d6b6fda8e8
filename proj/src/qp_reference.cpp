// Dense primal active-set solver for the one-class dual. Used as an
// independent oracle for the SMO path, so it shares nothing with it beyond
// the kernel and the offset rule in finalize_model.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ocsvm_cpd/svm.hpp"

namespace ocsvm_cpd {

namespace {

enum class Status { free, at_zero, at_bound };

constexpr double kStepTol = 1e-15;
constexpr double kMultiplierTol = 1e-13;

}  // namespace

TrainedModel qp_reference_solve(const Matrix& points, double nu, double gamma) {
    const std::size_t n = points.rows();
    if (n > 50) throw std::invalid_argument("qp_reference_solve: n > 50 is not supported");
    if (n < 2) throw std::invalid_argument("qp_reference_solve: need at least 2 points");
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("nu must lie in (0, 1]");
    if (nu * static_cast<double>(n) < 1.0) throw std::invalid_argument("nu * n < 1");

    const double bound = 1.0 / (nu * static_cast<double>(n));
    const Matrix gram = gram_matrix(points, gamma);
    Eigen::MatrixXd q(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) q(i, j) = gram(i, j);

    // Uniform start is feasible because 1/n <= 1/(nu n).
    Eigen::VectorXd alpha = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    std::vector<Status> status(n, Status::free);
    if (1.0 / static_cast<double>(n) >= bound) {
        alpha.setConstant(bound);
        std::fill(status.begin(), status.end(), Status::at_bound);
    }

    // Set after an unblocked step: the iterate then minimizes over the working
    // set and only the multipliers remain to be checked.
    bool stationary = false;
    for (int iter = 0; iter < 100000; ++iter) {
        const Eigen::VectorXd grad = q * alpha;
        std::vector<Eigen::Index> free_set;
        for (std::size_t i = 0; i < n; ++i)
            if (status[i] == Status::free) free_set.push_back(static_cast<Eigen::Index>(i));
        const auto nf = static_cast<Eigen::Index>(free_set.size());

        // Equality-constrained step on the free set: Q_FF p - lambda 1 = -g_F, 1^T p = 0.
        Eigen::VectorXd p = Eigen::VectorXd::Zero(nf);
        if (nf > 0 && !stationary) {
            Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + 1, nf + 1);
            Eigen::VectorXd rhs(nf + 1);
            for (Eigen::Index a = 0; a < nf; ++a) {
                for (Eigen::Index b = 0; b < nf; ++b) kkt(a, b) = q(free_set[a], free_set[b]);
                kkt(a, nf) = -1.0;
                kkt(nf, a) = 1.0;
                rhs(a) = -grad(free_set[a]);
            }
            rhs(nf) = 0.0;
            const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
            p = sol.head(nf);
        }

        if (stationary || p.lpNorm<Eigen::Infinity>() <= kStepTol) {
            stationary = false;
            // Stationary on the working set: check the bound multipliers.
            double lambda = 0.0;
            if (nf > 0) {
                double mean = 0.0;
                for (auto i : free_set) mean += grad(i);
                lambda = mean / static_cast<double>(nf);
            }
            std::size_t worst = n;
            double worst_mult = -kMultiplierTol;
            double lb = -std::numeric_limits<double>::infinity();
            double ub = std::numeric_limits<double>::infinity();
            std::size_t arg_lb = n, arg_ub = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (status[i] == Status::at_zero && grad(i) < ub) {
                    ub = grad(i);
                    arg_ub = i;
                }
                if (status[i] == Status::at_bound && grad(i) > lb) {
                    lb = grad(i);
                    arg_lb = i;
                }
                if (nf == 0) continue;
                const double mult = status[i] == Status::at_zero    ? grad(i) - lambda
                                    : status[i] == Status::at_bound ? lambda - grad(i)
                                                                    : 0.0;
                if (mult < worst_mult) {
                    worst_mult = mult;
                    worst = i;
                }
            }
            if (nf == 0) {
                // No free variable: optimal iff some lambda separates the two sets.
                if (lb <= ub + kMultiplierTol || arg_lb == n || arg_ub == n) break;
                status[arg_lb] = Status::free;
                status[arg_ub] = Status::free;
                continue;
            }
            if (worst == n) break;
            status[worst] = Status::free;
            continue;
        }

        // Ratio test against the box.
        double step = 1.0;
        Eigen::Index blocking = -1;
        bool to_bound = false;
        for (Eigen::Index a = 0; a < nf; ++a) {
            const double x = alpha(free_set[a]);
            if (p(a) < 0.0) {
                const double t = -x / p(a);
                if (t < step) {
                    step = t;
                    blocking = a;
                    to_bound = false;
                }
            } else if (p(a) > 0.0) {
                const double t = (bound - x) / p(a);
                if (t < step) {
                    step = t;
                    blocking = a;
                    to_bound = true;
                }
            }
        }
        for (Eigen::Index a = 0; a < nf; ++a) alpha(free_set[a]) += step * p(a);
        if (blocking >= 0) {
            const auto i = static_cast<std::size_t>(free_set[blocking]);
            alpha(free_set[blocking]) = to_bound ? bound : 0.0;
            status[i] = to_bound ? Status::at_bound : Status::at_zero;
        } else {
            stationary = true;
        }
    }

    std::vector<double> result(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (status[i] == Status::at_zero) result[i] = 0.0;
        else if (status[i] == Status::at_bound) result[i] = bound;
        else result[i] = std::clamp(alpha(static_cast<Eigen::Index>(i)), 0.0, bound);
    }
    return detail::finalize_model(points, result, nu, gamma);
}

}  // namespace ocsvm_cpd
