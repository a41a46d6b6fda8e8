#pragma once

// Helpers and brute-force oracles shared by the test binaries. Nothing here
// calls into the code paths it is used to check.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ocsvm_cpd/matrix.hpp"
#include "ocsvm_cpd/rng.hpp"

namespace test_util {

inline ocsvm_cpd::Matrix gaussian_points(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
    ocsvm_cpd::Rng rng(seed);
    ocsvm_cpd::Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = scale * rng.normal();
    return m;
}

/// Earliest c in [1, T-1] minimizing (#zeros in 1..c) + (#ones in c+1..T),
/// counted from scratch for every candidate.
inline std::size_t brute_force_change_point(const std::vector<int>& labels) {
    const std::size_t T = labels.size();
    std::size_t best_c = 0;
    std::size_t best = T + 1;
    for (std::size_t c = 1; c < T; ++c) {
        std::size_t mismatch = 0;
        for (std::size_t t = 0; t < T; ++t) {
            const int hyp = t < c ? 1 : 0;
            if (labels[t] != hyp) ++mismatch;
        }
        if (mismatch < best) {
            best = mismatch;
            best_c = c;
        }
    }
    return best_c;
}

}  // namespace test_util
