#pragma once

// Central finite-difference gradient checking shared by the model test
// suites: perturb randomly probed coordinates with step h and compare against
// the analytic gradient at relative tolerance rtol.

#include "reba/nn.hpp"
#include "reba/rng.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace reba::testutil {

struct FdFailure {
    std::size_t block = 0, index = 0;
    double analytic = 0.0, numeric = 0.0;
};

// loss(): evaluates the objective at the current parameters (no gradients).
// grad_of(): returns the analytic gradient for (block, index); it must leave
// the parameters untouched.
inline std::vector<FdFailure> fd_check(const std::vector<nn::ParamBlock>& blocks,
                                       const std::function<double()>& loss,
                                       const std::function<double(std::size_t, std::size_t)>& grad_of,
                                       int probes, std::uint64_t seed, double h = 1e-4,
                                       double rtol = 1e-3) {
    std::vector<FdFailure> failures;
    Rng rng(seed);
    std::size_t total = 0;
    for (const auto& b : blocks) total += b.n;
    for (int probe = 0; probe < probes; ++probe) {
        std::size_t flat = std::size_t(rng.next_below(total));
        std::size_t block = 0;
        while (flat >= blocks[block].n) {
            flat -= blocks[block].n;
            ++block;
        }
        double& p = blocks[block].p[flat];
        const double saved = p;
        p = saved + h;
        const double up = loss();
        p = saved - h;
        const double down = loss();
        p = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = grad_of(block, flat);
        const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-8});
        if (std::fabs(numeric - analytic) / denom > rtol)
            failures.push_back({block, flat, analytic, numeric});
    }
    return failures;
}

} // namespace reba::testutil
