#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "synthcp/nn/autograd.hpp"

namespace synthcp::nn {

struct GradCheckResult {
    bool pass = false;
    double max_rel_error = 0.0;
    std::size_t entries_checked = 0;
    // Set when the check could not be evaluated (non-finite values).
    std::string diagnostic;
};

struct GradCheckOptions {
    double tolerance = 1e-3;
    double step = 1e-5;
    // Entries probed per variable; 0 probes every entry.
    std::size_t max_entries_per_var = 0;
    // Relative error denominator floor.
    double denom_floor = 1e-6;
};

// Compares the analytic gradient of `scalar_fn` with central finite
// differences for every variable in `wrt`.
GradCheckResult check_gradients(const std::function<Var<double>()>& scalar_fn, const std::vector<Var<double>>& wrt,
                                const GradCheckOptions& options = {});

// Reduces a non-scalar output to a scalar by a fixed pseudo-random projection,
// so all output entries contribute to the checked gradient.
Var<double> scalarize(const Var<double>& output, std::uint64_t seed = 7);

}  // namespace synthcp::nn
