#include "synthcp/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "synthcp/nn/ops.hpp"
#include "synthcp/rng.hpp"

namespace synthcp::nn {

Var<double> scalarize(const Var<double>& output, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> weights(output.shape());
    for (auto& w : weights.values()) w = rng.uniform(-1.0, 1.0);
    return sum_all(mul(output, Var<double>(std::move(weights))));
}

GradCheckResult check_gradients(const std::function<Var<double>()>& scalar_fn, const std::vector<Var<double>>& wrt,
                                const GradCheckOptions& options) {
    GradCheckResult result;
    for (const auto& v : wrt) {
        auto node = v.node();
        if (!node->grad.empty()) node->grad.fill(0.0);
    }

    const Var<double> out = scalar_fn();
    if (!std::isfinite(out.item())) {
        result.diagnostic = "non-finite function value";
        return result;
    }
    backward(out);

    for (const auto& v : wrt) {
        auto node = v.node();
        const std::size_t n = node->value.size();
        const std::vector<double> analytic = node->grad.empty()
                                                 ? std::vector<double>(n, 0.0)
                                                 : std::vector<double>(node->grad.storage().begin(), node->grad.storage().end());

        std::vector<std::size_t> probes;
        if (options.max_entries_per_var == 0 || options.max_entries_per_var >= n) {
            probes.resize(n);
            for (std::size_t i = 0; i < n; ++i) probes[i] = i;
        } else {
            const std::size_t m = options.max_entries_per_var;
            for (std::size_t k = 0; k < m; ++k) probes.push_back(k * n / m);
        }

        for (std::size_t i : probes) {
            double& x = node->value[i];
            const double saved = x;
            double plus = 0.0;
            double minus = 0.0;
            {
                NoGradGuard guard;
                x = saved + options.step;
                plus = scalar_fn().item();
                x = saved - options.step;
                minus = scalar_fn().item();
            }
            x = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(analytic[i])) {
                result.diagnostic = "non-finite value during finite differencing";
                result.pass = false;
                return result;
            }
            const double numeric = (plus - minus) / (2.0 * options.step);
            const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), options.denom_floor});
            result.max_rel_error = std::max(result.max_rel_error, std::abs(numeric - analytic[i]) / denom);
            ++result.entries_checked;
        }
    }
    result.pass = result.max_rel_error < options.tolerance;
    return result;
}

}  // namespace synthcp::nn
