#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "tacit/error.hpp"
#include "tacit/rng.hpp"
#include "tacit/tensor.hpp"

namespace tacit {

/// Central-difference gradient probe. The forward functional is evaluated in
/// f64 (the "shadow" path); analytic gradients under test may come from an f32
/// or f64 graph, cast to double by the caller. Probed entries are chosen by
/// the given generator; parameters are perturbed in place and restored.
///
/// Returns the max relative error over all probes. The denominator is floored
/// at `denom_floor`: central differences cannot resolve derivatives below
/// roughly eps * |f| / h, so near-zero pairs below the floor count as
/// agreement instead of amplifying cancellation noise.
/// Throws if two base evaluations disagree (non-deterministic forward).
inline double finite_diff_check(const std::function<double()>& forward,
                                const std::vector<Tensor<double>*>& params,
                                const std::vector<const Tensor<double>*>& analytic,
                                int probes_per_tensor, double h, Xoshiro256ss& rng,
                                double denom_floor = 1e-6) {
    require(params.size() == analytic.size(), ErrorCategory::invalid_argument,
            "finite_diff_check: list length mismatch");
    require(probes_per_tensor >= 1 && h > 0, ErrorCategory::invalid_argument,
            "finite_diff_check: bad probe count or step");

    const double base1 = forward();
    const double base2 = forward();
    require(base1 == base2, ErrorCategory::numeric_error,
            "non-deterministic forward detected (two evaluations differ)");

    double max_rel = 0;
    for (size_t ti = 0; ti < params.size(); ++ti) {
        Tensor<double>& p = *params[ti];
        const Tensor<double>& g = *analytic[ti];
        require(p.same_shape(g), ErrorCategory::invalid_argument,
                "finite_diff_check: gradient shape mismatch");
        if (p.numel() == 0) continue;
        for (int k = 0; k < probes_per_tensor; ++k) {
            const size_t j = static_cast<size_t>(rng.bounded(p.numel()));
            const double saved = p.data[j];
            p.data[j] = saved + h;
            const double f_plus = forward();
            p.data[j] = saved - h;
            const double f_minus = forward();
            p.data[j] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(g.data[j]), denom_floor});
            max_rel = std::max(max_rel, std::abs(fd - g.data[j]) / denom);
        }
    }
    return max_rel;
}

}  // namespace tacit
