#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "coattn/random.hpp"
#include "coattn/tensor.hpp"

namespace coattn::testing {

// Central finite differences, step 1e-5. `f` must re-run the forward pass
// from current tensor values and return the scalar loss; it must not record
// on any tape. This oracle is the independent reference every analytic
// gradient in the suite is checked against.
inline std::vector<double> finite_difference_grad(Tensor& param,
                                                  const std::function<double()>& f,
                                                  double step = 1e-5) {
    std::vector<double> out(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
        double keep = param.values()[i];
        param.values()[i] = keep + step;
        double hi = f();
        param.values()[i] = keep - step;
        double lo = f();
        param.values()[i] = keep;
        out[i] = (hi - lo) / (2.0 * step);
    }
    return out;
}

// The denominator floor absorbs central-difference cancellation noise, which
// is about |loss| * eps / (2 * step) ~ 1e-11 for unit-scale losses; mismatches
// below tol * floor are indistinguishable from that noise.
inline double rel_error(double analytic, double numeric, double floor = 3e-6) {
    double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
    return std::fabs(analytic - numeric) / denom;
}

// Max elementwise relative error between an analytic gradient buffer and the
// finite-difference estimate.
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& numeric, double floor = 3e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, rel_error(analytic[i], numeric[i], floor));
    return worst;
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t = Tensor::zeros(rows, cols);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline Tensor random_param(std::size_t rows, std::size_t cols, Rng& rng,
                           const std::string& name = "", double lo = -1.0, double hi = 1.0) {
    Tensor t = random_tensor(rows, cols, rng, lo, hi);
    t.set_requires_grad(true);
    if (!name.empty()) t.set_name(name);
    return t;
}

inline bool all_finite(const Tensor& t) {
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace coattn::testing
