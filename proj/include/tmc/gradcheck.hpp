#pragma once

// Central finite differences against reverse-mode gradients.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tmc/tensor.hpp"

namespace tmc {

struct GradCheckReport {
    double max_rel_err = 0.0;
    size_t worst_input = 0;
    int64_t worst_coord = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int64_t coords_checked = 0;
};

// f must rebuild a scalar-valued graph from the current values of `inputs`
// each time it is called. Set coords_per_input > 0 to check a deterministic
// random sample of coordinates per input instead of a full sweep.
inline GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                  double eps = 1e-5, int coords_per_input = 0,
                                  uint64_t sample_seed = 0) {
    if (eps < 1e-7 || eps > 1e-3)
        throw std::invalid_argument("grad_check: eps " + std::to_string(eps) +
                                    " outside [1e-7, 1e-3]");
    for (auto& in : inputs) in.set_requires_grad(true);

    auto run_scalar = [&]() {
        Tensor y = f();
        if (y.numel() != 1)
            throw std::invalid_argument("rank error: grad_check needs a scalar-valued f");
        return y;
    };

    {
        Tensor y0 = run_scalar();
        Tensor y1 = run_scalar();
        if (y0.values() != y1.values())
            throw std::runtime_error("determinism error: two forward passes disagree (" +
                                     std::to_string(y0.item()) + " vs " +
                                     std::to_string(y1.item()) + ")");
    }

    Tensor y = run_scalar();
    y.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& in : inputs) analytic.push_back(in.grad());

    GradCheckReport rep;
    std::mt19937_64 rng(sample_seed);
    for (size_t t = 0; t < inputs.size(); ++t) {
        auto& vals = inputs[t].mutable_values();
        std::vector<int64_t> coords;
        int64_t n = static_cast<int64_t>(vals.size());
        if (coords_per_input > 0 && n > coords_per_input) {
            for (int c = 0; c < coords_per_input; ++c)
                coords.push_back(static_cast<int64_t>(rng() % static_cast<uint64_t>(n)));
        } else {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        }
        for (int64_t i : coords) {
            double keep = vals[static_cast<size_t>(i)];
            vals[static_cast<size_t>(i)] = keep + eps;
            double fp = run_scalar().item();
            vals[static_cast<size_t>(i)] = keep - eps;
            double fm = run_scalar().item();
            vals[static_cast<size_t>(i)] = keep;
            double numeric = (fp - fm) / (2.0 * eps);
            double a = analytic[t][static_cast<size_t>(i)];
            double rel =
                std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            ++rep.coords_checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_input = t;
                rep.worst_coord = i;
                rep.worst_analytic = a;
                rep.worst_numeric = numeric;
            }
        }
    }
    return rep;
}

}  // namespace tmc
