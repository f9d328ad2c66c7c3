#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "g2/rng.hpp"
#include "g2/tape.hpp"

namespace g2::ad {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // components near kinks (one-sided derivatives disagree)
};

/// Compares reverse-mode gradients against central finite differences on a
/// random sample of parameter components (5%, at least 50 per parameter's
/// share). `forward` must rebuild the scalar loss from the current parameter
/// values on the given tape, purely and deterministically (dropout off).
///
/// Components where the two one-sided difference quotients disagree by more
/// than 10% relative are skipped as non-differentiable points (ties in max
/// aggregation, relu/abs kinks) rather than failed.
inline GradCheckReport grad_check(const std::function<Value(Tape&)>& forward,
                                  std::vector<Parameter*> params, double tolerance,
                                  std::uint64_t seed = 0, double h = 1e-6) {
    // analytic gradients
    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        Value loss = forward(tape);
        tape.backward(loss);
    }
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    auto eval = [&]() {
        Tape tape;
        return tape.value(forward(tape))(0, 0);
    };

    Rng rng(seed);
    GradCheckReport report;
    std::size_t total = 0;
    for (Parameter* p : params) total += p->count();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        const std::size_t n = p.count();
        std::size_t sample = std::max<std::size_t>(
            std::min<std::size_t>(n, 50),
            static_cast<std::size_t>(0.05 * static_cast<double>(n)));
        sample = std::min(sample, n);
        // sample distinct flat indices
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < sample; ++i)
            std::swap(idx[i], idx[i + rng.below(n - i)]);
        idx.resize(sample);

        double* data = p.value.data();
        const double* grad = analytic[pi].data();
        for (std::size_t k : idx) {
            const double saved = data[k];
            data[k] = saved + h;
            const double fp = eval();
            data[k] = saved - h;
            const double fm = eval();
            data[k] = saved;
            const double f0 = eval();
            const double right = (fp - f0) / h;
            const double left = (f0 - fm) / h;
            const double scale = std::max({std::abs(right), std::abs(left), 1e-8});
            if (std::abs(right - left) > 0.1 * scale) {
                ++report.skipped;  // sitting on a kink; central difference unreliable
                continue;
            }
            const double fd = (fp - fm) / (2.0 * h);
            if (std::abs(fd) <= 1e-7 && std::abs(grad[k]) <= 1e-7) {
                ++report.checked;  // both vanish within finite-difference noise
                continue;
            }
            const double rel =
                std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-8});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.checked;
        }
    }
    report.pass = report.checked > 0 && report.max_rel_err < tolerance;
    return report;
}

}  // namespace g2::ad
