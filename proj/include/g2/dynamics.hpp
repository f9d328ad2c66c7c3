#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2/coupling.hpp"
#include "g2/graph.hpp"
#include "g2/matrix.hpp"
#include "g2/rng.hpp"

namespace g2 {

struct OdeState {
    double t = 0.0;
    Matrix x;
};

struct IntegrationError : std::runtime_error {
    std::size_t step;
    explicit IntegrationError(std::size_t step_)
        : std::runtime_error("non-finite state at integration step " + std::to_string(step_)),
          step(step_) {}
};

/// Generic explicit Euler step: x <- x + dt * rhs(x).
inline void euler_step(OdeState& state, double dt,
                       const std::function<Matrix(const Matrix&)>& rhs) {
    if (dt <= 0.0 || dt >= 1.0) throw std::invalid_argument("euler_step: dt must be in (0,1)");
    Matrix r = rhs(state.x);
    r *= dt;
    state.x += r;
    state.t += dt;
}

struct EnergySample {
    double t = 0.0;       // time, or layer index for discrete series
    double energy = 0.0;
};

using EnergySeries = std::vector<EnergySample>;

/// Configuration of one steady-state perturbation experiment: the deviation
/// field is initialized i.i.d. uniform in [-epsilon, epsilon], the clamped
/// node is pinned to 0 (the node known to sit exactly at the steady state),
/// and the squared-deviation energy sum_i x_i^2 is sampled along the flow.
struct PerturbationRun {
    const Graph* graph = nullptr;
    StochasticMatrix coupling;
    double p = 0.0;              // 0 = linearized system
    NodeId clamped_node = 0;
    double epsilon = 1e-3;
    double dt = 1e-3;
    double horizon = 50.0;
    std::uint64_t seed = 0;
    std::size_t max_samples = 20000;
    /// optional explicit initial deviation (clamped node still zeroed);
    /// empty = i.i.d. uniform in [-epsilon, epsilon] from `seed`
    std::vector<double> x0_override;
    /// optional per-sample state observer (t, deviation field)
    std::function<void(double, const std::vector<double>&)> observer;

    void validate() const {
        if (!x0_override.empty() && graph && x0_override.size() != graph->num_nodes())
            throw std::invalid_argument("perturbation run: x0 override length mismatch");
        if (!graph) throw std::invalid_argument("perturbation run: graph not set");
        if (epsilon <= 0.0 || epsilon > 1e-2)
            throw std::invalid_argument("perturbation run: epsilon must be in (0, 1e-2]");
        if (dt <= 0.0 || dt >= 1.0)
            throw std::invalid_argument("perturbation run: dt must be in (0,1)");
        if (horizon <= dt) throw std::invalid_argument("perturbation run: horizon too short");
        if (clamped_node >= graph->num_nodes())
            throw std::invalid_argument("perturbation run: clamped node out of range");
    }
};

namespace detail {

inline std::vector<double> perturbation_init(const PerturbationRun& run) {
    std::vector<double> x;
    if (!run.x0_override.empty()) {
        x = run.x0_override;
    } else {
        Rng rng(run.seed);
        x.resize(run.graph->num_nodes());
        for (double& v : x) v = rng.uniform(-run.epsilon, run.epsilon);
    }
    x[run.clamped_node] = 0.0;
    return x;
}

inline double deviation_energy(const std::vector<double>& x) {
    double e = 0.0;
    for (double v : x) e += v * v;
    return e;
}

template <class Rhs>
EnergySeries integrate_perturbation(const PerturbationRun& run, Rhs rhs) {
    const auto steps = static_cast<std::size_t>(std::llround(run.horizon / run.dt));
    const std::size_t stride = std::max<std::size_t>(1, steps / run.max_samples);
    std::vector<double> x = perturbation_init(run);
    std::vector<double> dxdt(x.size());
    EnergySeries series;
    series.push_back({0.0, deviation_energy(x)});
    if (run.observer) run.observer(0.0, x);
    for (std::size_t n = 1; n <= steps; ++n) {
        rhs(x, dxdt);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += run.dt * dxdt[i];
        x[run.clamped_node] = 0.0;  // boundary condition of the perturbation setup
        if (n % stride == 0 || n == steps) {
            const double e = deviation_energy(x);
            if (!std::isfinite(e)) throw IntegrationError(n);
            series.push_back({static_cast<double>(n) * run.dt, e});
            if (run.observer) run.observer(static_cast<double>(n) * run.dt, x);
        }
    }
    return series;
}

}  // namespace detail

/// Linearized perturbation flow around the homogeneous steady state:
/// dx_i/dt = sum_{j in N_i} A_ij (x_j - x_i), with the clamped node held at
/// 0. Requires a symmetric coupling (the stability theory's assumption).
inline EnergySeries simulate_linearized(const PerturbationRun& run) {
    run.validate();
    if (run.p != 0.0) throw std::invalid_argument("simulate_linearized: requires p = 0");
    if (!run.coupling.is_symmetric())
        throw std::invalid_argument("simulate_linearized: coupling must be symmetric");
    const Graph& g = *run.graph;
    return detail::integrate_perturbation(
        run, [&](const std::vector<double>& x, std::vector<double>& dxdt) {
            const auto& offsets = g.row_offsets();
            for (NodeId i = 0; i < g.num_nodes(); ++i) {
                double s = 0.0;
                auto nb = g.neighbors(i);
                for (std::size_t k = 0; k < nb.size(); ++k)
                    s += run.coupling.entries[offsets[i] + k] * (x[nb[k]] - x[i]);
                dxdt[i] = s;
            }
        });
}

/// Gated perturbation flow: dx_i/dt = r_i * sum_j A_ij (x_j - x_i) with the
/// state-dependent rate r_i = sum_{j in N_i} |x_j - x_i|^p. Near the steady
/// state the rate itself vanishes, which is what slows the decay from
/// exponential to algebraic.
inline EnergySeries simulate_quasilinear(const PerturbationRun& run) {
    run.validate();
    if (run.p <= 0.0) throw std::invalid_argument("simulate_quasilinear: requires p > 0");
    if (!run.coupling.is_symmetric())
        throw std::invalid_argument("simulate_quasilinear: coupling must be symmetric");
    const Graph& g = *run.graph;
    return detail::integrate_perturbation(
        run, [&](const std::vector<double>& x, std::vector<double>& dxdt) {
            const auto& offsets = g.row_offsets();
            for (NodeId i = 0; i < g.num_nodes(); ++i) {
                auto nb = g.neighbors(i);
                double rate = 0.0, s = 0.0;
                for (std::size_t k = 0; k < nb.size(); ++k) {
                    const double d = x[nb[k]] - x[i];
                    rate += std::pow(std::abs(d), run.p);
                    s += run.coupling.entries[offsets[i] + k] * d;
                }
                dxdt[i] = rate * s;
            }
        });
}

// ---------------------------------------------------------------------------
// Theory envelopes
// ---------------------------------------------------------------------------

/// Structural constants of a perturbation instance used by the decay bounds.
struct EnvelopeConstants {
    double a_min = 0.0;   // minimum coupling entry
    double d_max = 0.0;   // maximum degree
    double ecc = 0.0;     // eccentricity of the clamped node
    double v = 0.0;       // node count
};

inline EnvelopeConstants envelope_constants(const PerturbationRun& run) {
    return {run.coupling.min_entry, static_cast<double>(run.graph->max_degree()),
            static_cast<double>(run.graph->eccentricity(run.clamped_node)),
            static_cast<double>(run.graph->num_nodes())};
}

/// Exponential bound for the linearized flow:
/// E(t) <= E(0) * exp(-a_min * t / (d_max * ecc)).
inline double exponential_envelope(const EnvelopeConstants& c, double e0, double t) {
    return e0 * std::exp(-c.a_min * t / (c.d_max * c.ecc));
}

/// Algebraic bound for the gated flow:
/// E(t) <= E(0) * (1 + (p/2) * K * E(0)^{p/2} * t)^{-2/p},
/// K = a_min / (d_max^{p+1} * v^{p/2} * ecc^{(p+2)/2}).
/// This is the closed-form solution of dE/dt <= -K E^{1+p/2}, which the
/// energy estimate yields; it equals E(0) at t = 0 and decays like t^{-2/p}.
inline double algebraic_envelope(const EnvelopeConstants& c, double p, double e0, double t) {
    const double k = c.a_min / (std::pow(c.d_max, p + 1.0) * std::pow(c.v, p / 2.0) *
                                std::pow(c.ecc, (p + 2.0) / 2.0));
    return e0 * std::pow(1.0 + 0.5 * p * k * std::pow(e0, p / 2.0) * t, -2.0 / p);
}

/// True iff energy <= slack * envelope at every sample.
template <class Envelope>
bool envelope_holds(const EnergySeries& series, Envelope env, double slack = 1.05) {
    if (series.empty()) return false;
    const double e0 = series.front().energy;
    for (const auto& s : series)
        if (s.energy > slack * env(e0, s.t)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Decay fitting and the oversmoothing verdict
// ---------------------------------------------------------------------------

enum class DecayModel { exponential, power_law };

struct DecayFit {
    DecayModel model = DecayModel::exponential;
    double rate_or_exponent = 0.0;  // exponential: decay rate (>0 = decaying);
                                    // power law: exponent of t (<0 = decaying)
    double r_squared = 0.0;
    double t_lo = 0.0, t_hi = 0.0;
};

/// Least-squares fit of log E against t (exponential, E ~ e^{-rate t}) or
/// log t (power law, E ~ t^{exponent}) over samples with t in [t_lo, t_hi].
inline DecayFit fit_decay(const EnergySeries& series, DecayModel model, double t_lo,
                          double t_hi) {
    std::vector<double> xs, ys;
    for (const auto& s : series) {
        if (s.t < t_lo || s.t > t_hi) continue;
        if (s.energy <= 0.0)
            throw std::invalid_argument("fit_decay: nonpositive energy in fit window");
        if (model == DecayModel::power_law && s.t <= 0.0) continue;
        xs.push_back(model == DecayModel::exponential ? s.t : std::log(s.t));
        ys.push_back(std::log(s.energy));
    }
    if (xs.size() < 10)
        throw std::invalid_argument("fit_decay: need at least 10 samples in window");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    DecayFit fit;
    fit.model = model;
    fit.t_lo = t_lo;
    fit.t_hi = t_hi;
    const double slope = sxy / sxx;
    fit.rate_or_exponent = model == DecayModel::exponential ? -slope : slope;
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

/// Convenience: fit over the last decade of positive time (asymptotic window
/// for the algebraic regime).
inline DecayFit fit_decay_last_decade(const EnergySeries& series, DecayModel model) {
    const double t_hi = series.back().t;
    return fit_decay(series, model, t_hi / 10.0, t_hi);
}

enum class Verdict { exponential_decay, algebraic_decay, non_decaying };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::exponential_decay: return "exponential_decay";
        case Verdict::algebraic_decay: return "algebraic_decay";
        case Verdict::non_decaying: return "non_decaying";
    }
    return "?";
}

/// Classifies an energy series. Thresholds: exponential if the exponential
/// fit over the above-floor prefix has r^2 >= 0.95 and terminal/initial
/// energy < 1e-4 (or the series collapses through its resolution floor);
/// non-decaying if
/// terminal/initial is within [0.1, 10]; otherwise algebraic if the
/// power-law fit reaches r^2 >= 0.9, else whichever of the two decay shapes
/// fits better.
inline Verdict oversmoothing_verdict(const EnergySeries& series) {
    if (series.size() < 3 || series.front().energy <= 0.0)
        throw std::invalid_argument("oversmoothing_verdict: degenerate series");
    const double e0 = series.front().energy;
    const double ratio = series.back().energy / e0;

    // fit only the prefix above the resolution floor: deep nets can hit exact
    // zero, and cosine-based metrics bottom out in rounding noise around
    // 1e-13, which would otherwise poison a log-space fit
    EnergySeries positive;
    for (const auto& s : series) {
        if (s.energy <= 0.0 || s.energy < e0 * 1e-10) break;
        positive.push_back(s);
    }
    auto try_fit = [&](DecayModel m) -> double {
        try {
            return fit_decay(positive, m, positive.front().t, positive.back().t).r_squared;
        } catch (const std::invalid_argument&) {
            return -1.0;
        }
    };
    const double r2_exp = try_fit(DecayModel::exponential);
    const double r2_pow = try_fit(DecayModel::power_law);

    if (ratio < 1e-4 && (r2_exp >= 0.95 || positive.size() < series.size()))
        return Verdict::exponential_decay;
    if (ratio >= 0.1 && ratio <= 10.0) return Verdict::non_decaying;
    if (r2_pow >= 0.9 && r2_pow >= r2_exp) return Verdict::algebraic_decay;
    return r2_exp >= r2_pow ? Verdict::exponential_decay : Verdict::algebraic_decay;
}

// ---------------------------------------------------------------------------
// Series I/O
// ---------------------------------------------------------------------------

inline void save_energy_series(const EnergySeries& series, const std::string& path,
                               const std::string& t_column = "t") {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write series: " + path);
    out.precision(17);
    out << t_column << ",energy\n";
    for (const auto& s : series) out << s.t << "," << s.energy << "\n";
}

}  // namespace g2
