#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2/coupling.hpp"
#include "g2/diagnostics.hpp"
#include "g2/graph.hpp"
#include "g2/ops.hpp"
#include "g2/tape.hpp"

#include "json.hpp"

namespace g2 {

/// Update-rule family of one message-passing layer.
///  - plain:          X' = act(F(X))
///  - residual:       X' = X + act(F(X))
///  - multirate:      X' = (1-tau).X + tau.act(F(X)), tau = logistic(Fhat(X))
///  - g2:             as multirate, but tau gated by neighborhood gradients
///                    of tau_hat = logistic(Fhat(X))
///  - g2_alpha:       g2 with tau replaced by tau^alpha
///  - g2_single_rate: g2 with one rate per node (p-norm across channels)
enum class G2Mode { plain, residual, multirate, g2, g2_alpha, g2_single_rate };

enum class Activation { relu, tanh };

inline bool is_gated(G2Mode m) {
    return m == G2Mode::multirate || m == G2Mode::g2 || m == G2Mode::g2_alpha ||
           m == G2Mode::g2_single_rate;
}

inline bool uses_gradient_gating(G2Mode m) {
    return m == G2Mode::g2 || m == G2Mode::g2_alpha || m == G2Mode::g2_single_rate;
}

struct G2Config {
    G2Mode mode = G2Mode::g2;
    double p = 2.0;        // gradient exponent (g2 family)
    double alpha = 1.0;    // rate modulation (g2_alpha)
    ad::Aggregation aggregation = ad::Aggregation::sum;  // gating sum
    bool use_separate_Fhat = false;
    Activation activation = Activation::relu;
    std::size_t num_layers = 1;
    CouplingConfig coupling;
    CouplingConfig coupling_hat;  // used when use_separate_Fhat

    void validate() const {
        if (uses_gradient_gating(mode) && p <= 0.0)
            throw std::invalid_argument("g2 config: p must be positive");
        if (alpha < 0.0 || alpha > 1.0)
            throw std::invalid_argument("g2 config: alpha must be in [0,1]");
        if (num_layers < 1) throw std::invalid_argument("g2 config: num_layers must be >= 1");
        coupling.validate();
        if (use_separate_Fhat) {
            coupling_hat.validate();
            if (coupling_hat.in_dim != coupling.in_dim ||
                coupling_hat.out_dim != coupling.out_dim)
                throw std::invalid_argument("g2 config: Fhat dims must match F dims");
        }
    }
};

// ---------------------------------------------------------------------------
// JSON config round-trip (unknown keys rejected)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string to_string(G2Mode m) {
    switch (m) {
        case G2Mode::plain: return "plain";
        case G2Mode::residual: return "residual";
        case G2Mode::multirate: return "multirate";
        case G2Mode::g2: return "g2";
        case G2Mode::g2_alpha: return "g2_alpha";
        case G2Mode::g2_single_rate: return "g2_single_rate";
    }
    return "?";
}

inline G2Mode mode_from_string(const std::string& s) {
    if (s == "plain") return G2Mode::plain;
    if (s == "residual") return G2Mode::residual;
    if (s == "multirate") return G2Mode::multirate;
    if (s == "g2") return G2Mode::g2;
    if (s == "g2_alpha") return G2Mode::g2_alpha;
    if (s == "g2_single_rate") return G2Mode::g2_single_rate;
    throw std::invalid_argument("unknown mode: " + s);
}

inline std::string to_string(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation: " + s);
}

inline std::string to_string(ad::Aggregation a) {
    switch (a) {
        case ad::Aggregation::sum: return "sum";
        case ad::Aggregation::mean: return "mean";
        case ad::Aggregation::max: return "max";
    }
    return "?";
}

inline ad::Aggregation aggregation_from_string(const std::string& s) {
    if (s == "sum") return ad::Aggregation::sum;
    if (s == "mean") return ad::Aggregation::mean;
    if (s == "max") return ad::Aggregation::max;
    throw std::invalid_argument("unknown aggregation: " + s);
}

inline std::string to_string(CouplingKind k) {
    switch (k) {
        case CouplingKind::gcn: return "gcn";
        case CouplingKind::gat: return "gat";
        case CouplingKind::sage: return "sage";
    }
    return "?";
}

inline CouplingKind coupling_kind_from_string(const std::string& s) {
    if (s == "gcn") return CouplingKind::gcn;
    if (s == "gat") return CouplingKind::gat;
    if (s == "sage") return CouplingKind::sage;
    throw std::invalid_argument("unknown coupling kind: " + s);
}

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::vector<std::string>& known,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw std::invalid_argument("unknown key in " + where + ": " + it.key());
}

inline nlohmann::json coupling_to_json(const CouplingConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"in_dim", c.in_dim},
            {"out_dim", c.out_dim},
            {"aggregation", to_string(c.aggregation)},
            {"attention_dim", c.attention_dim}};
}

inline CouplingConfig coupling_from_json(const nlohmann::json& j, const std::string& where) {
    reject_unknown_keys(j, {"kind", "in_dim", "out_dim", "aggregation", "attention_dim"},
                        where);
    CouplingConfig c;
    c.kind = coupling_kind_from_string(j.at("kind").get<std::string>());
    c.in_dim = j.at("in_dim").get<std::size_t>();
    c.out_dim = j.at("out_dim").get<std::size_t>();
    if (j.contains("aggregation"))
        c.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
    if (j.contains("attention_dim")) c.attention_dim = j.at("attention_dim").get<std::size_t>();
    return c;
}

}  // namespace detail

inline nlohmann::json to_json(const G2Config& c) {
    nlohmann::json j{{"mode", detail::to_string(c.mode)},
                     {"p", c.p},
                     {"alpha", c.alpha},
                     {"aggregation", detail::to_string(c.aggregation)},
                     {"use_separate_Fhat", c.use_separate_Fhat},
                     {"activation", detail::to_string(c.activation)},
                     {"num_layers", c.num_layers},
                     {"coupling", detail::coupling_to_json(c.coupling)}};
    if (c.use_separate_Fhat) j["coupling_hat"] = detail::coupling_to_json(c.coupling_hat);
    return j;
}

inline G2Config g2_config_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j,
                                {"mode", "p", "alpha", "aggregation", "use_separate_Fhat",
                                 "activation", "num_layers", "coupling", "coupling_hat"},
                                "model config");
    G2Config c;
    c.mode = detail::mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("p")) c.p = j.at("p").get<double>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("aggregation"))
        c.aggregation = detail::aggregation_from_string(j.at("aggregation").get<std::string>());
    if (j.contains("use_separate_Fhat"))
        c.use_separate_Fhat = j.at("use_separate_Fhat").get<bool>();
    if (j.contains("activation"))
        c.activation = detail::activation_from_string(j.at("activation").get<std::string>());
    if (j.contains("num_layers")) c.num_layers = j.at("num_layers").get<std::size_t>();
    c.coupling = detail::coupling_from_json(j.at("coupling"), "coupling");
    if (c.use_separate_Fhat)
        c.coupling_hat = detail::coupling_from_json(j.at("coupling_hat"), "coupling_hat");
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Layer parameters and stepping
// ---------------------------------------------------------------------------

/// Parameters of one gating layer: the coupling F and, when configured,
/// a separate coupling for the rate field. When use_separate_Fhat is false
/// the rate field reuses `f` (shared parameters).
struct G2LayerParams {
    CouplingParams f;
    CouplingParams f_hat;  // empty when shared

    std::size_t count() const { return f.count() + f_hat.count(); }
};

inline G2LayerParams init_layer(const G2Config& cfg, Rng& rng, const std::string& prefix) {
    G2LayerParams p;
    p.f = init_coupling(cfg.coupling, rng, prefix + "F.");
    if ((is_gated(cfg.mode)) && cfg.use_separate_Fhat)
        p.f_hat = init_coupling(cfg.coupling_hat, rng, prefix + "Fhat.");
    return p;
}

inline ad::Value apply_activation(Activation act, const ad::Value& x) {
    return act == Activation::relu ? ad::relu(x) : ad::tanh(x);
}

/// Rate computation for the gated modes. Returns {tau_hat, tau};
/// tau is v x m, or v x 1 in single-rate mode.
inline std::pair<ad::Value, ad::Value> compute_rates(const G2Config& cfg,
                                                     G2LayerParams& params, const Graph& g,
                                                     const CouplingWorkspace& ws,
                                                     const ad::Value& x_prev) {
    if (!is_gated(cfg.mode))
        throw std::invalid_argument("compute_rates: mode has no rates");
    CouplingParams& fh = cfg.use_separate_Fhat ? params.f_hat : params.f;
    const CouplingConfig& fh_cfg = cfg.use_separate_Fhat ? cfg.coupling_hat : cfg.coupling;
    ad::Value tau_hat = ad::sigmoid(coupling_forward(fh_cfg, fh, g, ws, x_prev));
    ad::Value tau = tau_hat;
    switch (cfg.mode) {
        case G2Mode::multirate:
            break;  // tau = logistic(Fhat(X)) directly
        case G2Mode::g2:
            tau = ad::gate_rates(g, tau_hat, cfg.p, cfg.aggregation);
            break;
        case G2Mode::g2_alpha:
            tau = ad::pow_const(ad::gate_rates(g, tau_hat, cfg.p, cfg.aggregation), cfg.alpha);
            break;
        case G2Mode::g2_single_rate:
            tau = ad::gate_rates_single(g, tau_hat, cfg.p);
            break;
        default:
            break;
    }
    return {tau_hat, tau};
}

/// One layer update at step size dt (dt = 1 is the discrete layer; dt < 1 is
/// the forward-Euler step of the continuous limit, computed with the exact
/// same convex-combination expression so the two agree bitwise at dt = 1).
/// `forced_tau`, when given, replaces the computed rates (limit tests).
inline ad::Value layer_step(const G2Config& cfg, G2LayerParams& params, const Graph& g,
                            const CouplingWorkspace& ws, const ad::Value& x_prev,
                            double dt = 1.0, const ad::Value* forced_tau = nullptr) {
    if (x_prev.cols != cfg.coupling.in_dim)
        throw std::invalid_argument("layer_step: width mismatch");
    ad::Value s = apply_activation(cfg.activation, coupling_forward(cfg.coupling, params.f,
                                                                    g, ws, x_prev));
    switch (cfg.mode) {
        case G2Mode::plain:
            return s;
        case G2Mode::residual:
            return ad::add(x_prev, s);
        default: {
            ad::Value tau = forced_tau ? *forced_tau
                                       : compute_rates(cfg, params, g, ws, x_prev).second;
            return ad::convex_update(x_prev, tau, s, dt);
        }
    }
}

// ---------------------------------------------------------------------------
// Deep propagation with per-layer diagnostics
// ---------------------------------------------------------------------------

struct PropagationError : std::runtime_error {
    std::size_t layer;
    explicit PropagationError(std::size_t layer_)
        : std::runtime_error("non-finite features at layer " + std::to_string(layer_)),
          layer(layer_) {}
};

/// Iterates layer_step for `layers` steps starting from X0, forward only
/// (the tape is truncated after every layer, so memory stays O(1) in depth).
/// fresh_weights: re-draw layer parameters from rng each layer (the random
/// deep-propagation experiments); otherwise a single parameter set is drawn
/// once and shared across all layers.
/// on_layer(layer_index, X) is called with the features after each layer;
/// layer 0 reports X0 itself.
inline FeatureMatrix propagate(
    const G2Config& cfg, const Graph& g, const FeatureMatrix& x0, std::size_t layers,
    Rng& rng, bool fresh_weights,
    const std::function<void(std::size_t, const FeatureMatrix&)>& on_layer = nullptr) {
    cfg.validate();
    if (layers < 1) throw std::invalid_argument("propagate: layers must be >= 1");
    CouplingWorkspace ws(g);
    G2LayerParams params = init_layer(cfg, rng, "layer.");
    ad::Tape tape;
    FeatureMatrix x = x0;
    if (on_layer) on_layer(0, x);
    for (std::size_t n = 1; n <= layers; ++n) {
        if (fresh_weights && n > 1) params = init_layer(cfg, rng, "layer.");
        ad::Value xv = ad::constant(tape, x);
        ad::Value next = layer_step(cfg, params, g, ws, xv);
        x = tape.value(next);
        tape.clear();
        if (!x.all_finite()) throw PropagationError(n);
        if (on_layer) on_layer(n, x);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Maximum-principle check
// ---------------------------------------------------------------------------

struct MaxPrincipleReport {
    double min_seen = 0.0;
    double max_seen = 0.0;
    bool holds = false;
};

/// Propagates a bounded-activation gated stack and verifies that every
/// feature entry stays inside [-1, 1] (up to 1e-12 slack): each update is a
/// convex combination of the previous entry and a tanh output.
inline MaxPrincipleReport max_principle_check(const G2Config& cfg, const Graph& g,
                                              const FeatureMatrix& x0, std::size_t layers,
                                              Rng& rng, bool fresh_weights = true) {
    if (!is_gated(cfg.mode))
        throw std::invalid_argument("max_principle_check: needs a gated mode");
    if (cfg.activation != Activation::tanh)
        throw std::invalid_argument("max_principle_check: needs a bounded activation");
    MaxPrincipleReport r;
    r.min_seen = 1.0;
    r.max_seen = -1.0;
    auto scan = [&r](std::size_t, const FeatureMatrix& x) {
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) {
                r.min_seen = std::min(r.min_seen, x(i, j));
                r.max_seen = std::max(r.max_seen, x(i, j));
            }
    };
    propagate(cfg, g, x0, layers, rng, fresh_weights, scan);
    constexpr double kSlack = 1e-12;
    r.holds = r.min_seen >= -1.0 - kSlack && r.max_seen <= 1.0 + kSlack;
    return r;
}

}  // namespace g2
