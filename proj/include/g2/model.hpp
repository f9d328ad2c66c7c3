#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "g2/datasets.hpp"
#include "g2/gating.hpp"
#include "g2/graph.hpp"
#include "g2/ops.hpp"
#include "g2/tape.hpp"

namespace g2 {

/// Full node-level model: linear encoder (input width -> hidden), a stack of
/// gating layers at constant hidden width, linear decoder (hidden -> output
/// width). Layer weights are shared across depth by default so parameter
/// counts stay depth-independent; fresh-per-layer weights are available for
/// the depth experiments.
struct Model {
    G2Config config;            // coupling dims must be hidden -> hidden
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    bool shared_weights = true;

    ad::Parameter enc_w, enc_b;
    std::vector<G2LayerParams> layers;  // size 1 when shared
    ad::Parameter dec_w, dec_b;

    std::size_t hidden() const { return config.coupling.out_dim; }

    std::vector<ad::Parameter*> parameters() {
        std::vector<ad::Parameter*> ps{&enc_w, &enc_b};
        for (auto& l : layers) {
            for (auto& p : l.f.tensors) ps.push_back(&p);
            for (auto& p : l.f_hat.tensors) ps.push_back(&p);
        }
        ps.push_back(&dec_w);
        ps.push_back(&dec_b);
        return ps;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (ad::Parameter* p : parameters()) n += p->count();
        return n;
    }
};

inline Model make_model(const G2Config& cfg, std::size_t in_dim, std::size_t out_dim,
                        Rng& rng, bool shared_weights = true) {
    cfg.validate();
    if (cfg.coupling.in_dim != cfg.coupling.out_dim)
        throw std::invalid_argument("make_model: gating layers need a constant width");
    Model m;
    m.config = cfg;
    m.in_dim = in_dim;
    m.out_dim = out_dim;
    m.shared_weights = shared_weights;
    const std::size_t h = cfg.coupling.out_dim;
    Matrix ew(in_dim, h);
    rng.fill_glorot(ew);
    m.enc_w = ad::Parameter("enc.W", std::move(ew));
    m.enc_b = ad::Parameter("enc.b", Matrix(1, h));
    const std::size_t copies = shared_weights ? 1 : cfg.num_layers;
    for (std::size_t l = 0; l < copies; ++l)
        m.layers.push_back(init_layer(cfg, rng, "layer" + std::to_string(l) + "."));
    Matrix dw(h, out_dim);
    rng.fill_glorot(dw);
    m.dec_w = ad::Parameter("dec.W", std::move(dw));
    m.dec_b = ad::Parameter("dec.b", Matrix(1, out_dim));
    return m;
}

struct ForwardOptions {
    double dropout_in = 0.0;
    double dropout_out = 0.0;
    bool train = false;
    std::uint64_t seed = 0;   // per-epoch dropout seed base
};

/// Records the full forward pass on `tape` and returns the output logits or
/// predictions (v x out_dim).
inline ad::Value model_forward(Model& m, const Graph& g, const CouplingWorkspace& ws,
                               const FeatureMatrix& x, ad::Tape& tape,
                               const ForwardOptions& opt = {}) {
    ad::Value h = ad::constant(tape, x);
    h = ad::dropout(h, opt.dropout_in, mix_seed(opt.seed, 0), opt.train);
    h = ad::add(ad::matmul(h, ad::leaf(tape, m.enc_w)), ad::leaf(tape, m.enc_b));
    for (std::size_t l = 0; l < m.config.num_layers; ++l) {
        G2LayerParams& lp = m.layers[m.shared_weights ? 0 : l];
        h = layer_step(m.config, lp, g, ws, h);
    }
    h = ad::dropout(h, opt.dropout_out, mix_seed(opt.seed, 1), opt.train);
    return ad::add(ad::matmul(h, ad::leaf(tape, m.dec_w)), ad::leaf(tape, m.dec_b));
}

/// Fraction of masked nodes whose argmax logit matches the label.
inline double accuracy(const Matrix& logits, const std::vector<int>& labels,
                       const std::vector<std::size_t>& mask_rows) {
    if (mask_rows.empty()) throw std::invalid_argument("accuracy: empty mask");
    std::size_t hits = 0;
    for (std::size_t r : mask_rows) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (logits(r, c) > logits(r, best)) best = c;
        if (static_cast<int>(best) == labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(mask_rows.size());
}

/// Normalized MSE of a prediction column against targets over a mask.
inline double nmse(const Matrix& preds, const std::vector<double>& targets,
                   const std::vector<std::size_t>& mask_rows) {
    if (mask_rows.empty()) throw std::invalid_argument("nmse: empty mask");
    double ybar = 0.0;
    for (std::size_t r : mask_rows) ybar += targets[r];
    ybar /= static_cast<double>(mask_rows.size());
    double num = 0.0, den = 0.0;
    for (std::size_t r : mask_rows) {
        const double e = preds(r, 0) - targets[r];
        const double d = targets[r] - ybar;
        num += e * e;
        den += d * d;
    }
    if (den <= 0.0) throw std::invalid_argument("nmse: constant targets on mask");
    return num / den;
}

}  // namespace g2
