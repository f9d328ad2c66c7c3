#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2/graph.hpp"
#include "g2/ops.hpp"
#include "g2/rng.hpp"
#include "g2/tape.hpp"

namespace g2 {

enum class CouplingKind { gcn, gat, sage };

/// One-neighborhood coupling layer configuration.
struct CouplingConfig {
    CouplingKind kind = CouplingKind::gcn;
    std::size_t in_dim = 1;
    std::size_t out_dim = 1;
    ad::Aggregation aggregation = ad::Aggregation::mean;  // sage only
    std::size_t attention_dim = 0;                        // gat; 0 = out_dim

    void validate() const {
        if (in_dim < 1 || out_dim < 1)
            throw std::invalid_argument("coupling: dims must be >= 1");
    }
};

/// Trainable tensors of one coupling layer.
struct CouplingParams {
    std::vector<ad::Parameter> tensors;

    ad::Parameter& at(std::size_t i) { return tensors[i]; }
    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : tensors) n += p.count();
        return n;
    }
};

/// Fresh Glorot-uniform parameters for a coupling layer.
/// gcn:  [W (in x out)]
/// gat:  [W (in x out), a_src (out x 1), a_dst (out x 1)]
/// sage: [W_self (in x out), W_neigh (in x out)]
inline CouplingParams init_coupling(const CouplingConfig& cfg, Rng& rng,
                                    const std::string& prefix) {
    cfg.validate();
    CouplingParams p;
    auto glorot = [&](const std::string& name, std::size_t r, std::size_t c) {
        Matrix m(r, c);
        rng.fill_glorot(m);
        p.tensors.emplace_back(prefix + name, std::move(m));
    };
    switch (cfg.kind) {
        case CouplingKind::gcn:
            glorot("W", cfg.in_dim, cfg.out_dim);
            break;
        case CouplingKind::gat: {
            const std::size_t ad = cfg.attention_dim ? cfg.attention_dim : cfg.out_dim;
            if (ad != cfg.out_dim)
                throw std::invalid_argument("gat: attention_dim must equal out_dim");
            glorot("W", cfg.in_dim, cfg.out_dim);
            glorot("a_src", cfg.out_dim, 1);
            glorot("a_dst", cfg.out_dim, 1);
            break;
        }
        case CouplingKind::sage:
            glorot("W_self", cfg.in_dim, cfg.out_dim);
            glorot("W_neigh", cfg.in_dim, cfg.out_dim);
            break;
    }
    return p;
}

namespace detail {

/// Symmetric normalization coefficients 1/sqrt((d_i+1)(d_j+1)) aligned with
/// the self-loop CSR of `csr`.
inline std::vector<double> gcn_coeffs(const Graph& g, const ad::Csr& csr) {
    std::vector<double> c;
    c.reserve(csr.num_entries());
    for (std::size_t i = 0; i < csr.num_rows(); ++i) {
        const double di = static_cast<double>(g.degree(i)) + 1.0;
        for (NodeId j : csr.row(i)) {
            const double dj = static_cast<double>(g.degree(j)) + 1.0;
            c.push_back(1.0 / std::sqrt(di * dj));
        }
    }
    return c;
}

}  // namespace detail

/// Per-graph cached structures reused across layers and epochs. The CSR
/// (adjacency plus self-loops) and GCN coefficients must outlive any tape
/// nodes recorded against them.
struct CouplingWorkspace {
    ad::Csr self_loops;
    std::vector<double> gcn_coeffs;

    explicit CouplingWorkspace(const Graph& g)
        : self_loops(ad::with_self_loops(g)),
          gcn_coeffs(detail::gcn_coeffs(g, self_loops)) {}
};

constexpr double kGatLeakySlope = 0.2;

/// Coupling forward pass recorded on the tape of `x`.
inline ad::Value coupling_forward(const CouplingConfig& cfg, CouplingParams& params,
                                  const Graph& g, const CouplingWorkspace& ws,
                                  const ad::Value& x) {
    if (x.cols != cfg.in_dim)
        throw std::invalid_argument("coupling: input width != in_dim");
    if (x.rows != g.num_nodes())
        throw std::invalid_argument("coupling: input rows != num_nodes");
    ad::Tape& t = *x.tape;
    switch (cfg.kind) {
        case CouplingKind::gcn: {
            ad::Value xw = ad::matmul(x, ad::leaf(t, params.at(0)));
            return ad::fixed_weighted_sum(ws.self_loops, ws.gcn_coeffs, xw);
        }
        case CouplingKind::gat: {
            ad::Value xw = ad::matmul(x, ad::leaf(t, params.at(0)));
            ad::Value s_src = ad::matmul(xw, ad::leaf(t, params.at(1)));
            ad::Value s_dst = ad::matmul(xw, ad::leaf(t, params.at(2)));
            ad::Value e = ad::edge_scores(ws.self_loops, s_src, s_dst);
            ad::Value alpha =
                ad::softmax_per_neighborhood(ws.self_loops, ad::leaky_relu(e, kGatLeakySlope));
            return ad::edge_weighted_sum(ws.self_loops, alpha, xw);
        }
        case CouplingKind::sage: {
            ad::Value self_part = ad::matmul(x, ad::leaf(t, params.at(0)));
            ad::Value agg = ad::neighbor_aggregate(g, x, cfg.aggregation);
            ad::Value neigh_part = ad::matmul(agg, ad::leaf(t, params.at(1)));
            return ad::add(self_part, neigh_part);
        }
    }
    throw std::logic_error("coupling: unknown kind");
}

// ---------------------------------------------------------------------------
// Right-stochastic coupling matrices for the dynamics laboratory
// ---------------------------------------------------------------------------

enum class StochasticMode { uniform, random };

/// Nonnegative neighborhood coupling with unit row sums over N_i (no
/// diagonal entries: the perturbation dynamics only use off-diagonal terms).
struct StochasticMatrix {
    const Graph* graph;
    std::vector<double> entries;  // aligned with graph CSR
    double min_entry = 0.0;       // the theory's lower bound on A_ij

    double at(NodeId i, NodeId j) const {
        auto nb = graph->neighbors(i);
        for (std::size_t k = 0; k < nb.size(); ++k)
            if (nb[k] == j) return entries[graph->row_offsets()[i] + k];
        throw std::invalid_argument("no edge between requested nodes");
    }

    bool is_symmetric(double tol = 1e-12) const {
        for (NodeId i = 0; i < graph->num_nodes(); ++i)
            for (NodeId j : graph->neighbors(i))
                if (std::abs(at(i, j) - at(j, i)) > tol) return false;
        return true;
    }
};

inline StochasticMatrix make_right_stochastic(const Graph& g, StochasticMode mode,
                                              std::uint64_t seed = 0) {
    for (NodeId i = 0; i < g.num_nodes(); ++i)
        if (g.degree(i) == 0)
            throw std::invalid_argument("make_right_stochastic: isolated node " +
                                        std::to_string(i));
    StochasticMatrix a{&g, std::vector<double>(g.num_directed_edges()), 1.0};
    Rng rng(seed);
    std::size_t e = 0;
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
        const std::size_t deg = g.degree(i);
        if (mode == StochasticMode::uniform) {
            for (std::size_t k = 0; k < deg; ++k) a.entries[e + k] = 1.0 / deg;
        } else {
            double sum = 0.0;
            for (std::size_t k = 0; k < deg; ++k) {
                a.entries[e + k] = 0.1 + rng.uniform();  // bounded away from 0
                sum += a.entries[e + k];
            }
            for (std::size_t k = 0; k < deg; ++k) a.entries[e + k] /= sum;
        }
        e += deg;
    }
    for (double v : a.entries) a.min_entry = std::min(a.min_entry, v);
    return a;
}

}  // namespace g2
