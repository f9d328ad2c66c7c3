#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "g2/graph.hpp"
#include "g2/matrix.hpp"

namespace g2 {

/// Per-edge values aligned with the graph's CSR storage: entry e holds the
/// value for the directed edge (row(e) -> col_indices[e]).
struct EdgeValues {
    const Graph* graph;
    std::vector<double> values;  // length num_directed_edges

    double at(NodeId i, NodeId j) const {
        auto nb = graph->neighbors(i);
        for (std::size_t k = 0; k < nb.size(); ++k)
            if (nb[k] == j) return values[graph->row_offsets()[i] + k];
        throw std::invalid_argument("no edge between requested nodes");
    }
};

/// Graph gradient of a scalar node field: value y_j - y_i on edge (i,j).
inline EdgeValues graph_gradient(const Graph& g, const std::vector<double>& y) {
    if (y.size() != g.num_nodes())
        throw std::invalid_argument("graph_gradient: field length != num_nodes");
    EdgeValues grad{&g, std::vector<double>(g.num_directed_edges())};
    std::size_t e = 0;
    for (NodeId i = 0; i < g.num_nodes(); ++i)
        for (NodeId j : g.neighbors(i)) grad.values[e++] = y[j] - y[i];
    return grad;
}

/// Dirichlet energy (1/v) sum_i sum_{j in N_i} ||X_i - X_j||^2.
/// Ordered pairs: each undirected edge contributes twice.
inline double dirichlet_energy(const Graph& g, const Matrix& x) {
    if (x.rows() != g.num_nodes())
        throw std::invalid_argument("dirichlet_energy: feature rows != num_nodes");
    double total = 0.0;
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
        const double* xi = x.row(i);
        for (NodeId j : g.neighbors(i)) {
            const double* xj = x.row(j);
            for (std::size_t k = 0; k < x.cols(); ++k) {
                const double d = xi[k] - xj[k];
                total += d * d;
            }
        }
    }
    return total / static_cast<double>(g.num_nodes());
}

/// Mean average distance: mean cosine distance over adjacent ordered node
/// pairs. Rows with norm below 1e-12 count as distance 1 from any row.
inline double mad(const Graph& g, const Matrix& x) {
    if (x.rows() != g.num_nodes())
        throw std::invalid_argument("mad: feature rows != num_nodes");
    constexpr double kDegenerate = 1e-12;
    std::vector<double> norms(g.num_nodes());
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * x(i, k);
        norms[i] = std::sqrt(s);
    }
    double total = 0.0;
    std::size_t count = 0;
    for (NodeId i = 0; i < g.num_nodes(); ++i)
        for (NodeId j : g.neighbors(i)) {
            ++count;
            if (norms[i] < kDegenerate || norms[j] < kDegenerate) {
                total += 1.0;
                continue;
            }
            double dot = 0.0;
            for (std::size_t k = 0; k < x.cols(); ++k) dot += x(i, k) * x(j, k);
            // rounding can push the cosine a hair past 1; keep distances in [0,2]
            total += std::max(0.0, 1.0 - dot / (norms[i] * norms[j]));
        }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

struct PoincareReport {
    double lhs = 0.0;  // sum_i y_i^2
    double rhs = 0.0;  // d_max * ecc(anchor) * sum_i sum_{j in N_i} (y_j - y_i)^2
    bool holds = false;
};

/// Checks sum y_i^2 <= d_max * ecc(anchor) * sum_i sum_{j in N_i} (y_j-y_i)^2
/// for a scalar field with y[anchor] = 0 on a connected graph.
inline PoincareReport poincare_check(const Graph& g, const std::vector<double>& y,
                                     NodeId anchor) {
    if (y.size() != g.num_nodes())
        throw std::invalid_argument("poincare_check: field length != num_nodes");
    if (y[anchor] != 0.0)
        throw std::invalid_argument("poincare_check: field must vanish at the anchor");
    const double ecc = static_cast<double>(g.eccentricity(anchor));  // also checks connectivity
    PoincareReport r;
    for (double v : y) r.lhs += v * v;
    double grad_sq = 0.0;
    for (NodeId i = 0; i < g.num_nodes(); ++i)
        for (NodeId j : g.neighbors(i)) {
            const double d = y[j] - y[i];
            grad_sq += d * d;
        }
    r.rhs = static_cast<double>(g.max_degree()) * ecc * grad_sq;
    r.holds = r.lhs <= r.rhs;
    return r;
}

}  // namespace g2
