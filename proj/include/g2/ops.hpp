#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "g2/graph.hpp"
#include "g2/rng.hpp"
#include "g2/tape.hpp"

namespace g2::ad {

namespace detail {

inline void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

inline const Matrix& val(const Value& v) { return v.tape->value(v.id); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Value matmul(const Value& a, const Value& b) {
    detail::require(a.cols == b.rows, "matmul: inner dimensions differ");
    Matrix c = g2::matmul(detail::val(a), detail::val(b));
    return a.tape->push(std::move(c), [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
        const Matrix& gc = t.grad(self);
        const Matrix& av = t.value(ai);
        const Matrix& bv = t.value(bi);
        Matrix& ga = t.grad(ai);
        Matrix& gb = t.grad(bi);
        // dA += dC * B^T
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t k = 0; k < ga.cols(); ++k) {
                double s = 0.0;
                for (std::size_t j = 0; j < gc.cols(); ++j) s += gc(i, j) * bv(k, j);
                ga(i, k) += s;
            }
        // dB += A^T * dC
        for (std::size_t k = 0; k < gb.rows(); ++k)
            for (std::size_t j = 0; j < gb.cols(); ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < av.rows(); ++i) s += av(i, k) * gc(i, j);
                gb(k, j) += s;
            }
    });
}

namespace detail {

enum class Broadcast { none, row, col };

inline Broadcast broadcast_kind(const Value& a, const Value& b) {
    if (a.rows == b.rows && a.cols == b.cols) return Broadcast::none;
    if (b.rows == 1 && b.cols == a.cols) return Broadcast::row;
    if (b.cols == 1 && b.rows == a.rows) return Broadcast::col;
    throw std::invalid_argument("elementwise op: shapes incompatible");
}

/// a (+/-) b with b optionally a broadcast row or column vector.
inline Value add_like(const Value& a, const Value& b, double sign) {
    const Broadcast bc = broadcast_kind(a, b);
    const Matrix& av = val(a);
    const Matrix& bv = val(b);
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) {
            const double bij = bc == Broadcast::none ? bv(i, j)
                               : bc == Broadcast::row ? bv(0, j)
                                                      : bv(i, 0);
            c(i, j) = av(i, j) + sign * bij;
        }
    return a.tape->push(std::move(c),
                        [ai = a.id, bi = b.id, bc, sign](Tape& t, std::size_t self) {
                            const Matrix& gc = t.grad(self);
                            Matrix& ga = t.grad(ai);
                            Matrix& gb = t.grad(bi);
                            ga += gc;
                            for (std::size_t i = 0; i < gc.rows(); ++i)
                                for (std::size_t j = 0; j < gc.cols(); ++j) {
                                    if (bc == Broadcast::none)
                                        gb(i, j) += sign * gc(i, j);
                                    else if (bc == Broadcast::row)
                                        gb(0, j) += sign * gc(i, j);
                                    else
                                        gb(i, 0) += sign * gc(i, j);
                                }
                        });
}

}  // namespace detail

inline Value add(const Value& a, const Value& b) { return detail::add_like(a, b, 1.0); }
inline Value sub(const Value& a, const Value& b) { return detail::add_like(a, b, -1.0); }

inline Value hadamard(const Value& a, const Value& b) {
    detail::require(a.rows == b.rows && a.cols == b.cols, "hadamard: shape mismatch");
    const Matrix& av = detail::val(a);
    const Matrix& bv = detail::val(b);
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) c(i, j) = av(i, j) * bv(i, j);
    return a.tape->push(std::move(c), [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
        const Matrix& gc = t.grad(self);
        const Matrix& av = t.value(ai);
        const Matrix& bv = t.value(bi);
        Matrix& ga = t.grad(ai);
        Matrix& gb = t.grad(bi);
        for (std::size_t i = 0; i < gc.rows(); ++i)
            for (std::size_t j = 0; j < gc.cols(); ++j) {
                ga(i, j) += gc(i, j) * bv(i, j);
                gb(i, j) += gc(i, j) * av(i, j);
            }
    });
}

inline Value scalar_mul(const Value& a, double s) {
    Matrix c = detail::val(a);
    c *= s;
    return a.tape->push(std::move(c), [ai = a.id, s](Tape& t, std::size_t self) {
        const Matrix& gc = t.grad(self);
        Matrix& ga = t.grad(ai);
        for (std::size_t k = 0; k < gc.rows(); ++k)
            for (std::size_t j = 0; j < gc.cols(); ++j) ga(k, j) += s * gc(k, j);
    });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

namespace detail {

template <class Fwd, class Bwd>
Value elementwise(const Value& a, Fwd fwd, Bwd bwd_from_in_out) {
    const Matrix& av = val(a);
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) c(i, j) = fwd(av(i, j));
    return a.tape->push(std::move(c),
                        [ai = a.id, bwd_from_in_out](Tape& t, std::size_t self) {
                            const Matrix& gc = t.grad(self);
                            const Matrix& in = t.value(ai);
                            const Matrix& out = t.value(self);
                            Matrix& ga = t.grad(ai);
                            for (std::size_t i = 0; i < gc.rows(); ++i)
                                for (std::size_t j = 0; j < gc.cols(); ++j)
                                    ga(i, j) += gc(i, j) * bwd_from_in_out(in(i, j), out(i, j));
                        });
}

}  // namespace detail

inline Value relu(const Value& a) {
    return detail::elementwise(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Value leaky_relu(const Value& a, double slope) {
    return detail::elementwise(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline Value tanh(const Value& a) {
    return detail::elementwise(a, [](double x) { return std::tanh(x); },
                               [](double, double y) { return 1.0 - y * y; });
}

inline Value sigmoid(const Value& a) {
    return detail::elementwise(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                               [](double, double y) { return y * (1.0 - y); });
}

/// |x|^p with subgradient 0 at x = 0. For p < 1 a sign change across 0 is
/// non-differentiable; the forward still runs and a warning is recorded.
inline Value abs_pow(const Value& a, double p) {
    if (p < 1.0) {
        const Matrix& av = detail::val(a);
        bool crosses = false;
        for (std::size_t i = 0; i < av.rows() && !crosses; ++i)
            for (std::size_t j = 0; j < av.cols(); ++j)
                if (av(i, j) == 0.0) {
                    crosses = true;
                    break;
                }
        if (crosses) a.tape->warn("abs_pow: p < 1 with zero-valued input is non-differentiable");
    }
    return detail::elementwise(
        a, [p](double x) { return std::pow(std::abs(x), p); },
        [p](double x, double) {
            if (x == 0.0) return 0.0;
            return p * std::pow(std::abs(x), p - 1.0) * (x > 0.0 ? 1.0 : -1.0);
        });
}

/// x^alpha for x >= 0 (rate modulation); derivative 0 at x = 0.
inline Value pow_const(const Value& a, double alpha) {
    return detail::elementwise(
        a, [alpha](double x) { return std::pow(x, alpha); },
        [alpha](double x, double) {
            if (x == 0.0) return 0.0;
            return alpha * std::pow(x, alpha - 1.0);
        });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Value row_gather(const Value& a, std::vector<std::size_t> rows) {
    const Matrix& av = detail::val(a);
    Matrix c(rows.size(), a.cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        detail::require(rows[r] < a.rows, "row_gather: row index out of range");
        for (std::size_t j = 0; j < a.cols; ++j) c(r, j) = av(rows[r], j);
    }
    return a.tape->push(std::move(c),
                        [ai = a.id, rows = std::move(rows)](Tape& t, std::size_t self) {
                            const Matrix& gc = t.grad(self);
                            Matrix& ga = t.grad(ai);
                            for (std::size_t r = 0; r < rows.size(); ++r)
                                for (std::size_t j = 0; j < gc.cols(); ++j)
                                    ga(rows[r], j) += gc(r, j);
                        });
}

inline Value concat_cols(const Value& a, const Value& b) {
    detail::require(a.rows == b.rows, "concat_cols: row counts differ");
    const Matrix& av = detail::val(a);
    const Matrix& bv = detail::val(b);
    Matrix c(a.rows, a.cols + b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) c(i, j) = av(i, j);
        for (std::size_t j = 0; j < b.cols; ++j) c(i, a.cols + j) = bv(i, j);
    }
    return a.tape->push(std::move(c),
                        [ai = a.id, bi = b.id, ac = a.cols](Tape& t, std::size_t self) {
                            const Matrix& gc = t.grad(self);
                            Matrix& ga = t.grad(ai);
                            Matrix& gb = t.grad(bi);
                            for (std::size_t i = 0; i < gc.rows(); ++i) {
                                for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += gc(i, j);
                                for (std::size_t j = 0; j < gb.cols(); ++j)
                                    gb(i, j) += gc(i, ac + j);
                            }
                        });
}

namespace detail {

inline Value reduce(const Value& a, bool mean) {
    const Matrix& av = val(a);
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) s += av(i, j);
    const double scale = mean ? 1.0 / static_cast<double>(a.rows * a.cols) : 1.0;
    return a.tape->push(Matrix(1, 1, s * scale),
                        [ai = a.id, scale](Tape& t, std::size_t self) {
                            const double g = t.grad(self)(0, 0) * scale;
                            Matrix& ga = t.grad(ai);
                            for (std::size_t i = 0; i < ga.rows(); ++i)
                                for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g;
                        });
}

}  // namespace detail

inline Value reduce_sum(const Value& a) { return detail::reduce(a, false); }
inline Value reduce_mean(const Value& a) { return detail::reduce(a, true); }

/// Inverted dropout with an explicit per-call seed; identity when !train.
inline Value dropout(const Value& a, double rate, std::uint64_t seed, bool train) {
    detail::require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
    if (!train || rate == 0.0) {
        const Matrix& av = detail::val(a);
        Matrix c = av;
        return a.tape->push(std::move(c), [ai = a.id](Tape& t, std::size_t self) {
            t.grad(ai) += t.grad(self);
        });
    }
    Rng rng(seed);
    const double keep = 1.0 - rate;
    std::vector<std::uint8_t> mask(a.rows * a.cols);
    for (auto& m : mask) m = rng.uniform() >= rate;
    const Matrix& av = detail::val(a);
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0, k = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j, ++k)
            c(i, j) = mask[k] ? av(i, j) / keep : 0.0;
    return a.tape->push(std::move(c),
                        [ai = a.id, mask = std::move(mask), keep](Tape& t, std::size_t self) {
                            const Matrix& gc = t.grad(self);
                            Matrix& ga = t.grad(ai);
                            for (std::size_t i = 0, k = 0; i < gc.rows(); ++i)
                                for (std::size_t j = 0; j < gc.cols(); ++j, ++k)
                                    if (mask[k]) ga(i, j) += gc(i, j) / keep;
                        });
}

// ---------------------------------------------------------------------------
// Graph-structured ops
// ---------------------------------------------------------------------------

enum class Aggregation { sum, mean, max };

/// Neighborhood aggregation over the plain (no self-loop) adjacency.
/// max routes gradient to the argmax with the lowest node index on ties.
inline Value neighbor_aggregate(const Graph& g, const Value& x, Aggregation mode) {
    detail::require(x.rows == g.num_nodes(), "neighbor_aggregate: rows != num_nodes");
    const Matrix& xv = detail::val(x);
    Matrix y(x.rows, x.cols);
    std::vector<std::size_t> argmax;  // only for max
    if (mode == Aggregation::max) argmax.assign(x.rows * x.cols, SIZE_MAX);
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
        auto nb = g.neighbors(i);
        for (std::size_t k = 0; k < x.cols; ++k) {
            if (mode == Aggregation::max) {
                double best = 0.0;
                std::size_t bj = SIZE_MAX;
                for (NodeId j : nb)
                    if (bj == SIZE_MAX || xv(j, k) > best) {
                        best = xv(j, k);
                        bj = j;
                    }
                y(i, k) = bj == SIZE_MAX ? 0.0 : best;
                argmax[i * x.cols + k] = bj;
            } else {
                double s = 0.0;
                for (NodeId j : nb) s += xv(j, k);
                if (mode == Aggregation::mean && !nb.empty())
                    s /= static_cast<double>(nb.size());
                y(i, k) = s;
            }
        }
    }
    return x.tape->push(
        std::move(y),
        [xi = x.id, &g, mode, argmax = std::move(argmax)](Tape& t, std::size_t self) {
            const Matrix& gy = t.grad(self);
            Matrix& gx = t.grad(xi);
            for (NodeId i = 0; i < g.num_nodes(); ++i) {
                auto nb = g.neighbors(i);
                for (std::size_t k = 0; k < gy.cols(); ++k) {
                    const double gik = gy(i, k);
                    if (gik == 0.0) continue;
                    if (mode == Aggregation::max) {
                        const std::size_t bj = argmax[i * gy.cols() + k];
                        if (bj != SIZE_MAX) gx(bj, k) += gik;
                    } else {
                        const double scale =
                            mode == Aggregation::mean && !nb.empty()
                                ? 1.0 / static_cast<double>(nb.size())
                                : 1.0;
                        for (NodeId j : nb) gx(j, k) += gik * scale;
                    }
                }
            }
        });
}

/// CSR neighborhood structure used by the attention ops; typically the
/// graph adjacency augmented with self-loops.
struct Csr {
    std::vector<std::size_t> offsets;
    std::vector<NodeId> indices;

    std::size_t num_rows() const { return offsets.size() - 1; }
    std::size_t num_entries() const { return indices.size(); }
    std::span<const NodeId> row(std::size_t i) const {
        return {indices.data() + offsets[i], indices.data() + offsets[i + 1]};
    }
};

inline Csr with_self_loops(const Graph& g) {
    Csr c;
    c.offsets.reserve(g.num_nodes() + 1);
    c.offsets.push_back(0);
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
        bool placed = false;
        for (NodeId j : g.neighbors(i)) {
            if (!placed && j > i) {
                c.indices.push_back(i);
                placed = true;
            }
            c.indices.push_back(j);
        }
        if (!placed) c.indices.push_back(i);
        c.offsets.push_back(c.indices.size());
    }
    return c;
}

/// Per-edge score s_src[i] + s_dst[j] for every entry (i -> j) of the CSR.
/// Output is (num_entries x 1).
inline Value edge_scores(const Csr& csr, const Value& s_src, const Value& s_dst) {
    detail::require(s_src.cols == 1 && s_dst.cols == 1, "edge_scores: need column vectors");
    detail::require(s_src.rows == csr.num_rows() && s_dst.rows == csr.num_rows(),
                    "edge_scores: vector length != num rows");
    const Matrix& sv = detail::val(s_src);
    const Matrix& dv = detail::val(s_dst);
    Matrix e(csr.num_entries(), 1);
    std::size_t k = 0;
    for (std::size_t i = 0; i < csr.num_rows(); ++i)
        for (NodeId j : csr.row(i)) e(k++, 0) = sv(i, 0) + dv(j, 0);
    return s_src.tape->push(std::move(e),
                            [si = s_src.id, di = s_dst.id, &csr](Tape& t, std::size_t self) {
                                const Matrix& ge = t.grad(self);
                                Matrix& gs = t.grad(si);
                                Matrix& gd = t.grad(di);
                                std::size_t k = 0;
                                for (std::size_t i = 0; i < csr.num_rows(); ++i)
                                    for (NodeId j : csr.row(i)) {
                                        gs(i, 0) += ge(k, 0);
                                        gd(j, 0) += ge(k, 0);
                                        ++k;
                                    }
                            });
}

/// Softmax over each CSR row (the 1-neighborhood of each node).
inline Value softmax_per_neighborhood(const Csr& csr, const Value& scores) {
    detail::require(scores.cols == 1 && scores.rows == csr.num_entries(),
                    "softmax_per_neighborhood: scores misaligned with csr");
    const Matrix& sv = detail::val(scores);
    Matrix a(csr.num_entries(), 1);
    for (std::size_t i = 0; i < csr.num_rows(); ++i) {
        const std::size_t lo = csr.offsets[i], hi = csr.offsets[i + 1];
        if (lo == hi) continue;
        double mx = sv(lo, 0);
        for (std::size_t k = lo; k < hi; ++k) mx = std::max(mx, sv(k, 0));
        double z = 0.0;
        for (std::size_t k = lo; k < hi; ++k) z += std::exp(sv(k, 0) - mx);
        for (std::size_t k = lo; k < hi; ++k) a(k, 0) = std::exp(sv(k, 0) - mx) / z;
    }
    return scores.tape->push(
        std::move(a), [si = scores.id, &csr](Tape& t, std::size_t self) {
            const Matrix& ga = t.grad(self);
            const Matrix& av = t.value(self);
            Matrix& gs = t.grad(si);
            for (std::size_t i = 0; i < csr.num_rows(); ++i) {
                const std::size_t lo = csr.offsets[i], hi = csr.offsets[i + 1];
                double dot = 0.0;
                for (std::size_t k = lo; k < hi; ++k) dot += ga(k, 0) * av(k, 0);
                for (std::size_t k = lo; k < hi; ++k)
                    gs(k, 0) += av(k, 0) * (ga(k, 0) - dot);
            }
        });
}

/// Y_i = sum over CSR row i of w_ij * X_j (per-edge weights on the tape).
inline Value edge_weighted_sum(const Csr& csr, const Value& weights, const Value& x) {
    detail::require(weights.cols == 1 && weights.rows == csr.num_entries(),
                    "edge_weighted_sum: weights misaligned with csr");
    detail::require(x.rows == csr.num_rows(), "edge_weighted_sum: feature rows != num rows");
    const Matrix& wv = detail::val(weights);
    const Matrix& xv = detail::val(x);
    Matrix y(csr.num_rows(), x.cols);
    std::size_t k = 0;
    for (std::size_t i = 0; i < csr.num_rows(); ++i)
        for (NodeId j : csr.row(i)) {
            const double w = wv(k++, 0);
            for (std::size_t c = 0; c < x.cols; ++c) y(i, c) += w * xv(j, c);
        }
    return x.tape->push(
        std::move(y), [wi = weights.id, xi = x.id, &csr](Tape& t, std::size_t self) {
            const Matrix& gy = t.grad(self);
            const Matrix& wv = t.value(wi);
            const Matrix& xv = t.value(xi);
            Matrix& gw = t.grad(wi);
            Matrix& gx = t.grad(xi);
            std::size_t k = 0;
            for (std::size_t i = 0; i < csr.num_rows(); ++i)
                for (NodeId j : csr.row(i)) {
                    double dw = 0.0;
                    for (std::size_t c = 0; c < gy.cols(); ++c) {
                        dw += gy(i, c) * xv(j, c);
                        gx(j, c) += wv(k, 0) * gy(i, c);
                    }
                    gw(k, 0) += dw;
                    ++k;
                }
        });
}

/// Y_i = sum over CSR row i of c_ij * X_j with fixed (non-learned) weights.
inline Value fixed_weighted_sum(const Csr& csr, const std::vector<double>& coeffs,
                                const Value& x) {
    detail::require(coeffs.size() == csr.num_entries(),
                    "fixed_weighted_sum: coeffs misaligned with csr");
    detail::require(x.rows == csr.num_rows(), "fixed_weighted_sum: feature rows != num rows");
    const Matrix& xv = detail::val(x);
    Matrix y(csr.num_rows(), x.cols);
    std::size_t k = 0;
    for (std::size_t i = 0; i < csr.num_rows(); ++i)
        for (NodeId j : csr.row(i)) {
            const double w = coeffs[k++];
            for (std::size_t c = 0; c < x.cols; ++c) y(i, c) += w * xv(j, c);
        }
    return x.tape->push(std::move(y),
                        [xi = x.id, &csr, &coeffs](Tape& t, std::size_t self) {
                            const Matrix& gy = t.grad(self);
                            Matrix& gx = t.grad(xi);
                            std::size_t k = 0;
                            for (std::size_t i = 0; i < csr.num_rows(); ++i)
                                for (NodeId j : csr.row(i)) {
                                    const double w = coeffs[k++];
                                    for (std::size_t c = 0; c < gy.cols(); ++c)
                                        gx(j, c) += w * gy(i, c);
                                }
                        });
}

// ---------------------------------------------------------------------------
// Gating ops
// ---------------------------------------------------------------------------

/// Per-node, per-channel rates tau_ik = tanh(agg_{j in N_i} |th_jk - th_ik|^p).
inline Value gate_rates(const Graph& g, const Value& tau_hat, double p, Aggregation agg) {
    detail::require(p > 0.0, "gate_rates: p must be positive");
    detail::require(tau_hat.rows == g.num_nodes(), "gate_rates: rows != num_nodes");
    const Matrix& th = detail::val(tau_hat);
    const std::size_t m = tau_hat.cols;
    Matrix tau(tau_hat.rows, m);
    std::vector<std::size_t> argmax;
    if (agg == Aggregation::max) argmax.assign(tau_hat.rows * m, SIZE_MAX);
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
        auto nb = g.neighbors(i);
        for (std::size_t k = 0; k < m; ++k) {
            double s = 0.0;
            if (agg == Aggregation::max) {
                std::size_t bj = SIZE_MAX;
                for (NodeId j : nb) {
                    const double d = std::pow(std::abs(th(j, k) - th(i, k)), p);
                    if (bj == SIZE_MAX || d > s) {
                        s = d;
                        bj = j;
                    }
                }
                if (bj == SIZE_MAX) s = 0.0;
                argmax[i * m + k] = bj;
            } else {
                for (NodeId j : nb) s += std::pow(std::abs(th(j, k) - th(i, k)), p);
                if (agg == Aggregation::mean && !nb.empty())
                    s /= static_cast<double>(nb.size());
            }
            tau(i, k) = std::tanh(s);
        }
    }
    return tau_hat.tape->push(
        std::move(tau),
        [ti = tau_hat.id, &g, p, agg, argmax = std::move(argmax)](Tape& t, std::size_t self) {
            const Matrix& gtau = t.grad(self);
            const Matrix& tau = t.value(self);
            const Matrix& th = t.value(ti);
            Matrix& gth = t.grad(ti);
            const std::size_t m = th.cols();
            for (NodeId i = 0; i < g.num_nodes(); ++i) {
                auto nb = g.neighbors(i);
                for (std::size_t k = 0; k < m; ++k) {
                    double ds = gtau(i, k) * (1.0 - tau(i, k) * tau(i, k));
                    if (ds == 0.0) continue;
                    if (agg == Aggregation::mean && !nb.empty())
                        ds /= static_cast<double>(nb.size());
                    auto kick = [&](NodeId j) {
                        const double d = th(j, k) - th(i, k);
                        if (d == 0.0) return;
                        const double dd =
                            p * std::pow(std::abs(d), p - 1.0) * (d > 0.0 ? 1.0 : -1.0);
                        gth(j, k) += ds * dd;
                        gth(i, k) -= ds * dd;
                    };
                    if (agg == Aggregation::max) {
                        const std::size_t bj = argmax[i * m + k];
                        if (bj != SIZE_MAX) kick(bj);
                    } else {
                        for (NodeId j : nb) kick(j);
                    }
                }
            }
        });
}

/// Single rate per node: tau_i = tanh(sum_{j in N_i} ||th_j - th_i||_p),
/// with the vector p-norm taken across channels. Output is (v x 1).
inline Value gate_rates_single(const Graph& g, const Value& tau_hat, double p) {
    detail::require(p > 0.0, "gate_rates_single: p must be positive");
    detail::require(tau_hat.rows == g.num_nodes(), "gate_rates_single: rows != num_nodes");
    const Matrix& th = detail::val(tau_hat);
    const std::size_t m = tau_hat.cols;
    Matrix tau(tau_hat.rows, 1);
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
        double s = 0.0;
        for (NodeId j : g.neighbors(i)) {
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k)
                acc += std::pow(std::abs(th(j, k) - th(i, k)), p);
            s += std::pow(acc, 1.0 / p);
        }
        tau(i, 0) = std::tanh(s);
    }
    return tau_hat.tape->push(
        std::move(tau), [ti = tau_hat.id, &g, p](Tape& t, std::size_t self) {
            const Matrix& gtau = t.grad(self);
            const Matrix& tau = t.value(self);
            const Matrix& th = t.value(ti);
            Matrix& gth = t.grad(ti);
            const std::size_t m = th.cols();
            for (NodeId i = 0; i < g.num_nodes(); ++i) {
                const double ds = gtau(i, 0) * (1.0 - tau(i, 0) * tau(i, 0));
                if (ds == 0.0) continue;
                for (NodeId j : g.neighbors(i)) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < m; ++k)
                        acc += std::pow(std::abs(th(j, k) - th(i, k)), p);
                    if (acc == 0.0) continue;
                    const double norm = std::pow(acc, 1.0 / p);
                    for (std::size_t k = 0; k < m; ++k) {
                        const double d = th(j, k) - th(i, k);
                        if (d == 0.0) continue;
                        // d norm / d th_jk = |d|^{p-1} sign(d) / norm^{p-1}
                        const double dn = std::pow(std::abs(d), p - 1.0) *
                                          (d > 0.0 ? 1.0 : -1.0) /
                                          std::pow(norm, p - 1.0);
                        gth(j, k) += ds * dn;
                        gth(i, k) -= ds * dn;
                    }
                }
            }
        });
}

/// X_ik * t_i with t a (v x 1) column of per-node scales.
inline Value colwise_scale(const Value& x, const Value& t) {
    detail::require(t.cols == 1 && t.rows == x.rows, "colwise_scale: scale must be v x 1");
    const Matrix& xv = detail::val(x);
    const Matrix& tv = detail::val(t);
    Matrix y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) y(i, j) = xv(i, j) * tv(i, 0);
    return x.tape->push(std::move(y), [xi = x.id, ti = t.id](Tape& t_, std::size_t self) {
        const Matrix& gy = t_.grad(self);
        const Matrix& xv = t_.value(xi);
        const Matrix& tv = t_.value(ti);
        Matrix& gx = t_.grad(xi);
        Matrix& gt = t_.grad(ti);
        for (std::size_t i = 0; i < gy.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < gy.cols(); ++j) {
                gx(i, j) += gy(i, j) * tv(i, 0);
                s += gy(i, j) * xv(i, j);
            }
            gt(i, 0) += s;
        }
    });
}

/// The multi-rate convex update y = (1 - dt*tau) . x + (dt*tau) . s,
/// evaluated with exactly this expression so the discrete layer and the
/// forward-Euler step agree bitwise at dt = 1.
inline Value convex_update(const Value& x, const Value& tau, const Value& s, double dt) {
    detail::require(x.rows == s.rows && x.cols == s.cols, "convex_update: x/s shape mismatch");
    const bool per_node = tau.cols == 1 && x.cols != 1;
    detail::require((tau.rows == x.rows && tau.cols == x.cols) || (per_node && tau.rows == x.rows),
                    "convex_update: rate shape mismatch");
    const Matrix& xv = detail::val(x);
    const Matrix& tv = detail::val(tau);
    const Matrix& sv = detail::val(s);
    Matrix y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) {
            const double ta = dt * (per_node ? tv(i, 0) : tv(i, j));
            y(i, j) = (1.0 - ta) * xv(i, j) + ta * sv(i, j);
        }
    return x.tape->push(
        std::move(y),
        [xi = x.id, ti = tau.id, si = s.id, dt, per_node](Tape& t, std::size_t self) {
            const Matrix& gy = t.grad(self);
            const Matrix& xv = t.value(xi);
            const Matrix& tv = t.value(ti);
            const Matrix& sv = t.value(si);
            Matrix& gx = t.grad(xi);
            Matrix& gt = t.grad(ti);
            Matrix& gs = t.grad(si);
            for (std::size_t i = 0; i < gy.rows(); ++i)
                for (std::size_t j = 0; j < gy.cols(); ++j) {
                    const double tij = per_node ? tv(i, 0) : tv(i, j);
                    gx(i, j) += gy(i, j) * (1.0 - dt * tij);
                    gs(i, j) += gy(i, j) * dt * tij;
                    const double dtau = gy(i, j) * dt * (sv(i, j) - xv(i, j));
                    if (per_node)
                        gt(i, 0) += dtau;
                    else
                        gt(i, j) += dtau;
                }
        });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean softmax cross-entropy over the masked rows.
inline Value masked_cross_entropy(const Value& logits, const std::vector<int>& labels,
                                  const std::vector<std::size_t>& mask_rows) {
    detail::require(!mask_rows.empty(), "masked_cross_entropy: empty mask");
    detail::require(labels.size() == logits.rows, "masked_cross_entropy: label count");
    const Matrix& lv = detail::val(logits);
    double loss = 0.0;
    for (std::size_t r : mask_rows) {
        double mx = lv(r, 0);
        for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, lv(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) z += std::exp(lv(r, c) - mx);
        loss += std::log(z) - (lv(r, labels[r]) - mx);
    }
    loss /= static_cast<double>(mask_rows.size());
    return logits.tape->push(
        Matrix(1, 1, loss),
        [li = logits.id, &labels, mask_rows](Tape& t, std::size_t self) {
            const double g = t.grad(self)(0, 0) / static_cast<double>(mask_rows.size());
            const Matrix& lv = t.value(li);
            Matrix& gl = t.grad(li);
            for (std::size_t r : mask_rows) {
                double mx = lv(r, 0);
                for (std::size_t c = 1; c < lv.cols(); ++c) mx = std::max(mx, lv(r, c));
                double z = 0.0;
                for (std::size_t c = 0; c < lv.cols(); ++c) z += std::exp(lv(r, c) - mx);
                for (std::size_t c = 0; c < lv.cols(); ++c) {
                    const double p = std::exp(lv(r, c) - mx) / z;
                    gl(r, c) += g * (p - (static_cast<int>(c) == labels[r] ? 1.0 : 0.0));
                }
            }
        });
}

/// Normalized MSE over the masked rows: sum (pred-y)^2 / sum (y-ybar)^2,
/// with ybar the masked target mean. Exactly 1 for the constant-mean
/// predictor.
inline Value masked_nmse(const Value& preds, const std::vector<double>& targets,
                         const std::vector<std::size_t>& mask_rows) {
    detail::require(!mask_rows.empty(), "masked_nmse: empty mask");
    detail::require(preds.cols == 1, "masked_nmse: predictions must be a column");
    detail::require(targets.size() == preds.rows, "masked_nmse: target count");
    const Matrix& pv = detail::val(preds);
    double ybar = 0.0;
    for (std::size_t r : mask_rows) ybar += targets[r];
    ybar /= static_cast<double>(mask_rows.size());
    double denom = 0.0;
    for (std::size_t r : mask_rows) {
        const double d = targets[r] - ybar;
        denom += d * d;
    }
    detail::require(denom > 0.0, "masked_nmse: targets are constant on the mask");
    double num = 0.0;
    for (std::size_t r : mask_rows) {
        const double d = pv(r, 0) - targets[r];
        num += d * d;
    }
    return preds.tape->push(
        Matrix(1, 1, num / denom),
        [pi = preds.id, &targets, mask_rows, denom](Tape& t, std::size_t self) {
            const double g = t.grad(self)(0, 0);
            const Matrix& pv = t.value(pi);
            Matrix& gp = t.grad(pi);
            for (std::size_t r : mask_rows)
                gp(r, 0) += g * 2.0 * (pv(r, 0) - targets[r]) / denom;
        });
}

}  // namespace g2::ad
