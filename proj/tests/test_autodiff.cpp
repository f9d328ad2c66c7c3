#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "g2/checkpoint.hpp"
#include "g2/gradcheck.hpp"
#include "g2/graph.hpp"
#include "g2/ops.hpp"
#include "g2/tape.hpp"

using namespace g2;
using namespace g2::ad;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

/// grad-checks loss = sum(R . op(P)) for a single-parameter op.
GradCheckReport check_op(const std::function<Value(Tape&, const Value&)>& op,
                         Matrix input, std::uint64_t seed = 1) {
    Parameter p("x", std::move(input));
    Matrix r;  // fixed random cotangent, sized after first forward
    auto fwd = [&](Tape& t) {
        Value y = op(t, leaf(t, p));
        if (r.size() == 0) r = random_matrix(y.rows, y.cols, seed + 99);
        return reduce_sum(hadamard(y, constant(t, r)));
    };
    return grad_check(fwd, {&p}, 1e-4, seed);
}

}  // namespace

TEST_CASE("scalar op values and derivatives") {
    Tape t;
    Parameter p("x", Matrix(1, 1, 0.0));
    Value y = ad::tanh(leaf(t, p));
    CHECK(t.value(y)(0, 0) == 0.0);
    t.backward(reduce_sum(y));
    CHECK(p.grad(0, 0) == 1.0);  // tanh'(0) = 1

    Tape t2;
    Parameter q("x", Matrix(1, 1, -3.0));
    Value z = abs_pow(leaf(t2, q), 2.0);
    CHECK(t2.value(z)(0, 0) == 9.0);
    t2.backward(reduce_sum(z));
    CHECK(q.grad(0, 0) == -6.0);
}

TEST_CASE("abs_pow subgradient at zero and p<1 warning") {
    Tape t;
    Parameter p("x", Matrix(1, 1, 0.0));
    Value y = abs_pow(leaf(t, p), 2.0);
    t.backward(reduce_sum(y));
    CHECK(p.grad(0, 0) == 0.0);
    CHECK(t.warnings().empty());

    Tape t2;
    Parameter q("x", Matrix(1, 1, 0.0));
    (void)abs_pow(leaf(t2, q), 0.5);
    CHECK(t2.warnings().size() == 1);
}

TEST_CASE("backward on simple functionals") {
    Parameter w("W", random_matrix(3, 4, 2));
    {
        w.zero_grad();
        Tape t;
        t.backward(reduce_sum(leaf(t, w)));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(w.grad(i, j) == 1.0);
    }
    {
        w.zero_grad();
        Tape t;
        Value v = leaf(t, w);
        t.backward(reduce_sum(hadamard(v, v)));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                CHECK(w.grad(i, j) == 2.0 * w.value(i, j));
    }
}

TEST_CASE("backward requires a scalar loss and is deterministic") {
    Parameter w("W", random_matrix(2, 2, 3));
    Tape t;
    Value v = leaf(t, w);
    CHECK_THROWS_AS(t.backward(v), std::invalid_argument);

    Value l = reduce_sum(hadamard(v, ad::tanh(v)));
    w.zero_grad();
    t.backward(l);
    Matrix g1 = w.grad;
    w.zero_grad();
    t.backward(l);
    CHECK(w.grad == g1);  // bitwise identical
}

TEST_CASE("neighbor aggregation") {
    Graph tri = Graph::complete(3);
    Tape t;
    Matrix x(3, 1);
    x(0, 0) = 1;
    x(1, 0) = 2;
    x(2, 0) = 3;
    Value v = constant(t, x);
    // copies: tape pushes may reallocate node storage
    Matrix sum = t.value(neighbor_aggregate(tri, v, Aggregation::sum));
    CHECK(sum(0, 0) == 5.0);
    CHECK(sum(1, 0) == 4.0);
    CHECK(sum(2, 0) == 3.0);
    Matrix mean = t.value(neighbor_aggregate(tri, v, Aggregation::mean));
    CHECK(mean(0, 0) == 2.5);
    Matrix mx = t.value(neighbor_aggregate(tri, v, Aggregation::max));
    CHECK(mx(0, 0) == 3.0);
    CHECK(mx(2, 0) == 2.0);
}

TEST_CASE("max aggregation ties route to lowest index and are reported") {
    Graph tri = Graph::complete(3);
    Matrix x(3, 1, 1.0);  // all equal: tie everywhere
    Parameter p("x", x);
    auto fwd = [&](Tape& t) {
        return reduce_sum(neighbor_aggregate(tri, leaf(t, p), Aggregation::max));
    };
    // analytic gradient: each max routes to the lowest-index neighbor
    p.zero_grad();
    Tape t;
    t.backward(fwd(t));
    CHECK(p.grad(0, 0) == 2.0);  // argmax for rows 1 and 2
    CHECK(p.grad(1, 0) == 1.0);  // argmax for row 0
    CHECK(p.grad(2, 0) == 0.0);
    // finite differences sit on the kink: components skipped, not failed
    auto rep = grad_check(fwd, {&p}, 1e-4);
    CHECK(rep.skipped > 0);
}

TEST_CASE("finite-difference agreement per op") {
    Graph g = Graph::random_connected(8, 8, 17);
    Matrix x8 = random_matrix(8, 4, 5);

    CHECK(check_op([](Tape&, const Value& v) { return ad::tanh(v); }, x8).pass);
    CHECK(check_op([](Tape&, const Value& v) { return sigmoid(v); }, x8).pass);
    CHECK(check_op([](Tape&, const Value& v) { return relu(v); }, x8).pass);
    CHECK(check_op([](Tape&, const Value& v) { return leaky_relu(v, 0.2); }, x8).pass);
    CHECK(check_op([](Tape&, const Value& v) { return abs_pow(v, 3.0); }, x8).pass);
    CHECK(check_op([](Tape&, const Value& v) { return scalar_mul(v, -2.5); }, x8).pass);
    CHECK(check_op([&](Tape& t, const Value& v) {
              return matmul(v, constant(t, random_matrix(4, 3, 7)));
          }, x8).pass);
    CHECK(check_op([&](Tape& t, const Value& v) {
              return matmul(constant(t, random_matrix(5, 8, 8)), v);
          }, x8).pass);
    CHECK(check_op([&](Tape& t, const Value& v) {
              return add(v, constant(t, random_matrix(8, 4, 9)));
          }, x8).pass);
    CHECK(check_op([&](Tape& t, const Value& v) {
              return sub(v, constant(t, random_matrix(8, 4, 10)));
          }, x8).pass);
    CHECK(check_op([&](Tape& t, const Value& v) {
              return add(v, constant(t, random_matrix(1, 4, 11)));  // row broadcast
          }, x8).pass);
    CHECK(check_op([&](Tape& t, const Value& v) {
              return hadamard(v, constant(t, random_matrix(8, 4, 12)));
          }, x8).pass);
    CHECK(check_op([&](Tape& t, const Value& v) {
              return concat_cols(v, constant(t, random_matrix(8, 2, 13)));
          }, x8).pass);
    CHECK(check_op([](Tape&, const Value& v) {
              return row_gather(v, {0, 3, 3, 7});
          }, x8).pass);
    CHECK(check_op([&](Tape&, const Value& v) {
              return neighbor_aggregate(g, v, Aggregation::sum);
          }, x8).pass);
    CHECK(check_op([&](Tape&, const Value& v) {
              return neighbor_aggregate(g, v, Aggregation::mean);
          }, x8).pass);
    CHECK(check_op([&](Tape&, const Value& v) {
              return neighbor_aggregate(g, v, Aggregation::max);
          }, x8).pass);
    CHECK(check_op([](Tape&, const Value& v) { return reduce_mean(v); }, x8).pass);

    Csr csr = with_self_loops(g);
    Matrix col = random_matrix(8, 1, 14);
    CHECK(check_op([&](Tape& t, const Value& v) {
              return edge_scores(csr, v, constant(t, random_matrix(8, 1, 15)));
          }, col).pass);
    CHECK(check_op([&](Tape& t, const Value& v) {
              // v enters as both endpoint scores so the softmax input is not
              // a per-row constant shift of the parameter
              Value e = edge_scores(csr, v, v);
              return softmax_per_neighborhood(csr, leaky_relu(e, 0.2));
          }, col).pass);
    CHECK(check_op([&](Tape& t, const Value& v) {
              Value scores = constant(t, random_matrix(csr.num_entries(), 1, 17));
              Value alpha = softmax_per_neighborhood(csr, scores);
              return edge_weighted_sum(csr, alpha, v);
          }, x8).pass);

    // gating ops
    Matrix th = random_matrix(8, 4, 18);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 4; ++j) th(i, j) = 1.0 / (1.0 + std::exp(-th(i, j)));
    CHECK(check_op([&](Tape&, const Value& v) {
              return gate_rates(g, v, 2.0, Aggregation::sum);
          }, th).pass);
    CHECK(check_op([&](Tape&, const Value& v) {
              return gate_rates(g, v, 3.0, Aggregation::mean);
          }, th).pass);
    CHECK(check_op([&](Tape&, const Value& v) {
              return gate_rates_single(g, v, 2.0);
          }, th).pass);
    CHECK(check_op([&](Tape& t, const Value& v) {
              Value tau = constant(t, [&] {
                  Matrix m = random_matrix(8, 4, 19);
                  for (std::size_t i = 0; i < 8; ++i)
                      for (std::size_t j = 0; j < 4; ++j)
                          m(i, j) = std::abs(std::tanh(m(i, j)));
                  return m;
              }());
              Value s = constant(t, random_matrix(8, 4, 20));
              return convex_update(v, tau, s, 1.0);
          }, x8).pass);
    CHECK(check_op([&](Tape&, const Value& v) { return pow_const(v, 0.3); }, th).pass);
}

TEST_CASE("softmax per neighborhood rows sum to one") {
    Graph g = Graph::random_connected(10, 12, 4);
    Csr csr = with_self_loops(g);
    Tape t;
    Value scores = constant(t, random_matrix(csr.num_entries(), 1, 21));
    const Matrix& a = t.value(softmax_per_neighborhood(csr, scores));
    for (std::size_t i = 0; i < csr.num_rows(); ++i) {
        double s = 0.0;
        for (std::size_t k = csr.offsets[i]; k < csr.offsets[i + 1]; ++k) s += a(k, 0);
        CHECK_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("gate rates hand example") {
    // two adjacent nodes with rate fields 0.2 and 0.7, p = 2:
    // both rates are tanh(|0.5|^2) = tanh(0.25)
    Graph path = Graph::path(2);
    Tape t;
    Matrix th(2, 1);
    th(0, 0) = 0.2;
    th(1, 0) = 0.7;
    const Matrix& tau = t.value(gate_rates(path, constant(t, th), 2.0, Aggregation::sum));
    CHECK_THAT(tau(0, 0), Catch::Matchers::WithinAbs(std::tanh(0.25), 1e-15));
    CHECK_THAT(tau(1, 0), Catch::Matchers::WithinAbs(std::tanh(0.25), 1e-15));
    CHECK_THAT(tau(0, 0), Catch::Matchers::WithinAbs(0.244919, 1e-6));
}

TEST_CASE("gate rates stay in [0,1] and vanish on constant fields") {
    Graph g = Graph::random_connected(12, 15, 30);
    Rng rng(31);
    for (double p : {1.0, 2.0, 5.0}) {
        Tape t;
        Matrix th = random_matrix(12, 3, 32 + static_cast<std::uint64_t>(p));
        const Matrix& tau = t.value(gate_rates(g, constant(t, th), p, Aggregation::sum));
        for (std::size_t i = 0; i < 12; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(tau(i, j) >= 0.0);
                CHECK(tau(i, j) <= 1.0);
            }
    }
    Tape t;
    Matrix th(12, 3, 0.42);
    const Matrix& tau = t.value(gate_rates(g, constant(t, th), 2.0, Aggregation::sum));
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(tau(i, j) == 0.0);
}

TEST_CASE("single-rate and per-channel rates agree for m=1, p=1") {
    Graph g = Graph::random_connected(9, 10, 44);
    Matrix th = random_matrix(9, 1, 45);
    Tape t;
    Value v = constant(t, th);
    Matrix multi = t.value(gate_rates(g, v, 1.0, Aggregation::sum));
    Matrix single = t.value(gate_rates_single(g, v, 1.0));
    for (std::size_t i = 0; i < 9; ++i)
        CHECK_THAT(single(i, 0), Catch::Matchers::WithinAbs(multi(i, 0), 1e-15));
}

TEST_CASE("dropout") {
    Matrix x = random_matrix(20, 10, 50);
    Tape t;
    Value v = constant(t, x);
    // identity when not training
    CHECK(t.value(dropout(v, 0.5, 123, false)) == x);
    // deterministic given seed
    Matrix a = t.value(dropout(v, 0.5, 123, true));
    Matrix b = t.value(dropout(v, 0.5, 123, true));
    CHECK(a == b);
    // kept entries scaled by 1/keep
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t j = 0; j < 10; ++j) {
            if (a(i, j) == 0.0)
                ++zeros;
            else
                CHECK_THAT(a(i, j), Catch::Matchers::WithinRel(2.0 * x(i, j), 1e-15));
        }
    CHECK(zeros > 50);
    CHECK(zeros < 150);
    CHECK_THROWS_AS(dropout(v, 1.0, 1, true), std::invalid_argument);
}

TEST_CASE("masked losses") {
    // NMSE: perfect predictions give 0, the constant-mean predictor gives 1
    std::vector<double> targets{0.1, 0.4, 0.7, 1.0};
    std::vector<std::size_t> mask{0, 1, 2, 3};
    {
        Tape t;
        Matrix pred(4, 1);
        for (int i = 0; i < 4; ++i) pred(i, 0) = targets[i];
        CHECK(t.value(masked_nmse(constant(t, pred), targets, mask))(0, 0) == 0.0);
    }
    {
        Tape t;
        Matrix pred(4, 1, 0.55);  // the masked mean
        CHECK_THAT(t.value(masked_nmse(constant(t, pred), targets, mask))(0, 0),
                   Catch::Matchers::WithinRel(1.0, 1e-12));
    }
    // cross entropy of uniform logits over 2 classes = ln 2
    {
        Tape t;
        Matrix logits(3, 2, 0.0);
        std::vector<int> labels{0, 1, 0};
        CHECK_THAT(t.value(masked_cross_entropy(constant(t, logits), labels, {0, 1, 2}))(0, 0),
                   Catch::Matchers::WithinRel(std::log(2.0), 1e-12));
    }
    // gradients agree with finite differences
    {
        Parameter p("logits", random_matrix(6, 3, 60));
        std::vector<int> labels{0, 1, 2, 0, 1, 2};
        auto fwd = [&](Tape& t) {
            return masked_cross_entropy(leaf(t, p), labels, {0, 2, 4});
        };
        CHECK(grad_check(fwd, {&p}, 1e-4).pass);
    }
    {
        Parameter p("preds", random_matrix(6, 1, 61));
        std::vector<double> y{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
        auto fwd = [&](Tape& t) { return masked_nmse(leaf(t, p), y, {1, 2, 5}); };
        CHECK(grad_check(fwd, {&p}, 1e-4).pass);
    }
    Tape t;
    Matrix pred(4, 1);
    CHECK_THROWS_AS(masked_nmse(constant(t, pred), targets, {}), std::invalid_argument);
}

TEST_CASE("grad check is exact for linear models") {
    Parameter w("W", random_matrix(4, 4, 70));
    Matrix x = random_matrix(3, 4, 71);
    auto fwd = [&](Tape& t) {
        return reduce_sum(matmul(constant(t, x), leaf(t, w)));
    };
    // larger step: the difference quotient is exact for linear maps, so the
    // only error left is cancellation, which shrinks as h grows
    auto rep = grad_check(fwd, {&w}, 1e-9, 0, 1e-3);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("tape truncation frees nodes") {
    Tape t;
    Value a = constant(t, Matrix(2, 2, 1.0));
    const std::size_t mark = t.size();
    (void)ad::tanh(ad::tanh(a));
    CHECK(t.size() == mark + 2);
    t.truncate(mark);
    CHECK(t.size() == mark);
}

TEST_CASE("checkpoint round trip") {
    namespace fs = std::filesystem;
    Parameter a("layer.W", random_matrix(3, 5, 80));
    Parameter b("dec.b", random_matrix(1, 4, 81));
    const std::string path = fs::temp_directory_path() / "g2_ckpt_test.bin";
    save_checkpoint({&a, &b}, path);

    Parameter a2("layer.W", Matrix(3, 5));
    Parameter b2("dec.b", Matrix(1, 4));
    load_checkpoint({&b2, &a2}, path);  // order-independent, matched by name
    CHECK(a2.value == a.value);
    CHECK(b2.value == b.value);

    Parameter wrong("layer.W", Matrix(2, 5));
    CHECK_THROWS(load_checkpoint({&wrong}, path));
    Parameter missing("nope", Matrix(1, 1));
    CHECK_THROWS(load_checkpoint({&missing}, path));
    fs::remove(path);
}
