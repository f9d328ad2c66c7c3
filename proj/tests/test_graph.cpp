#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "g2/datasets.hpp"
#include "g2/diagnostics.hpp"
#include "g2/graph.hpp"

using namespace g2;

TEST_CASE("grid2d shapes and degrees") {
    Graph g10 = Graph::grid2d(10);
    CHECK(g10.num_nodes() == 100);
    CHECK(g10.num_edges() == 180);

    Graph g2x2 = Graph::grid2d(2);
    CHECK(g2x2.num_nodes() == 4);
    CHECK(g2x2.num_edges() == 4);
    for (NodeId i = 0; i < 4; ++i) CHECK(g2x2.degree(i) == 2);

    Graph g3 = Graph::grid2d(3);
    CHECK(g3.degree(4) == 4);  // center of a 3x3 grid
    CHECK(g3.degree(0) == 2);
    CHECK(g3.degree(1) == 3);

    CHECK_THROWS_AS(Graph::grid2d(1), std::invalid_argument);
}

TEST_CASE("csr structural invariants") {
    Graph g = Graph::random_connected(40, 60, 123);
    const auto& off = g.row_offsets();
    REQUIRE(off.size() == g.num_nodes() + 1);
    CHECK(off.front() == 0);
    CHECK(off.back() == g.num_directed_edges());
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
        auto nb = g.neighbors(i);
        for (std::size_t k = 0; k + 1 < nb.size(); ++k) CHECK(nb[k] < nb[k + 1]);
        for (NodeId j : nb) {
            auto back = g.neighbors(j);
            CHECK(std::find(back.begin(), back.end(), i) != back.end());
        }
    }
    CHECK(g.is_connected());
}

TEST_CASE("from_edges rejects bad input") {
    CHECK_THROWS_AS(Graph::from_edges(3, {{0, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(Graph::from_edges(3, {{0, 3}}), std::invalid_argument);
}

TEST_CASE("graph gradient") {
    Graph path = Graph::path(2);
    auto grad = graph_gradient(path, {3.0, 5.0});
    CHECK(grad.at(0, 1) == 2.0);
    CHECK(grad.at(1, 0) == -2.0);

    Graph tri = Graph::complete(3);
    auto g2v = graph_gradient(tri, {0.0, 1.0, 2.0});
    CHECK(g2v.at(0, 1) == 1.0);
    CHECK(g2v.at(0, 2) == 2.0);
    CHECK(g2v.at(1, 2) == 1.0);

    auto gc = graph_gradient(tri, {7.0, 7.0, 7.0});
    for (double v : gc.values) CHECK(v == 0.0);

    CHECK_THROWS_AS(graph_gradient(tri, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("graph gradient antisymmetry property") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Graph g = Graph::random_connected(12, 10, 100 + trial);
        std::vector<double> y(g.num_nodes());
        for (double& v : y) v = rng.normal();
        auto grad = graph_gradient(g, y);
        for (NodeId i = 0; i < g.num_nodes(); ++i)
            for (NodeId j : g.neighbors(i))
                CHECK(grad.at(i, j) == -grad.at(j, i));
    }
}

TEST_CASE("dirichlet energy") {
    Graph tri = Graph::complete(3);
    Matrix x(3, 1);
    x(0, 0) = 0;
    x(1, 0) = 1;
    x(2, 0) = 2;
    CHECK_THAT(dirichlet_energy(tri, x), Catch::Matchers::WithinRel(4.0, 1e-14));

    Matrix c(3, 2, 3.5);
    CHECK(dirichlet_energy(tri, c) == 0.0);

    // translation invariance
    Rng rng(9);
    Graph g = Graph::random_connected(15, 20, 42);
    Matrix a(15, 3), b(15, 3);
    std::vector<double> shift{1.7, -2.3, 0.4};
    for (std::size_t i = 0; i < 15; ++i)
        for (std::size_t k = 0; k < 3; ++k) {
            a(i, k) = rng.normal();
            b(i, k) = a(i, k) + shift[k];
        }
    CHECK_THAT(dirichlet_energy(g, a),
               Catch::Matchers::WithinRel(dirichlet_energy(g, b), 1e-12));

    CHECK_THROWS_AS(dirichlet_energy(tri, Matrix(2, 1)), std::invalid_argument);
}

TEST_CASE("dirichlet energy zero iff constant per component") {
    // two components: a triangle {0,1,2} and an edge {3,4}
    Graph g = Graph::from_edges(5, {{0, 1}, {1, 2}, {0, 2}, {3, 4}});
    Matrix x(5, 1);
    x(0, 0) = x(1, 0) = x(2, 0) = 2.0;
    x(3, 0) = x(4, 0) = -1.0;
    CHECK(dirichlet_energy(g, x) == 0.0);
    x(4, 0) = -1.5;
    CHECK(dirichlet_energy(g, x) > 0.0);
}

TEST_CASE("mad") {
    Graph tri = Graph::complete(3);
    Matrix c(3, 2, 1.0);
    CHECK_THAT(mad(tri, c), Catch::Matchers::WithinAbs(0.0, 1e-12));

    Graph path = Graph::path(2);
    Matrix x = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    CHECK_THAT(mad(path, x), Catch::Matchers::WithinAbs(1.0, 1e-14));

    // degenerate rows count as distance 1
    Matrix z(2, 2, 0.0);
    z(0, 0) = 1.0;
    CHECK_THAT(mad(path, z), Catch::Matchers::WithinAbs(1.0, 1e-14));
}

TEST_CASE("eccentricity") {
    CHECK(Graph::path(5).eccentricity(0) == 4);
    CHECK(Graph::complete(4).eccentricity(2) == 1);
    CHECK(Graph::grid2d(10).eccentricity(0) == 18);

    Graph disc = Graph::from_edges(4, {{0, 1}, {2, 3}});
    CHECK_THROWS_AS(disc.eccentricity(0), std::domain_error);
    CHECK_FALSE(disc.is_connected());
}

TEST_CASE("eccentricity matches brute-force all-pairs bfs") {
    for (int trial = 0; trial < 10; ++trial) {
        Graph g = Graph::random_connected(30, 25, 7000 + trial);
        for (NodeId n = 0; n < g.num_nodes(); n += 7) {
            auto dist = g.bfs_distances(n);
            std::size_t expect = *std::max_element(dist.begin(), dist.end());
            CHECK(g.eccentricity(n) == expect);
        }
    }
}

TEST_CASE("poincare check") {
    Graph p3 = Graph::path(3);
    auto r = poincare_check(p3, {0.0, 1.0, 2.0}, 0);
    CHECK(r.lhs == 5.0);
    CHECK(r.rhs == 2.0 * 2.0 * 4.0);
    CHECK(r.holds);

    auto z = poincare_check(p3, {0.0, 0.0, 0.0}, 1);
    CHECK(z.lhs == 0.0);
    CHECK(z.rhs == 0.0);
    CHECK(z.holds);

    CHECK_THROWS_AS(poincare_check(p3, {1.0, 0.0, 0.0}, 0), std::invalid_argument);
}

TEST_CASE("poincare inequality holds on randomized trials") {
    Rng rng(77);
    int trials = 0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 5 + rng.below(46);
        Graph g = Graph::random_connected(n, rng.below(2 * n), 900 + t);
        const NodeId anchor = rng.below(n);
        std::vector<double> y(n);
        for (double& v : y) v = rng.uniform(-5.0, 5.0);
        y[anchor] = 0.0;
        auto r = poincare_check(g, y, anchor);
        CHECK(r.holds);
        ++trials;
    }
    CHECK(trials == 200);
}

TEST_CASE("edge list round trip") {
    Graph g = Graph::random_connected(20, 15, 3);
    const std::string path = std::filesystem::temp_directory_path() / "g2_edges_test.txt";
    save_edge_list(g, path);
    Graph h = load_edge_list(path);
    CHECK(g.row_offsets() == h.row_offsets());
    CHECK(g.col_indices() == h.col_indices());
    std::filesystem::remove(path);
}

TEST_CASE("synthetic homophily dataset") {
    LabeledDataset ds = synthetic_homophily(5, 500, 0.99, 16, 7);
    const double h = edge_homophily(ds.graph, ds.labels);
    CHECK(h >= 0.97);
    CHECK(h <= 1.0);

    // balanced classes +-1
    std::vector<int> counts(5, 0);
    for (int l : ds.labels) ++counts[l];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    CHECK(*hi - *lo <= 1);

    // split masks disjoint and covering
    for (std::size_t i = 0; i < 500; ++i)
        CHECK(int(ds.train_mask[i]) + int(ds.val_mask[i]) + int(ds.test_mask[i]) == 1);

    // realized target near 0 forces cross-class edges only
    LabeledDataset ds0 = synthetic_homophily(2, 200, 0.0, 8, 11);
    CHECK(edge_homophily(ds0.graph, ds0.labels) <= 0.02);

    // determinism
    LabeledDataset a = synthetic_homophily(3, 120, 0.5, 8, 42);
    LabeledDataset b = synthetic_homophily(3, 120, 0.5, 8, 42);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    CHECK(a.graph.col_indices() == b.graph.col_indices());
    CHECK(a.train_mask == b.train_mask);

    CHECK_THROWS_AS(synthetic_homophily(5, 20, 0.5, 8, 1), std::invalid_argument);
}

TEST_CASE("synthetic multiscale dataset") {
    LabeledDataset ds = synthetic_multiscale(1000, 3);
    REQUIRE(ds.task == Task::regression);
    double lo = 1.0, hi = 0.0;
    for (double t : ds.targets) {
        CHECK(t >= 0.0);
        CHECK(t <= 1.0);
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    CHECK(hi / lo >= 1e4);

    LabeledDataset again = synthetic_multiscale(1000, 3);
    CHECK(ds.targets == again.targets);

    CHECK_THROWS_AS(synthetic_multiscale(50, 1), std::invalid_argument);
}

TEST_CASE("dataset bundle round trip") {
    namespace fs = std::filesystem;
    const std::string dir = fs::temp_directory_path() / "g2_bundle_test";
    LabeledDataset ds = synthetic_homophily(3, 90, 0.4, 6, 5);
    save_bundle(ds, dir);
    LabeledDataset back = load_bundle(dir);
    CHECK(back.graph.col_indices() == ds.graph.col_indices());
    CHECK(back.features == ds.features);
    CHECK(back.labels == ds.labels);
    CHECK(back.num_classes == ds.num_classes);
    CHECK(back.train_mask == ds.train_mask);
    CHECK(back.val_mask == ds.val_mask);
    CHECK(back.test_mask == ds.test_mask);

    LabeledDataset reg = synthetic_multiscale(100, 8);
    save_bundle(reg, dir);
    LabeledDataset rback = load_bundle(dir);
    CHECK(rback.task == Task::regression);
    CHECK(rback.targets == reg.targets);
    fs::remove_all(dir);
}
