#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2/graph.hpp"
#include "g2/matrix.hpp"
#include "g2/rng.hpp"

namespace g2 {

enum class Task { classification, regression };

/// A node-level learning problem: graph, input features, class labels or
/// regression targets, and disjoint train/val/test masks covering every node.
struct LabeledDataset {
    Graph graph;
    FeatureMatrix features;            // v x m
    Task task = Task::classification;
    std::vector<int> labels;           // classification
    std::vector<double> targets;       // regression
    std::size_t num_classes = 0;
    std::vector<std::uint8_t> train_mask, val_mask, test_mask;

    std::vector<std::size_t> mask_indices(const std::vector<std::uint8_t>& mask) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) idx.push_back(i);
        return idx;
    }
};

/// Fraction of undirected edges joining same-class endpoints.
inline double edge_homophily(const Graph& g, const std::vector<int>& labels) {
    std::size_t same = 0, total = 0;
    for (NodeId i = 0; i < g.num_nodes(); ++i)
        for (NodeId j : g.neighbors(i))
            if (i < j) {
                ++total;
                if (labels[i] == labels[j]) ++same;
            }
    return total == 0 ? 0.0 : static_cast<double>(same) / static_cast<double>(total);
}

namespace detail {

/// Stratified 48/32/20 train/val/test split.
inline void stratified_split(LabeledDataset& ds, const std::vector<int>& strata, Rng& rng) {
    const std::size_t v = ds.graph.num_nodes();
    ds.train_mask.assign(v, 0);
    ds.val_mask.assign(v, 0);
    ds.test_mask.assign(v, 0);
    const int max_s = *std::max_element(strata.begin(), strata.end());
    for (int s = 0; s <= max_s; ++s) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < v; ++i)
            if (strata[i] == s) idx.push_back(i);
        // Fisher-Yates
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.below(i)]);
        const std::size_t a = static_cast<std::size_t>(0.48 * idx.size());
        const std::size_t b = static_cast<std::size_t>(0.80 * idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (k < a)
                ds.train_mask[idx[k]] = 1;
            else if (k < b)
                ds.val_mask[idx[k]] = 1;
            else
                ds.test_mask[idx[k]] = 1;
        }
    }
}

/// Planted-partition edge placement with an exact same-class edge budget,
/// so the realized homophily matches the target up to rounding.
inline EdgeList homophily_edges(const std::vector<int>& labels, std::size_t classes,
                                double target_h, Rng& rng) {
    const std::size_t v = labels.size();
    const std::size_t total_edges = 4 * v;  // expected mean degree 8
    const auto n_same = static_cast<std::size_t>(std::llround(target_h * total_edges));
    if (classes < 2 && n_same < total_edges)
        throw std::runtime_error("homophily target infeasible with a single class");

    std::vector<std::vector<NodeId>> by_class(classes);
    for (std::size_t i = 0; i < v; ++i) by_class[labels[i]].push_back(i);

    std::set<std::pair<NodeId, NodeId>> seen;
    EdgeList edges;
    auto try_add = [&](bool same) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            NodeId a, b;
            if (same) {
                const auto& cls = by_class[rng.below(classes)];
                if (cls.size() < 2) continue;
                a = cls[rng.below(cls.size())];
                b = cls[rng.below(cls.size())];
            } else {
                a = rng.below(v);
                b = rng.below(v);
                if (labels[a] == labels[b]) continue;
            }
            if (a == b) continue;
            const std::pair<NodeId, NodeId> key{std::min(a, b), std::max(a, b)};
            if (seen.count(key)) continue;
            seen.insert(key);
            edges.emplace_back(key.first, key.second);
            return;
        }
        throw std::runtime_error("homophily generator: edge placement infeasible");
    };
    for (std::size_t e = 0; e < n_same; ++e) try_add(true);
    for (std::size_t e = n_same; e < total_edges; ++e) try_add(false);
    return edges;
}

}  // namespace detail

/// Synthetic node-classification dataset with a controlled edge-homophily
/// level. Balanced classes, class-dependent Gaussian features
/// (mean = 3 * one-hot(class mod feat_dim), unit variance), stratified
/// 48/32/20 split. Deterministic in `seed`.
inline LabeledDataset synthetic_homophily(std::size_t classes, std::size_t nodes,
                                          double target_h, std::size_t feat_dim,
                                          std::uint64_t seed) {
    if (classes < 1 || nodes < 10 * classes)
        throw std::invalid_argument("synthetic_homophily: need nodes >= 10*classes");
    if (target_h < 0.0 || target_h > 1.0)
        throw std::invalid_argument("synthetic_homophily: target_h must be in [0,1]");
    Rng rng(seed);

    std::vector<int> labels(nodes);
    for (std::size_t i = 0; i < nodes; ++i) labels[i] = static_cast<int>(i % classes);
    for (std::size_t i = nodes; i > 1; --i)
        std::swap(labels[i - 1], labels[rng.below(i)]);

    LabeledDataset ds{Graph::from_edges(nodes, detail::homophily_edges(labels, classes,
                                                                       target_h, rng)),
                      FeatureMatrix(nodes, feat_dim), Task::classification, labels, {},
                      classes};
    for (std::size_t i = 0; i < nodes; ++i)
        for (std::size_t k = 0; k < feat_dim; ++k) {
            ds.features(i, k) = rng.normal();
            if (k == static_cast<std::size_t>(labels[i]) % feat_dim) ds.features(i, k) += 3.0;
        }
    detail::stratified_split(ds, labels, rng);
    return ds;
}

/// Synthetic multi-scale node regression: targets log-uniform in
/// [1e-5, 1] (already inside [0,1]); graph from the homophily generator at
/// target_h = 0.22; 16-dim features whose first channel is
/// log10(target) + N(0, 0.5) and the rest pure noise.
inline LabeledDataset synthetic_multiscale(std::size_t nodes, std::uint64_t seed) {
    if (nodes < 100) throw std::invalid_argument("synthetic_multiscale: need nodes >= 100");
    constexpr std::size_t kClasses = 5;
    constexpr std::size_t kFeatDim = 16;
    Rng rng(seed);

    std::vector<int> labels(nodes);
    for (std::size_t i = 0; i < nodes; ++i) labels[i] = static_cast<int>(i % kClasses);
    for (std::size_t i = nodes; i > 1; --i)
        std::swap(labels[i - 1], labels[rng.below(i)]);

    LabeledDataset ds{Graph::from_edges(nodes, detail::homophily_edges(labels, kClasses,
                                                                       0.22, rng)),
                      FeatureMatrix(nodes, kFeatDim), Task::regression, {}, {}, 0};
    ds.targets.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i)
        ds.targets[i] = std::pow(10.0, rng.uniform(-5.0, 0.0));
    for (std::size_t i = 0; i < nodes; ++i) {
        ds.features(i, 0) = std::log10(ds.targets[i]) + 0.5 * rng.normal();
        for (std::size_t k = 1; k < kFeatDim; ++k) ds.features(i, k) = rng.normal();
    }
    detail::stratified_split(ds, labels, rng);
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset bundle I/O: a directory with edges.txt, features.csv, labels.csv,
// splits.csv.
// ---------------------------------------------------------------------------

inline void save_bundle(const LabeledDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_edge_list(ds.graph, dir + "/edges.txt");

    std::ofstream f(dir + "/features.csv");
    for (std::size_t k = 0; k < ds.features.cols(); ++k) f << (k ? "," : "") << "f" << k;
    f << "\n";
    f.precision(17);
    for (std::size_t i = 0; i < ds.features.rows(); ++i) {
        for (std::size_t k = 0; k < ds.features.cols(); ++k)
            f << (k ? "," : "") << ds.features(i, k);
        f << "\n";
    }

    std::ofstream l(dir + "/labels.csv");
    l.precision(17);
    if (ds.task == Task::classification) {
        l << "label\n";
        for (int y : ds.labels) l << y << "\n";
    } else {
        l << "target\n";
        for (double y : ds.targets) l << y << "\n";
    }

    std::ofstream s(dir + "/splits.csv");
    s << "train,val,test\n";
    for (std::size_t i = 0; i < ds.graph.num_nodes(); ++i)
        s << int(ds.train_mask[i]) << "," << int(ds.val_mask[i]) << ","
          << int(ds.test_mask[i]) << "\n";
}

inline LabeledDataset load_bundle(const std::string& dir) {
    LabeledDataset ds{load_edge_list(dir + "/edges.txt"), {}, Task::classification,
                      {}, {}, 0};
    const std::size_t v = ds.graph.num_nodes();

    auto read_csv = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open " + path);
        std::string header;
        std::getline(in, header);
        std::vector<std::vector<double>> rows;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<double> row;
            std::istringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
            rows.push_back(std::move(row));
        }
        return std::pair{header, rows};
    };

    auto [fh, frows] = read_csv(dir + "/features.csv");
    if (frows.size() != v) throw std::runtime_error("features.csv row count != num nodes");
    ds.features = FeatureMatrix(v, frows.empty() ? 0 : frows[0].size());
    for (std::size_t i = 0; i < v; ++i)
        for (std::size_t k = 0; k < ds.features.cols(); ++k) ds.features(i, k) = frows[i][k];

    auto [lh, lrows] = read_csv(dir + "/labels.csv");
    if (lrows.size() != v) throw std::runtime_error("labels.csv row count != num nodes");
    if (lh == "target") {
        ds.task = Task::regression;
        for (const auto& r : lrows) ds.targets.push_back(r[0]);
    } else {
        ds.task = Task::classification;
        for (const auto& r : lrows) ds.labels.push_back(static_cast<int>(r[0]));
        ds.num_classes = ds.labels.empty()
                             ? 0
                             : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    }

    auto [sh, srows] = read_csv(dir + "/splits.csv");
    if (srows.size() != v) throw std::runtime_error("splits.csv row count != num nodes");
    ds.train_mask.resize(v);
    ds.val_mask.resize(v);
    ds.test_mask.resize(v);
    for (std::size_t i = 0; i < v; ++i) {
        ds.train_mask[i] = srows[i][0] != 0.0;
        ds.val_mask[i] = srows[i][1] != 0.0;
        ds.test_mask[i] = srows[i][2] != 0.0;
    }
    return ds;
}

}  // namespace g2
