#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "g2/rng.hpp"

namespace g2 {

using NodeId = std::size_t;
using EdgeList = std::vector<std::pair<NodeId, NodeId>>;

/// Immutable undirected graph in CSR form. Each undirected edge {i,j} is
/// stored twice (i->j and j->i); self-loops are rejected. Neighbor lists
/// are sorted and duplicate-free.
class Graph {
public:
    /// Build from an undirected edge list (each edge listed once or twice;
    /// duplicates are merged, orientation is symmetrized).
    static Graph from_edges(std::size_t num_nodes, const EdgeList& edges) {
        std::vector<std::set<NodeId>> adj(num_nodes);
        for (auto [i, j] : edges) {
            if (i >= num_nodes || j >= num_nodes)
                throw std::invalid_argument("edge endpoint out of range");
            if (i == j) throw std::invalid_argument("self-loops are not allowed");
            adj[i].insert(j);
            adj[j].insert(i);
        }
        Graph g;
        g.row_offsets_.reserve(num_nodes + 1);
        for (NodeId i = 0; i < num_nodes; ++i) {
            g.col_indices_.insert(g.col_indices_.end(), adj[i].begin(), adj[i].end());
            g.row_offsets_.push_back(g.col_indices_.size());
        }
        return g;
    }

    /// side x side grid with 4-neighbor connectivity, no wraparound.
    static Graph grid2d(std::size_t side) {
        if (side < 2) throw std::invalid_argument("grid2d: side must be >= 2");
        EdgeList edges;
        auto id = [side](std::size_t r, std::size_t c) { return r * side + c; };
        for (std::size_t r = 0; r < side; ++r)
            for (std::size_t c = 0; c < side; ++c) {
                if (c + 1 < side) edges.emplace_back(id(r, c), id(r, c + 1));
                if (r + 1 < side) edges.emplace_back(id(r, c), id(r + 1, c));
            }
        return from_edges(side * side, edges);
    }

    static Graph cycle(std::size_t n) {
        if (n < 3) throw std::invalid_argument("cycle: need at least 3 nodes");
        EdgeList edges;
        for (NodeId i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
        return from_edges(n, edges);
    }

    static Graph path(std::size_t n) {
        if (n < 2) throw std::invalid_argument("path: need at least 2 nodes");
        EdgeList edges;
        for (NodeId i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
        return from_edges(n, edges);
    }

    static Graph complete(std::size_t n) {
        EdgeList edges;
        for (NodeId i = 0; i < n; ++i)
            for (NodeId j = i + 1; j < n; ++j) edges.emplace_back(i, j);
        return from_edges(n, edges);
    }

    /// Random connected graph: a random spanning tree plus `extra_edges`
    /// random non-duplicate edges.
    static Graph random_connected(std::size_t n, std::size_t extra_edges, std::uint64_t seed) {
        if (n < 2) throw std::invalid_argument("random_connected: need at least 2 nodes");
        Rng rng(seed);
        EdgeList edges;
        std::set<std::pair<NodeId, NodeId>> seen;
        auto key = [](NodeId a, NodeId b) {
            return std::pair<NodeId, NodeId>{std::min(a, b), std::max(a, b)};
        };
        for (NodeId i = 1; i < n; ++i) {
            NodeId j = rng.below(i);
            edges.emplace_back(i, j);
            seen.insert(key(i, j));
        }
        const std::size_t max_extra = n * (n - 1) / 2 - (n - 1);
        extra_edges = std::min(extra_edges, max_extra);
        while (extra_edges > 0) {
            NodeId a = rng.below(n), b = rng.below(n);
            if (a == b || seen.count(key(a, b))) continue;
            edges.emplace_back(a, b);
            seen.insert(key(a, b));
            --extra_edges;
        }
        return from_edges(n, edges);
    }

    std::size_t num_nodes() const { return row_offsets_.size() - 1; }
    std::size_t num_directed_edges() const { return col_indices_.size(); }
    std::size_t num_edges() const { return col_indices_.size() / 2; }

    std::span<const NodeId> neighbors(NodeId i) const {
        return {col_indices_.data() + row_offsets_[i],
                col_indices_.data() + row_offsets_[i + 1]};
    }

    std::size_t degree(NodeId i) const { return row_offsets_[i + 1] - row_offsets_[i]; }

    std::size_t max_degree() const {
        std::size_t d = 0;
        for (NodeId i = 0; i < num_nodes(); ++i) d = std::max(d, degree(i));
        return d;
    }

    const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
    const std::vector<NodeId>& col_indices() const { return col_indices_; }

    /// BFS distances from `source`; unreachable nodes get SIZE_MAX.
    std::vector<std::size_t> bfs_distances(NodeId source) const {
        std::vector<std::size_t> dist(num_nodes(), SIZE_MAX);
        std::queue<NodeId> q;
        dist[source] = 0;
        q.push(source);
        while (!q.empty()) {
            NodeId u = q.front();
            q.pop();
            for (NodeId v : neighbors(u))
                if (dist[v] == SIZE_MAX) {
                    dist[v] = dist[u] + 1;
                    q.push(v);
                }
        }
        return dist;
    }

    /// Max BFS distance from `node`; throws on disconnected graphs,
    /// naming an unreachable node.
    std::size_t eccentricity(NodeId node) const {
        auto dist = bfs_distances(node);
        std::size_t ecc = 0;
        for (NodeId i = 0; i < num_nodes(); ++i) {
            if (dist[i] == SIZE_MAX)
                throw std::domain_error("graph is disconnected: node " + std::to_string(i) +
                                        " unreachable from node " + std::to_string(node));
            ecc = std::max(ecc, dist[i]);
        }
        return ecc;
    }

    bool is_connected() const {
        if (num_nodes() == 0) return true;
        auto dist = bfs_distances(0);
        return std::none_of(dist.begin(), dist.end(),
                            [](std::size_t d) { return d == SIZE_MAX; });
    }

private:
    Graph() = default;
    std::vector<std::size_t> row_offsets_{0};
    std::vector<NodeId> col_indices_;
};

/// Edge-list file: UTF-8 text, one "i j" pair per line, 0-based, each
/// undirected edge listed once. The loader symmetrizes and sorts.
inline Graph load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open edge list: " + path);
    EdgeList edges;
    std::size_t max_node = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        NodeId i, j;
        if (!(ss >> i >> j)) throw std::runtime_error("malformed edge line: " + line);
        edges.emplace_back(i, j);
        max_node = std::max({max_node, i, j});
    }
    return Graph::from_edges(edges.empty() ? 0 : max_node + 1, edges);
}

inline void save_edge_list(const Graph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write edge list: " + path);
    for (NodeId i = 0; i < g.num_nodes(); ++i)
        for (NodeId j : g.neighbors(i))
            if (i < j) out << i << " " << j << "\n";
}

}  // namespace g2
