#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2/datasets.hpp"
#include "g2/model.hpp"
#include "g2/ops.hpp"

namespace g2 {

struct TrainConfig {
    double lr = 1e-2;
    double weight_decay = 0.0;
    double dropout_in = 0.0;
    double dropout_out = 0.0;
    std::size_t hidden_dim = 32;
    std::size_t epochs = 1000;
    std::size_t patience = 100;  // early stopping on validation metric
    std::uint64_t seed = 0;
    Task task = Task::classification;

    void validate() const {
        if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
        if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
        if (dropout_in < 0.0 || dropout_in > 0.9 || dropout_out < 0.0 || dropout_out > 0.9)
            throw std::invalid_argument("train config: dropout must be in [0, 0.9]");
    }
};

struct TrainResult {
    double best_val_metric = 0.0;  // higher is better (accuracy, or -NMSE)
    double test_metric = 0.0;      // task-native: accuracy, or NMSE
    std::size_t best_epoch = 0;
    std::vector<double> val_metric_per_epoch;
    std::size_t param_count = 0;
};

struct TrainingError : std::runtime_error {
    std::size_t epoch;
    explicit TrainingError(std::size_t epoch_)
        : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch_)),
          epoch(epoch_) {}
};

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<Matrix> m, v;
    std::size_t step = 0;

    explicit AdamState(const std::vector<ad::Parameter*>& params) {
        for (const ad::Parameter* p : params) {
            m.emplace_back(p->value.rows(), p->value.cols());
            v.emplace_back(p->value.rows(), p->value.cols());
        }
    }
};

inline void adam_step(std::vector<ad::Parameter*>& params, AdamState& state, double lr,
                      double weight_decay) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++state.step;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        ad::Parameter& p = *params[i];
        double* w = p.value.data();
        const double* g = p.grad.data();
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        for (std::size_t k = 0; k < p.count(); ++k) {
            m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
            v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            w[k] -= lr * (mhat / (std::sqrt(vhat) + kEps) + weight_decay * w[k]);
        }
    }
}

// ---------------------------------------------------------------------------
// Loss and training loop
// ---------------------------------------------------------------------------

inline ad::Value loss(Task task, const ad::Value& out, const LabeledDataset& ds,
                      const std::vector<std::size_t>& mask_rows) {
    if (mask_rows.empty()) throw std::invalid_argument("loss: empty mask");
    return task == Task::classification
               ? ad::masked_cross_entropy(out, ds.labels, mask_rows)
               : ad::masked_nmse(out, ds.targets, mask_rows);
}

/// Full-batch training with early stopping on the validation metric. The
/// reported test metric is the one observed at the best-validation epoch.
/// Bitwise reproducible given (model_cfg, dataset, train config).
inline TrainResult train(const G2Config& model_cfg, const LabeledDataset& ds,
                         const TrainConfig& tc, bool shared_weights = true) {
    tc.validate();
    G2Config cfg = model_cfg;
    cfg.coupling.in_dim = cfg.coupling.out_dim = tc.hidden_dim;
    if (cfg.use_separate_Fhat)
        cfg.coupling_hat.in_dim = cfg.coupling_hat.out_dim = tc.hidden_dim;
    const std::size_t out_dim =
        ds.task == Task::classification ? ds.num_classes : std::size_t{1};

    Rng rng(tc.seed);
    Model model = make_model(cfg, ds.features.cols(), out_dim, rng, shared_weights);
    CouplingWorkspace ws(ds.graph);
    std::vector<ad::Parameter*> params = model.parameters();
    AdamState adam(params);

    const auto train_rows = ds.mask_indices(ds.train_mask);
    const auto val_rows = ds.mask_indices(ds.val_mask);
    const auto test_rows = ds.mask_indices(ds.test_mask);

    auto evaluate = [&](const std::vector<std::size_t>& rows, bool as_val) {
        ad::Tape tape;
        ad::Value out = model_forward(model, ds.graph, ws, ds.features, tape, {});
        const Matrix& o = tape.value(out);
        if (ds.task == Task::classification) return accuracy(o, ds.labels, rows);
        const double e = nmse(o, ds.targets, rows);
        return as_val ? -e : e;  // validation metric is higher-is-better
    };

    TrainResult result;
    result.param_count = model.param_count();
    result.best_val_metric = -std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        for (ad::Parameter* p : params) p->zero_grad();
        {
            ad::Tape tape;
            ForwardOptions opt{tc.dropout_in, tc.dropout_out, true,
                               mix_seed(tc.seed, 1000 + epoch)};
            ad::Value out = model_forward(model, ds.graph, ws, ds.features, tape, opt);
            ad::Value l = loss(ds.task, out, ds, train_rows);
            if (!std::isfinite(tape.value(l)(0, 0))) throw TrainingError(epoch);
            tape.backward(l);
        }
        adam_step(params, adam, tc.lr, tc.weight_decay);

        const double val = evaluate(val_rows, true);
        result.val_metric_per_epoch.push_back(val);
        if (val > result.best_val_metric) {
            result.best_val_metric = val;
            result.test_metric = evaluate(test_rows, false);
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best > tc.patience) {
            break;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Deterministic grid search
// ---------------------------------------------------------------------------

struct GridPoint {
    G2Config model;
    TrainConfig train;
};

struct LeaderboardEntry {
    std::size_t grid_index = 0;
    double val_metric = 0.0;
    double test_metric = 0.0;
    std::size_t param_count = 0;
};

struct GridSearchResult {
    GridPoint best;
    std::vector<LeaderboardEntry> leaderboard;  // sorted descending by val metric
};

/// Trains every grid point and ranks by validation metric. Ties break in
/// favor of the earlier grid index (callers enumerate grids in lexicographic
/// config order), so the outcome is deterministic.
inline GridSearchResult grid_search(const std::vector<GridPoint>& grid,
                                    const LabeledDataset& ds) {
    if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
    GridSearchResult result;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        TrainResult r = train(grid[i].model, ds, grid[i].train);
        result.leaderboard.push_back({i, r.best_val_metric, r.test_metric, r.param_count});
    }
    std::stable_sort(result.leaderboard.begin(), result.leaderboard.end(),
                     [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
                         return a.val_metric > b.val_metric;
                     });
    result.best = grid[result.leaderboard.front().grid_index];
    return result;
}

}  // namespace g2
