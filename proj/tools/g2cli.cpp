// Command-line experiment harness: deep-propagation energy traces, the
// perturbation-decay laboratory, and the synthetic training sweeps, all
// emitting plot-ready CSV / JSON-lines with deterministic, byte-identical
// output for a given seed.
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "g2/diagnostics.hpp"
#include "g2/dynamics.hpp"
#include "g2/gradcheck.hpp"
#include "g2/training.hpp"

using nlohmann::json;
using namespace g2;

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDomain = 3;

struct ModelId {
    G2Mode mode;
    CouplingKind kind;
};

ModelId parse_model(const std::string& s) {
    if (s == "gcn") return {G2Mode::plain, CouplingKind::gcn};
    if (s == "gat") return {G2Mode::plain, CouplingKind::gat};
    if (s == "sage") return {G2Mode::plain, CouplingKind::sage};
    if (s == "g2-gcn") return {G2Mode::g2, CouplingKind::gcn};
    if (s == "g2-gat") return {G2Mode::g2, CouplingKind::gat};
    if (s == "g2-sage") return {G2Mode::g2, CouplingKind::sage};
    throw CLI::ValidationError("--model", "unknown model id: " + s);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<double> parse_points(const std::string& s) {
    // "a..b" = 5 log-spaced points from a to b; otherwise a comma list
    const auto dots = s.find("..");
    std::vector<double> pts;
    if (dots != std::string::npos) {
        const double a = std::stod(s.substr(0, dots));
        const double b = std::stod(s.substr(dots + 2));
        if (a <= 0.0 || b <= 0.0)
            throw CLI::ValidationError("--points", "log-spaced range needs positive endpoints");
        const int n = 5;
        for (int i = 0; i < n; ++i)
            pts.push_back(std::exp(std::log(a) + (std::log(b) - std::log(a)) * i / (n - 1)));
    } else {
        for (const std::string& item : split_list(s)) pts.push_back(std::stod(item));
    }
    if (pts.empty()) throw CLI::ValidationError("--points", "empty sweep");
    return pts;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out.precision(17);
    return out;
}

/// Runs `tasks` on `jobs` worker threads; each task fills its own slot, so
/// the caller can emit results in sweep order regardless of completion order.
void run_pool(std::vector<std::function<void()>>& tasks, std::size_t jobs) {
    jobs = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
    if (jobs == 1) {
        for (auto& t : tasks) t();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w)
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1))
                tasks[i]();
        });
    for (auto& t : workers) t.join();
}

// ---------------------------------------------------------------------------
// Training sweep scaffolding
// ---------------------------------------------------------------------------

struct SweepCommon {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::size_t trials = 5;
    std::size_t nodes = 500;
    std::size_t classes = 5;
    std::size_t feat_dim = 16;
    std::size_t hidden = 32;
    std::size_t layers = 4;
    std::size_t epochs = 400;
    std::size_t patience = 100;
    double lr = 0.01;
    double p = 2.0;
    std::string out;

    void add_flags(CLI::App* cmd, bool with_layers = true) {
        cmd->add_option("--seed", seed, "global seed; all sub-seeds derive from it");
        cmd->add_option("--jobs", jobs, "worker threads for sweep points")
            ->envname("G2_JOBS")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--trials", trials, "independent (dataset, init) repetitions")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--nodes", nodes)->check(CLI::PositiveNumber);
        cmd->add_option("--hidden", hidden)->check(CLI::PositiveNumber);
        if (with_layers) cmd->add_option("--layers", layers)->check(CLI::PositiveNumber);
        cmd->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
        cmd->add_option("--patience", patience);
        cmd->add_option("--lr", lr)->check(CLI::PositiveNumber);
        cmd->add_option("--p", p, "gradient-gating exponent")->check(CLI::NonNegativeNumber);
        cmd->add_option("--out", out, "JSON-lines output file");
    }

    G2Config model_config(const ModelId& id) const {
        G2Config cfg;
        cfg.mode = id.mode;
        cfg.p = p;
        cfg.num_layers = layers;
        cfg.activation = Activation::relu;
        cfg.coupling = CouplingConfig{id.kind, hidden, hidden};
        // Gated models learn the rate field with a coupling of their own;
        // the parameter-matched variants (ablate --axis params / fhat)
        // override this to share F's weights.
        if (is_gated(cfg.mode)) {
            cfg.use_separate_Fhat = true;
            cfg.coupling_hat = cfg.coupling;
        }
        return cfg;
    }

    TrainConfig train_config(Task task, std::uint64_t sub_seed) const {
        TrainConfig tc;
        tc.lr = lr;
        tc.hidden_dim = hidden;
        tc.epochs = epochs;
        tc.patience = patience;
        tc.seed = sub_seed;
        tc.task = task;
        return tc;
    }
};

/// One sweep point: a self-describing record plus the training call that
/// fills in its metrics.
struct SweepPoint {
    json record;
    G2Config cfg;
    LabeledDataset dataset;
    TrainConfig tc;
};

int emit_sweep(const std::string& experiment, std::vector<SweepPoint>& points,
               const SweepCommon& sc) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::function<void()>> tasks;
    tasks.reserve(points.size());
    for (SweepPoint& pt : points)
        tasks.push_back([&pt] {
            TrainResult r = train(pt.cfg, pt.dataset, pt.tc);
            pt.record["best_epoch"] = r.best_epoch;
            pt.record["val_metric"] = r.best_val_metric;
            pt.record["test_metric"] = r.test_metric;
            pt.record["param_count"] = r.param_count;
        });
    run_pool(tasks, sc.jobs);

    std::ostringstream body;
    for (const SweepPoint& pt : points) body << pt.record.dump() << "\n";
    if (!sc.out.empty())
        open_out(sc.out) << body.str();
    else
        std::cout << body.str();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    // wall time goes to stdout only so output files stay byte-identical
    std::cout << experiment << ": " << points.size() << " records"
              << (sc.out.empty() ? "" : " -> " + sc.out) << ", wall_time_ms=" << ms << "\n";
    return kExitOk;
}

SweepPoint make_point(const std::string& experiment, const SweepCommon& sc,
                      const G2Config& cfg, LabeledDataset ds, Task task, std::size_t trial,
                      std::uint64_t dataset_seed, const json& axis) {
    SweepPoint pt{json{}, cfg, std::move(ds), sc.train_config(task, mix_seed(sc.seed, 2 * trial + 1))};
    pt.record = json{{"experiment", experiment},
                     {"trial", trial},
                     {"dataset_seed", dataset_seed},
                     {"train_seed", pt.tc.seed},
                     {"config", to_json(cfg)},
                     {"lr", sc.lr},
                     {"hidden", sc.hidden},
                     {"epochs", sc.epochs},
                     {"patience", sc.patience},
                     {"nodes", sc.nodes}};
    for (auto it = axis.begin(); it != axis.end(); ++it) pt.record[it.key()] = it.value();
    return pt;
}

// ---------------------------------------------------------------------------
// energy: deep-propagation metric traces
// ---------------------------------------------------------------------------

int cmd_energy(const std::string& model, std::size_t layers, std::size_t grid_side,
               std::uint64_t seed, const std::string& metric, const std::string& out) {
    const ModelId id = parse_model(model);
    Graph g = Graph::grid2d(grid_side);
    G2Config cfg;
    cfg.mode = id.mode;
    cfg.p = 2.0;
    cfg.activation = Activation::tanh;  // bounded activation keeps deep stacks finite
    cfg.coupling = CouplingConfig{id.kind, 2, 2};

    Matrix x0(g.num_nodes(), 2);
    Rng xr(mix_seed(seed, 1));
    xr.fill_uniform(x0, 0.0, 1.0);
    Rng wr(mix_seed(seed, 2));

    const bool use_mad = metric == "mad";
    EnergySeries series;
    propagate(cfg, g, x0, layers, wr, /*fresh_weights=*/true,
              [&](std::size_t n, const FeatureMatrix& x) {
                  series.push_back({static_cast<double>(n),
                                    use_mad ? mad(g, x) : dirichlet_energy(g, x)});
              });

    if (!out.empty()) {
        std::ofstream f = open_out(out);
        f << "layer," << metric << "\n";
        // data rows cover layers 1..N (layer 0 informs only the verdict)
        for (std::size_t i = 1; i < series.size(); ++i)
            f << static_cast<std::size_t>(series[i].t) << "," << series[i].energy << "\n";
    }
    if (series.size() >= 3 && series.front().energy > 0.0)
        std::cout << "verdict=" << to_string(oversmoothing_verdict(series)) << "\n";
    else
        std::cout << "verdict=undetermined\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// stability: perturbation decay laboratory
// ---------------------------------------------------------------------------

Graph parse_graph_spec(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos)
        throw CLI::ValidationError("--graph", "expected cycle:N, grid:S, or file:PATH");
    const std::string kind = spec.substr(0, colon);
    const std::string arg = spec.substr(colon + 1);
    if (kind == "cycle") return Graph::cycle(std::stoul(arg));
    if (kind == "grid") return Graph::grid2d(std::stoul(arg));
    if (kind == "file") return load_edge_list(arg);
    throw CLI::ValidationError("--graph", "unknown graph kind: " + kind);
}

int cmd_stability(double p, const std::string& graph_spec, double dt, double horizon,
                  double epsilon, std::uint64_t seed, const std::string& out) {
    Graph g = parse_graph_spec(graph_spec);
    PerturbationRun run;
    run.graph = &g;
    run.coupling = make_right_stochastic(g, StochasticMode::uniform);
    run.p = p;
    run.epsilon = epsilon;
    run.dt = dt;
    run.horizon = horizon;
    run.seed = mix_seed(seed, 3);

    // eccentricity of the clamped node (rejects disconnected graphs up front)
    const EnvelopeConstants c = envelope_constants(run);

    EnergySeries series = p == 0.0 ? simulate_linearized(run) : simulate_quasilinear(run);

    // window: bulk of the trace for the exponential regime, the last decade
    // for the (asymptotic) algebraic regime
    DecayFit fit = p == 0.0
                       ? fit_decay(series, DecayModel::exponential, 0.1 * horizon,
                                   0.6 * horizon)
                       : fit_decay_last_decade(series, DecayModel::power_law);
    DecayFit alt = fit_decay(series,
                             fit.model == DecayModel::exponential ? DecayModel::power_law
                                                                  : DecayModel::exponential,
                             fit.t_lo, fit.t_hi);

    json j{{"graph", graph_spec},
           {"theory_rate_bound", c.a_min / (c.d_max * c.ecc)},
           {"p", p},
           {"dt", dt},
           {"horizon", horizon},
           {"model", fit.model == DecayModel::exponential ? "exponential" : "power_law"},
           {"rate_or_exponent", fit.rate_or_exponent},
           {"r_squared", fit.r_squared},
           {"r_squared_alternative", alt.r_squared},
           {"window", {fit.t_lo, fit.t_hi}},
           {"initial_energy", series.front().energy},
           {"terminal_energy", series.back().energy}};
    if (!out.empty()) {
        save_energy_series(series, out);
        open_out(out + ".fit.json") << j.dump() << "\n";
    }
    std::cout << j.dump() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// depth / homophily / regress / ablate sweeps
// ---------------------------------------------------------------------------

int cmd_depth(SweepCommon& sc, const std::string& layer_list, const std::string& models,
              double h) {
    std::vector<SweepPoint> points;
    for (const std::string& ls : split_list(layer_list)) {
        const std::size_t layers = std::stoul(ls);
        for (const std::string& model : split_list(models)) {
            SweepCommon local = sc;
            local.layers = layers;
            const G2Config cfg = local.model_config(parse_model(model));
            for (std::size_t t = 0; t < sc.trials; ++t) {
                const std::uint64_t dseed = mix_seed(sc.seed, 2 * t);
                points.push_back(make_point(
                    "depth", local, cfg,
                    synthetic_homophily(sc.classes, sc.nodes, h, sc.feat_dim, dseed),
                    Task::classification, t, dseed,
                    json{{"model", model}, {"layers", layers}, {"h", h}}));
            }
        }
    }
    return emit_sweep("depth", points, sc);
}

int cmd_homophily(SweepCommon& sc, const std::string& h_list, const std::string& models) {
    std::vector<SweepPoint> points;
    for (const std::string& hs : split_list(h_list)) {
        const double h = std::stod(hs);
        for (const std::string& model : split_list(models)) {
            const G2Config cfg = sc.model_config(parse_model(model));
            for (std::size_t t = 0; t < sc.trials; ++t) {
                const std::uint64_t dseed = mix_seed(sc.seed, 2 * t);
                points.push_back(make_point(
                    "homophily", sc, cfg,
                    synthetic_homophily(sc.classes, sc.nodes, h, sc.feat_dim, dseed),
                    Task::classification, t, dseed,
                    json{{"model", model}, {"h", h}}));
            }
        }
    }
    return emit_sweep("homophily", points, sc);
}

int cmd_regress(SweepCommon& sc, const std::string& models) {
    std::vector<SweepPoint> points;
    for (const std::string& model : split_list(models)) {
        G2Config cfg = sc.model_config(parse_model(model));
        cfg.use_separate_Fhat = false;  // regression adds a parameter-free gate
        for (std::size_t t = 0; t < sc.trials; ++t) {
            const std::uint64_t dseed = mix_seed(sc.seed, 2 * t);
            points.push_back(make_point("regress", sc, cfg,
                                        synthetic_multiscale(sc.nodes, dseed),
                                        Task::regression, t, dseed,
                                        json{{"model", model}}));
        }
    }
    return emit_sweep("regress", points, sc);
}

int cmd_ablate(SweepCommon& sc, const std::string& axis, const std::string& points_spec,
               const std::string& task_name) {
    const bool regress = task_name == "regress";
    const Task task = regress ? Task::regression : Task::classification;
    auto dataset = [&](std::uint64_t dseed) {
        return regress ? synthetic_multiscale(sc.nodes, dseed)
                       : synthetic_homophily(sc.classes, sc.nodes, 0.8, sc.feat_dim, dseed);
    };
    std::vector<SweepPoint> points;
    auto add_trials = [&](const G2Config& cfg, const SweepCommon& local, const json& ax) {
        for (std::size_t t = 0; t < sc.trials; ++t) {
            const std::uint64_t dseed = mix_seed(sc.seed, 2 * t);
            points.push_back(
                make_point("ablate-" + axis, local, cfg, dataset(dseed), task, t, dseed, ax));
        }
    };

    if (axis == "alpha") {
        for (double alpha : parse_points(points_spec.empty() ? "0.001,0.01,0.1,0.5,1.0"
                                                             : points_spec)) {
            G2Config cfg = sc.model_config({G2Mode::g2_alpha, CouplingKind::gcn});
            cfg.use_separate_Fhat = false;  // regression adds a parameter-free gate
            cfg.alpha = alpha;
            add_trials(cfg, sc, json{{"alpha", alpha}});
        }
    } else if (axis == "p") {
        for (double p : parse_points(points_spec.empty() ? "1,2,3,4,5" : points_spec)) {
            SweepCommon local = sc;
            local.p = p;
            add_trials(local.model_config({G2Mode::g2, CouplingKind::gcn}), local,
                       json{{"p", p}});
        }
    } else if (axis == "params") {
        // matched parameter budgets: both models share the layer weight
        for (double w : parse_points(points_spec.empty() ? "8,16,32" : points_spec)) {
            SweepCommon local = sc;
            local.hidden = static_cast<std::size_t>(w);
            for (const std::string& model : {std::string("gcn"), std::string("g2-gcn")}) {
                G2Config cfg = local.model_config(parse_model(model));
                cfg.use_separate_Fhat = false;  // matched parameter budgets
                add_trials(cfg, local, json{{"model", model}, {"width", local.hidden}});
            }
        }
    } else if (axis == "fhat") {
        for (bool separate : {false, true}) {
            G2Config cfg = sc.model_config({G2Mode::g2, CouplingKind::gcn});
            cfg.use_separate_Fhat = separate;
            if (separate) cfg.coupling_hat = cfg.coupling;
            add_trials(cfg, sc, json{{"separate_fhat", separate}});
        }
    } else if (axis == "single-rate") {
        for (G2Mode mode : {G2Mode::g2, G2Mode::g2_single_rate}) {
            G2Config cfg = sc.model_config({mode, CouplingKind::gcn});
            cfg.use_separate_Fhat = false;  // regression adds a parameter-free gate
            add_trials(cfg, sc,
                       json{{"variant", mode == G2Mode::g2 ? "multi-rate" : "single-rate"}});
        }
    } else {
        throw CLI::ValidationError("--axis",
                                   "expected alpha, p, params, fhat, or single-rate");
    }
    return emit_sweep("ablate-" + axis, points, sc);
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int cmd_gradcheck(const std::string& model, double p, std::uint64_t seed,
                  const std::string& aggregation, const std::string& out) {
    Graph g = Graph::random_connected(8, 6, mix_seed(seed, 4));
    Matrix x(8, 3);
    Rng xr(mix_seed(seed, 5));
    xr.fill_uniform(x, -1.0, 1.0);

    json j{{"model", model}, {"p", p}, {"seed", seed}};
    ad::GradCheckReport report;
    double tolerance = 1e-4;

    if (model == "linear") {
        // exact case: central differences of a linear map have no truncation
        // error, so a coarse step gives machine-precision agreement
        Rng wr(mix_seed(seed, 6));
        Matrix w0(3, 2), r0(8, 2);
        wr.fill_glorot(w0);
        wr.fill_uniform(r0, -1.0, 1.0);
        ad::Parameter w("W", std::move(w0)), b("b", Matrix(1, 2));
        tolerance = 1e-9;
        report = ad::grad_check(
            [&](ad::Tape& tape) {
                ad::Value out_v = ad::add(ad::matmul(ad::constant(tape, x), ad::leaf(tape, w)),
                                          ad::leaf(tape, b));
                return ad::reduce_sum(ad::hadamard(out_v, ad::constant(tape, r0)));
            },
            {&w, &b}, tolerance, mix_seed(seed, 7), /*h=*/1e-3);
    } else {
        const ModelId id = parse_model(model);
        G2Config cfg;
        cfg.mode = id.mode;
        cfg.p = p;
        cfg.num_layers = 2;
        cfg.activation = Activation::tanh;
        cfg.coupling = CouplingConfig{id.kind, 4, 4};
        if (aggregation == "mean")
            cfg.coupling.aggregation = cfg.aggregation = ad::Aggregation::mean;
        else if (aggregation == "max")
            cfg.coupling.aggregation = cfg.aggregation = ad::Aggregation::max;

        Rng mr(mix_seed(seed, 6));
        Model m = make_model(cfg, 3, 3, mr);
        CouplingWorkspace ws(g);
        std::vector<int> labels(8);
        Rng lr(mix_seed(seed, 8));
        for (int& l : labels) l = static_cast<int>(lr.below(3));
        std::vector<std::size_t> rows(8);
        for (std::size_t i = 0; i < 8; ++i) rows[i] = i;

        report = ad::grad_check(
            [&](ad::Tape& tape) {
                ad::Value logits = model_forward(m, g, ws, x, tape);
                return ad::masked_cross_entropy(logits, labels, rows);
            },
            m.parameters(), tolerance, mix_seed(seed, 7));
    }

    j["tolerance"] = tolerance;
    j["checked"] = report.checked;
    j["skipped"] = report.skipped;
    j["max_rel_err"] = report.max_rel_err;
    j["pass"] = report.pass;
    if (!out.empty()) open_out(out) << j.dump() << "\n";
    std::cout << j.dump() << "\n";
    if (!report.pass)
        std::cerr << "gradient check failed: worst relative error " << report.max_rel_err
                  << " exceeds " << tolerance << "\n";
    return report.pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient-gating experiment harness"};
    app.require_subcommand(1);
    std::function<int()> action;

    // ---- energy ----
    auto* energy = app.add_subcommand("energy", "per-layer smoothness trace of a deep stack");
    {
        struct {
            std::string model = "gcn", metric = "dirichlet", out;
            std::size_t layers = 1000, grid_side = 10;
            std::uint64_t seed = 0;
        } static a;
        energy->add_option("--model", a.model)
            ->check(CLI::IsMember({"gcn", "gat", "g2-gcn", "g2-gat"}));
        energy->add_option("--layers", a.layers)->check(CLI::PositiveNumber);
        energy->add_option("--grid-side", a.grid_side)->check(CLI::PositiveNumber);
        energy->add_option("--seed", a.seed);
        energy->add_option("--metric", a.metric)->check(CLI::IsMember({"dirichlet", "mad"}));
        energy->add_option("--out", a.out);
        energy->callback([&] {
            action = [&] {
                return cmd_energy(a.model, a.layers, a.grid_side, a.seed, a.metric, a.out);
            };
        });
    }

    // ---- stability ----
    auto* stability =
        app.add_subcommand("stability", "perturbation decay around the steady state");
    {
        struct {
            double p = 0.0, dt = 1e-3, horizon = 50.0, epsilon = 1e-3;
            std::string graph = "cycle:6", out;
            std::uint64_t seed = 0;
        } static a;
        stability->add_option("--p", a.p)->check(CLI::NonNegativeNumber);
        stability->add_option("--graph", a.graph, "cycle:N, grid:S, or file:PATH");
        stability->add_option("--dt", a.dt)->check(CLI::PositiveNumber);
        stability->add_option("--horizon", a.horizon)->check(CLI::PositiveNumber);
        stability->add_option("--epsilon", a.epsilon, "initial perturbation amplitude")
            ->check(CLI::PositiveNumber);
        stability->add_option("--seed", a.seed);
        stability->add_option("--out", a.out);
        stability->callback([&] {
            action = [&] {
                return cmd_stability(a.p, a.graph, a.dt, a.horizon, a.epsilon, a.seed, a.out);
            };
        });
    }

    // ---- depth ----
    auto* depth = app.add_subcommand("depth", "accuracy vs number of layers");
    {
        static SweepCommon sc;
        struct {
            std::string layers = "4,64", models = "gcn,g2-gcn";
            double h = 0.8;
        } static a;
        sc.add_flags(depth, /*with_layers=*/false);
        depth->add_option("--layers", a.layers, "comma list of depths");
        depth->add_option("--models", a.models);
        depth->add_option("--homophily", a.h)->check(CLI::Range(0.0, 1.0));
        depth->callback(
            [&] { action = [&] { return cmd_depth(sc, a.layers, a.models, a.h); }; });
    }

    // ---- homophily ----
    auto* homophily = app.add_subcommand("homophily", "accuracy vs edge homophily");
    {
        static SweepCommon sc;
        struct {
            std::string h = "0.0,0.3,0.6,0.9", models = "gcn,g2-gcn";
        } static a;
        sc.add_flags(homophily);
        homophily->add_option("--levels", a.h, "comma list of homophily levels");
        homophily->add_option("--models", a.models);
        homophily->callback(
            [&] { action = [&] { return cmd_homophily(sc, a.h, a.models); }; });
    }

    // ---- regress ----
    auto* regress = app.add_subcommand("regress", "multi-scale node regression");
    {
        static SweepCommon sc;
        struct {
            std::string models = "gcn,g2-gcn";
        } static a;
        sc.layers = 1;  // regression trends use single-layer models
        sc.add_flags(regress);
        regress->add_option("--models", a.models);
        regress->callback([&] { action = [&] { return cmd_regress(sc, a.models); }; });
    }

    // ---- ablate ----
    auto* ablate = app.add_subcommand("ablate", "component and hyperparameter ablations");
    {
        static SweepCommon sc;
        struct {
            std::string axis, points, task = "classify";
        } static a;
        sc.add_flags(ablate);
        ablate->add_option("--axis", a.axis, "alpha | p | params | fhat | single-rate")
            ->required()
            ->check(CLI::IsMember({"alpha", "p", "params", "fhat", "single-rate"}));
        ablate->add_option("--points", a.points, "comma list, or a..b for log-spaced");
        ablate->add_option("--task", a.task)->check(CLI::IsMember({"classify", "regress"}));
        ablate->callback([&] {
            if (a.axis == "alpha" || a.axis == "single-rate") {
                a.task = "regress";
                // regression trends use single-layer models unless overridden
                if (ablate->count("--layers") == 0) sc.layers = 1;
            }
            action = [&] { return cmd_ablate(sc, a.axis, a.points, a.task); };
        });
    }

    // ---- gradcheck ----
    auto* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference gradient verification");
    {
        struct {
            std::string model = "g2-gcn", aggregation = "sum", out;
            double p = 2.0;
            std::uint64_t seed = 0;
        } static a;
        gradcheck->add_option("--model", a.model)
            ->check(CLI::IsMember(
                {"linear", "gcn", "gat", "sage", "g2-gcn", "g2-gat", "g2-sage"}));
        gradcheck->add_option("--p", a.p)->check(CLI::NonNegativeNumber);
        gradcheck->add_option("--seed", a.seed);
        gradcheck->add_option("--aggregation", a.aggregation)
            ->check(CLI::IsMember({"sum", "mean", "max"}));
        gradcheck->add_option("--out", a.out);
        gradcheck->callback([&] {
            action = [&] {
                return cmd_gradcheck(a.model, a.p, a.seed, a.aggregation, a.out);
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        return action();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
}
