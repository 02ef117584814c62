#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>
#include <set>

#include <CLI11.hpp>

#include "geo/csvio.hpp"
#include "geo/evalreport.hpp"
#include "geo/mapelites.hpp"
#include "geo/ppo.hpp"
#include "geo/runconfig.hpp"
#include "geo/runner.hpp"
#include "geo/strategies.hpp"

namespace fs = std::filesystem;
using namespace geo;

namespace {

struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Ctx {
    RunConfig cfg;
    std::string out;
    int workers = 1;
};

Ctx make_ctx(const std::string& config_path, const std::string& out_override,
             uint64_t seed_override, bool has_seed, int workers_override) {
    Ctx ctx;
    if (config_path.empty()) throw CliError("missing --config");
    ctx.cfg = load_run_config(config_path);
    if (has_seed) ctx.cfg.seed = seed_override;
    if (!out_override.empty()) ctx.cfg.out_dir = out_override;
    if (workers_override > 0) ctx.cfg.workers = workers_override;
    ctx.out = ctx.cfg.out_dir;
    ctx.workers = ctx.cfg.workers > 0 ? ctx.cfg.workers : default_workers();
    fs::create_directories(ctx.out);
    write_resolved_config(ctx.cfg, (fs::path(ctx.out) / "resolved_config.json").string());
    return ctx;
}

MarketData load_data(const Ctx& ctx) {
    if (!fs::exists(ctx.cfg.data.root))
        throw CliError("missing input: " + ctx.cfg.data.root);
    LoadReport report;
    MarketData data = load_market_data(ctx.cfg.data.root, report, ctx.workers,
                                       ctx.cfg.data.missing_ceiling,
                                       ctx.cfg.data.outlier_threshold);
    if (report.files_loaded == 0)
        throw CliError("missing input: no bar files under " + ctx.cfg.data.root);
    log_info("loaded " + std::to_string(report.files_loaded) + " files, " +
             std::to_string(report.rows_loaded) + " rows (" +
             std::to_string(report.rows_rejected) + " rejected)");
    return data;
}

std::string out_path(const Ctx& ctx, const std::string& name) {
    return (fs::path(ctx.out) / name).string();
}

std::vector<Order> load_orders_or_die(const std::string& path) {
    if (!fs::exists(path)) throw CliError("missing input: " + path);
    return load_orders_csv(path);
}

void require_disjoint_calendars(const RunConfig& cfg) {
    const OrderGenConfig& a = cfg.orders_train;
    const OrderGenConfig& b = cfg.orders_test;
    if (a.date_lo <= b.date_hi && b.date_lo <= a.date_hi)
        throw CliError("calendar separation violated: train [" +
                       std::to_string(a.date_lo) + ", " + std::to_string(a.date_hi) +
                       "] overlaps test [" + std::to_string(b.date_lo) + ", " +
                       std::to_string(b.date_hi) + "]");
}

// strategy spec: twap | vwap | pov | random | ppo | elite:<i>,<j>
std::unique_ptr<Policy> make_policy(const Ctx& ctx, const std::string& spec,
                                    const std::string& checkpoint_override) {
    if (spec == "ppo") {
        std::string path = !checkpoint_override.empty() ? checkpoint_override
                           : !ctx.cfg.eval.checkpoint.empty()
                               ? ctx.cfg.eval.checkpoint
                               : out_path(ctx, "ppo_checkpoint.json");
        if (!fs::exists(path)) throw CliError("missing input: " + path);
        Checkpoint ck = load_checkpoint(path);
        return std::make_unique<PpoPolicy>(std::move(ck.params), std::move(ck.norm), "ppo");
    }
    if (spec.rfind("elite:", 0) == 0) {
        std::string cell = spec.substr(6);
        auto comma = cell.find(',');
        if (comma == std::string::npos)
            throw CliError("bad strategy '" + spec + "', expected elite:<i>,<j>");
        int i = 0, j = 0;
        try {
            i = std::stoi(cell.substr(0, comma));
            j = std::stoi(cell.substr(comma + 1));
        } catch (const std::exception&) {
            throw CliError("bad strategy '" + spec + "', expected elite:<i>,<j>");
        }
        std::string dir = !ctx.cfg.eval.archive_dir.empty() ? ctx.cfg.eval.archive_dir
                                                            : out_path(ctx, "archive");
        if (!fs::exists(dir)) throw CliError("missing input: " + dir);
        Checkpoint ck = load_elite(dir, i, j);
        return std::make_unique<PpoPolicy>(std::move(ck.params), std::move(ck.norm), spec);
    }
    return make_baseline(spec);
}

std::string file_tag(const std::string& strategy) {
    std::string safe = strategy;
    for (char& c : safe)
        if (c == ':' || c == ',') c = '_';
    return safe;
}

void write_strategy_outputs(const Ctx& ctx, const std::string& strategy,
                            const std::vector<Order>& orders,
                            const std::vector<EpisodeResult>& results,
                            const MarketData& data) {
    const std::string tag = file_tag(strategy);
    save_results_jsonl(out_path(ctx, "results_" + tag + ".jsonl"), strategy, orders,
                       results);
    std::vector<MetricRow> rows;
    rows.reserve(results.size());
    for (std::size_t k = 0; k < results.size(); ++k) {
        MetricRow m = compute_metrics(results[k], orders[k], data, ctx.cfg.reward);
        m.strategy = strategy;
        rows.push_back(m);
    }
    write_metric_rows_csv(out_path(ctx, "metrics_" + tag + ".csv"), rows);
    auto sums = aggregate_summary(rows, ctx.cfg.eval.winsor_lo, ctx.cfg.eval.winsor_hi);
    write_summary_csv(out_path(ctx, "summary_" + tag + ".csv"), sums);
}

int cmd_synth(const Ctx& ctx_in) {
    Ctx ctx = ctx_in;
    ctx.cfg.synth.seed = derive_seed(ctx.cfg.seed, "synth");
    MarketData data = synth_generate(ctx.cfg.synth);
    fs::create_directories(ctx.cfg.data.root);
    write_market_data_csv(data, ctx.cfg.data.root);
    std::cout << "synth: " << ctx.cfg.synth.n_symbols << " symbols x "
              << ctx.cfg.synth.n_days << " days -> " << ctx.cfg.data.root << "\n";
    return 0;
}

int cmd_calibrate(const Ctx& ctx) {
    MarketData data = load_data(ctx);
    // spacers must cover the longest lag window probed
    int spacer = ctx.cfg.calibration.max_lag;
    for (int lag : ctx.cfg.lag_grid) spacer = std::max(spacer, lag);
    std::map<std::string, CalibSeries> universe;
    for (const auto& [sym, days] : data.bars)
        universe[sym] = build_calibration_series(days, spacer);
    CalibrationReport rep =
        compare_impact_forms(universe, ctx.cfg.lag_grid, ctx.cfg.calibration, ctx.workers);
    save_calibration_csv(out_path(ctx, "calibration.csv"), rep.symbols);
    {
        CsvWriter w(out_path(ctx, "calibration_summary.csv"));
        w.header({"form", "max_lag", "mean_r2", "n_symbols", "winning_form"});
        for (const FormLagSummary& s : rep.summaries) {
            w.field(form_name(s.form));
            w.field(s.max_lag);
            w.field(s.mean_r2);
            w.field(s.n_symbols);
            w.field(s.form == rep.winning_form ? 1 : 0);
            w.end_row();
        }
    }
    std::cout << "calibrate: " << rep.symbols.size() << " symbols, winning form "
              << form_name(rep.winning_form) << ", retained " << rep.retained.size()
              << "\n";
    return 0;
}

int cmd_gen_orders(const Ctx& ctx_in) {
    Ctx ctx = ctx_in;
    require_disjoint_calendars(ctx.cfg);
    MarketData data = load_data(ctx);
    auto calibration = load_calibration_csv(out_path(ctx, "calibration.csv"));

    OrderGenConfig& tr = ctx.cfg.orders_train;
    OrderGenConfig& te = ctx.cfg.orders_test;
    tr.seed = derive_seed(ctx.cfg.seed, "orders-train");
    tr.has_excluded_range = true;
    tr.excluded_lo = te.date_lo;
    tr.excluded_hi = te.date_hi;
    te.seed = derive_seed(ctx.cfg.seed, "orders-test");
    te.has_excluded_range = true;
    te.excluded_lo = tr.date_lo;
    te.excluded_hi = tr.date_hi;

    auto train = generate_orders(tr, data, calibration);
    auto test = generate_orders(te, data, calibration);
    validate_orders_outside(train, te.date_lo, te.date_hi, "train");
    validate_orders_outside(test, tr.date_lo, tr.date_hi, "test");
    save_orders_csv(out_path(ctx, "orders_train.csv"), train);
    save_orders_csv(out_path(ctx, "orders_test.csv"), test);
    std::cout << "gen-orders: " << train.size() << " train, " << test.size()
              << " test\n";
    return 0;
}

int cmd_run(const Ctx& ctx, const std::string& strategy, const std::string& orders_path,
            const std::string& checkpoint) {
    if (strategy.empty()) throw CliError("missing --strategy");
    MarketData data = load_data(ctx);
    std::string opath =
        !orders_path.empty() ? orders_path : out_path(ctx, "orders_test.csv");
    auto orders = load_orders_or_die(opath);
    auto policy = make_policy(ctx, strategy, checkpoint);
    auto results = run_episodes(data, ctx.cfg.reward, orders, *policy,
                                derive_seed(ctx.cfg.seed, "run"), ctx.workers);
    write_strategy_outputs(ctx, strategy, orders, results, data);
    long ok = 0;
    for (const auto& r : results) ok += r.ok ? 1 : 0;
    std::cout << "run " << strategy << ": " << ok << "/" << results.size()
              << " episodes ok\n";
    return 0;
}

int cmd_train_ppo(const Ctx& ctx_in, const std::string& orders_path) {
    Ctx ctx = ctx_in;
    MarketData data = load_data(ctx);
    std::string opath =
        !orders_path.empty() ? orders_path : out_path(ctx, "orders_train.csv");
    auto orders = load_orders_or_die(opath);
    TrainConfig tcfg = ctx.cfg.ppo;
    tcfg.seed = derive_seed(ctx.cfg.seed, "ppo");
    tcfg.log_csv = out_path(ctx, "ppo_train_log.csv");
    tcfg.checkpoint_path = out_path(ctx, "ppo_checkpoint.json");
    TrainResult res = train_ppo(data, ctx.cfg.reward, orders, tcfg);
    if (res.diverged) log_warn("training diverged, kept last finite checkpoint");
    double last_cost = res.log.empty() ? 0.0 : res.log.back().mean_cost_bps;
    std::cout << "train-ppo: " << res.log.size() << " iterations, last mean cost "
              << fmt_double(last_cost) << " bps -> " << tcfg.checkpoint_path << "\n";
    return 0;
}

int cmd_map_elites(const Ctx& ctx_in, const std::string& orders_path,
                   const std::string& checkpoint) {
    Ctx ctx = ctx_in;
    MarketData data = load_data(ctx);
    std::string opath =
        !orders_path.empty() ? orders_path : out_path(ctx, "orders_train.csv");
    auto orders = load_orders_or_die(opath);
    std::string ckpath = !checkpoint.empty() ? checkpoint
                         : !ctx.cfg.eval.checkpoint.empty()
                             ? ctx.cfg.eval.checkpoint
                             : out_path(ctx, "ppo_checkpoint.json");
    if (!fs::exists(ckpath)) throw CliError("missing input: " + ckpath);
    Checkpoint seed_ck = load_checkpoint(ckpath);
    QDConfig qcfg = ctx.cfg.qd;
    qcfg.dims = seed_ck.params.dims;
    qcfg.seed = derive_seed(ctx.cfg.seed, "qd");
    qcfg.workers = ctx.workers;
    QDResult res =
        run_map_elites(data, ctx.cfg.reward, orders, seed_ck.params, seed_ck.norm, qcfg);
    std::string dir = out_path(ctx, "archive");
    save_archive(dir, res, qcfg);
    std::cout << "map-elites: " << res.archive.occupied_count() << "/"
              << qcfg.grid * qcfg.grid << " cells occupied, "
              << res.total_child_evals << " child evaluations -> " << dir << "\n";
    return 0;
}

int cmd_evaluate(const Ctx& ctx, const std::string& orders_path,
                 const std::string& checkpoint) {
    require_disjoint_calendars(ctx.cfg);
    MarketData data = load_data(ctx);
    std::string opath =
        !orders_path.empty() ? orders_path : out_path(ctx, "orders_test.csv");
    auto orders = load_orders_or_die(opath);
    std::vector<MetricRow> all_rows;
    for (const std::string& strategy : ctx.cfg.eval.strategies) {
        auto policy = make_policy(ctx, strategy, checkpoint);
        auto results = run_episodes(data, ctx.cfg.reward, orders, *policy,
                                    derive_seed(ctx.cfg.seed, "run"), ctx.workers);
        write_strategy_outputs(ctx, strategy, orders, results, data);
        for (std::size_t k = 0; k < results.size(); ++k) {
            MetricRow m = compute_metrics(results[k], orders[k], data, ctx.cfg.reward);
            m.strategy = strategy;
            all_rows.push_back(m);
        }
        std::cout << "evaluate " << strategy << ": " << results.size() << " episodes\n";
    }
    auto sums = aggregate_summary(all_rows, ctx.cfg.eval.winsor_lo, ctx.cfg.eval.winsor_hi);
    write_summary_csv(out_path(ctx, "summary.csv"), sums);
    write_summary_json(out_path(ctx, "summary.json"), sums);
    std::cout << "evaluate: " << ctx.cfg.eval.strategies.size() << " strategies x "
              << orders.size() << " orders -> " << out_path(ctx, "summary.csv") << "\n";
    return 0;
}

int cmd_report(const Ctx& ctx) {
    MarketData data = load_data(ctx);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(ctx.out)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("results_", 0) == 0 && entry.path().extension() == ".jsonl")
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw CliError("missing input: no results_*.jsonl under " + ctx.out);

    std::vector<MetricRow> rows;
    std::vector<const EpisodeResult*> res_ptrs;
    std::vector<const Order*> ord_ptrs;
    std::vector<LoadedRun> runs;
    runs.reserve(files.size());
    for (const std::string& f : files) runs.push_back(load_results_jsonl(f));

    fs::create_directories(out_path(ctx, "plotdata"));
    std::set<std::string> anatomy_done;
    for (const LoadedRun& run : runs) {
        for (std::size_t k = 0; k < run.results.size(); ++k) {
            MetricRow m = compute_metrics(run.results[k], run.orders[k], data,
                                          ctx.cfg.reward);
            m.strategy = run.strategies[k];
            rows.push_back(m);
            res_ptrs.push_back(&run.results[k]);
            ord_ptrs.push_back(&run.orders[k]);
            if (!m.pathological && !anatomy_done.count(m.strategy)) {
                anatomy_done.insert(m.strategy);
                write_anatomy_csv(
                    out_path(ctx, "plotdata/anatomy_" + file_tag(m.strategy) + ".csv"),
                    run.results[k], run.orders[k]);
            }
        }
    }
    auto sums = aggregate_summary(rows, ctx.cfg.eval.winsor_lo, ctx.cfg.eval.winsor_hi);
    write_summary_csv(out_path(ctx, "summary.csv"), sums);
    write_summary_json(out_path(ctx, "summary.json"), sums);
    write_metric_rows_csv(out_path(ctx, "metrics_all.csv"), rows);
    write_action_horizon_csv(out_path(ctx, "plotdata/action_vs_horizon.csv"), rows,
                             res_ptrs, ord_ptrs, 20);
    write_cost_decomposition_csv(out_path(ctx, "plotdata/cost_decomposition.csv"), sums);
    std::cout << "report: " << rows.size() << " episodes across " << runs.size()
              << " result files -> " << out_path(ctx, "summary.csv") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"transient-impact execution lab: data, calibration, simulation, "
                 "training, and reporting"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path, out_override, strategy, orders_path, checkpoint;
    uint64_t seed_override = 0;
    int workers_override = 0;
    bool has_seed = false;

    app.add_option("--config", config_path, "run config (json)")->group("global");
    app.add_option("--out", out_override, "output directory override")->group("global");
    app.add_option("--seed", seed_override, "global seed override")
        ->group("global")
        ->each([&](const std::string&) { has_seed = true; });
    app.add_option("--workers", workers_override, "worker threads (default: cores)")
        ->group("global");

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic bar tree");
    CLI::App* calibrate =
        app.add_subcommand("calibrate", "fit the propagator on every symbol");
    CLI::App* gen_orders =
        app.add_subcommand("gen-orders", "sample train/test order lists");
    CLI::App* run = app.add_subcommand("run", "execute one strategy over an order list");
    run->add_option("--strategy", strategy,
                    "twap|vwap|pov|random|ppo|elite:<i>,<j>");
    run->add_option("--orders", orders_path, "orders csv (default: out/orders_test.csv)");
    run->add_option("--checkpoint", checkpoint, "policy checkpoint for ppo");
    CLI::App* train = app.add_subcommand("train-ppo", "train the execution policy");
    train->add_option("--orders", orders_path,
                      "orders csv (default: out/orders_train.csv)");
    CLI::App* elites =
        app.add_subcommand("map-elites", "evolve regime specialists from a checkpoint");
    elites->add_option("--orders", orders_path,
                       "orders csv (default: out/orders_train.csv)");
    elites->add_option("--checkpoint", checkpoint, "seed policy checkpoint");
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "run every configured strategy on test orders");
    evaluate->add_option("--orders", orders_path,
                         "orders csv (default: out/orders_test.csv)");
    evaluate->add_option("--checkpoint", checkpoint, "policy checkpoint for ppo");
    CLI::App* report =
        app.add_subcommand("report", "aggregate saved results into summaries");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        Ctx ctx =
            make_ctx(config_path, out_override, seed_override, has_seed, workers_override);
        if (synth->parsed()) return cmd_synth(ctx);
        if (calibrate->parsed()) return cmd_calibrate(ctx);
        if (gen_orders->parsed()) return cmd_gen_orders(ctx);
        if (run->parsed()) return cmd_run(ctx, strategy, orders_path, checkpoint);
        if (train->parsed()) return cmd_train_ppo(ctx, orders_path);
        if (elites->parsed()) return cmd_map_elites(ctx, orders_path, checkpoint);
        if (evaluate->parsed()) return cmd_evaluate(ctx, orders_path, checkpoint);
        if (report->parsed()) return cmd_report(ctx);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
