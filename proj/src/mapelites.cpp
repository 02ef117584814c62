#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include "geo/csvio.hpp"
#include "geo/mapelites.hpp"
#include "geo/runner.hpp"

namespace geo {

UniverseStats compute_universe_stats(const MarketData& data) {
    UniverseStats u;
    for (const auto& [sym, stats] : data.daily) {
        std::vector<double> advs, vols;
        for (const DailyStats& d : stats) {
            if (!is_missing(d.adv_21)) advs.push_back(d.adv_21);
            if (!is_missing(d.sigma_1)) vols.push_back(d.sigma_1);
        }
        if (advs.empty() || vols.empty()) continue;
        u.symbols.push_back(sym);
        u.adv.push_back(mean_of(advs));
        u.vol.push_back(mean_of(vols));
    }
    if (!u.adv.empty()) {
        u.degenerate_liq =
            *std::max_element(u.adv.begin(), u.adv.end()) ==
            *std::min_element(u.adv.begin(), u.adv.end());
        u.degenerate_vol =
            *std::max_element(u.vol.begin(), u.vol.end()) ==
            *std::min_element(u.vol.begin(), u.vol.end());
    }
    return u;
}

Descriptor compute_descriptor(const std::string& symbol, const UniverseStats& u) {
    auto it = std::find(u.symbols.begin(), u.symbols.end(), symbol);
    if (it == u.symbols.end())
        throw std::out_of_range("symbol not in descriptor universe: " + symbol);
    std::size_t k = std::size_t(it - u.symbols.begin());
    double n = double(u.symbols.size());
    Descriptor d;
    int le_adv = 0, le_vol = 0;
    for (std::size_t i = 0; i < u.symbols.size(); ++i) {
        le_adv += u.adv[i] <= u.adv[k] ? 1 : 0;
        le_vol += u.vol[i] <= u.vol[k] ? 1 : 0;
    }
    d.liq = double(le_adv) / n;
    d.vol = double(le_vol) / n;
    return d;
}

int descriptor_cell(double d, int grid) {
    if (d < 0.0 || d > 1.0) throw std::invalid_argument("descriptor outside [0,1]");
    return std::min(int(d * grid), grid - 1);
}

bool archive_update(Archive& a, int i, int j, const std::vector<double>& params,
                    double quality, int iteration) {
    if (!std::isfinite(quality)) throw std::invalid_argument("non-finite quality");
    ArchiveCell& c = a.at(i, j);
    if (c.occupied && quality <= c.quality) return false;
    c.occupied = true;
    c.params = params;
    c.quality = quality;
    c.replaced_at = iteration;
    return true;
}

std::vector<double> mutate_params(const std::vector<double>& parent, double sigma,
                                  Rng& rng) {
    if (sigma <= 0) throw std::invalid_argument("mutation sigma must be > 0");
    std::vector<double> child(parent);
    for (double& w : child) w += rng.normal(0.0, sigma);
    return child;
}

double evaluate_quality(const PolicyParams& params, const RunningNorm& norm,
                        const MarketData& data, RewardWeights weights,
                        const std::vector<const Order*>& orders, uint64_t seed) {
    PpoPolicy policy(params, norm);
    std::vector<double> costs;
    for (const Order* o : orders) {
        EpisodeResult r = run_one(data, weights, *o, policy, seed);
        if (r.ok) costs.push_back(r.summary.total_cost_bps / 1e4);
    }
    if (costs.empty()) return kMissing;
    return -mean_of(costs);
}

namespace {

struct CellPools {
    // per cell: indices into train_orders
    std::vector<std::vector<std::size_t>> pools;
};

CellPools build_pools(const std::vector<Order>& orders, const UniverseStats& u, int grid) {
    CellPools cp;
    cp.pools.assign(std::size_t(grid) * std::size_t(grid), {});
    for (std::size_t k = 0; k < orders.size(); ++k) {
        Descriptor d = compute_descriptor(orders[k].symbol, u);
        int i = descriptor_cell(d.liq, grid), j = descriptor_cell(d.vol, grid);
        cp.pools[std::size_t(i) * std::size_t(grid) + std::size_t(j)].push_back(k);
    }
    return cp;
}

// fixed per-iteration evaluation subset shared by all siblings of a cell
std::vector<const Order*> pick_pool(const std::vector<Order>& orders,
                                    const std::vector<std::size_t>& pool, int n_eval,
                                    uint64_t seed) {
    std::vector<std::size_t> idx(pool);
    Rng rng(seed);
    shuffle_vec(idx, rng);
    std::vector<const Order*> out;
    for (int k = 0; k < n_eval && k < int(idx.size()); ++k)
        out.push_back(&orders[idx[std::size_t(k)]]);
    return out;
}

}  // namespace

QDResult run_map_elites(const MarketData& data, RewardWeights weights,
                        const std::vector<Order>& train_orders,
                        const PolicyParams& seed_params, const RunningNorm& seed_norm,
                        const QDConfig& cfg) {
    if (cfg.grid < 1 || cfg.iterations < 1 || cfg.children < 1 || cfg.eval_episodes < 1)
        throw std::invalid_argument("bad quality-diversity config");
    if (train_orders.empty()) throw std::invalid_argument("no training orders");

    const int G = cfg.grid;
    const std::size_t ncells = std::size_t(G) * std::size_t(G);
    UniverseStats u = compute_universe_stats(data);
    CellPools cp = build_pools(train_orders, u, G);

    QDResult res;
    res.archive = Archive(G);
    res.norm = seed_norm;
    res.norm.freeze();
    res.seed_quality.assign(ncells, kMissing);
    res.evaluable.assign(ncells, 0);
    for (std::size_t c = 0; c < ncells; ++c)
        res.evaluable[c] = cp.pools[c].size() >= std::size_t(cfg.eval_episodes) ? 1 : 0;
    if (std::count(res.evaluable.begin(), res.evaluable.end(), uint8_t(1)) == 0)
        throw std::runtime_error("no archive cell has enough matching orders");

    std::vector<double> seed_flat = flatten_params(seed_params);

    // seed every evaluable cell with the provided policy
    for (int i = 0; i < G; ++i) {
        for (int j = 0; j < G; ++j) {
            std::size_t c = std::size_t(i) * std::size_t(G) + std::size_t(j);
            if (!res.evaluable[c]) continue;
            auto pool = pick_pool(train_orders, cp.pools[c], cfg.eval_episodes,
                                  derive_seed(cfg.seed, "qd-pool", c));
            double q = evaluate_quality(seed_params, res.norm, data, weights, pool,
                                        derive_seed(cfg.seed, "qd-eval-seed"));
            res.seed_quality[c] = q;
            if (!is_missing(q)) {
                archive_update(res.archive, i, j, seed_flat, q, -1);
                res.archive.at(i, j).n_evals += 1;
            }
        }
    }
    if (res.archive.occupied_count() == 0)
        throw std::runtime_error("archive empty after seeding");

    for (int g = 0; g < cfg.iterations; ++g) {
        // target cells: evaluable AND (occupied or adjacent to an occupied cell)
        std::vector<std::size_t> targets;
        for (int i = 0; i < G; ++i) {
            for (int j = 0; j < G; ++j) {
                std::size_t c = std::size_t(i) * std::size_t(G) + std::size_t(j);
                if (!res.evaluable[c]) continue;
                bool near = false;
                for (int di = -1; di <= 1 && !near; ++di)
                    for (int dj = -1; dj <= 1 && !near; ++dj) {
                        int ni = i + di, nj = j + dj;
                        if (ni < 0 || nj < 0 || ni >= G || nj >= G) continue;
                        near = res.archive.at(ni, nj).occupied;
                    }
                if (near) targets.push_back(c);
            }
        }
        if (targets.empty()) throw std::runtime_error("no evaluable target cells");

        std::vector<std::size_t> occupied;
        for (std::size_t c = 0; c < ncells; ++c)
            if (res.archive.cells[c].occupied) occupied.push_back(c);

        // fixed episode pools for this iteration, shared across siblings
        std::vector<std::vector<const Order*>> iter_pool(ncells);
        for (std::size_t c : targets)
            iter_pool[c] = pick_pool(
                train_orders, cp.pools[c], cfg.eval_episodes,
                derive_seed(cfg.seed, "qd-pool", (uint64_t(g) + 1) * ncells + c));
        uint64_t eval_seed = derive_seed(cfg.seed, "qd-eval", uint64_t(g));

        // children: parent sampled uniformly over occupied cells, mutated,
        // routed round-robin over the target cells
        Rng rng_parent(derive_seed(cfg.seed, "qd-parent", uint64_t(g)));
        std::vector<std::vector<double>> child_params(std::size_t(cfg.children));
        std::vector<std::size_t> child_cell(std::size_t(cfg.children), 0);
        for (int c = 0; c < cfg.children; ++c) {
            std::size_t pc = occupied[std::size_t(rng_parent.pick(int(occupied.size())))];
            Rng rng_mut(derive_seed(cfg.seed, "qd-mutate",
                                    uint64_t(g) * uint64_t(cfg.children) + uint64_t(c)));
            child_params[std::size_t(c)] =
                mutate_params(res.archive.cells[pc].params, cfg.sigma, rng_mut);
            child_cell[std::size_t(c)] = targets[std::size_t(c) % targets.size()];
        }

        std::vector<double> child_q(std::size_t(cfg.children), kMissing);
        parallel_for(std::size_t(cfg.children), cfg.workers, [&](std::size_t c) {
            PolicyParams p = unflatten_params(cfg.dims, child_params[c]);
            child_q[c] = evaluate_quality(p, res.norm, data, weights,
                                          iter_pool[child_cell[c]], eval_seed);
        });

        // single-writer updates in child order
        for (int c = 0; c < cfg.children; ++c) {
            std::size_t cell = child_cell[std::size_t(c)];
            int i = int(cell) / G, j = int(cell) % G;
            res.archive.at(i, j).n_evals += 1;
            if (!is_missing(child_q[std::size_t(c)]))
                archive_update(res.archive, i, j, child_params[std::size_t(c)],
                               child_q[std::size_t(c)], g);
        }
        res.total_child_evals += cfg.children;

        for (int i = 0; i < G; ++i)
            for (int j = 0; j < G; ++j)
                if (res.archive.at(i, j).occupied)
                    res.history.push_back(CellHistory{g, i, j, res.archive.at(i, j).quality});
        log_info("qd iter " + std::to_string(g) + " occupied " +
                 std::to_string(res.archive.occupied_count()));
    }
    return res;
}

void save_archive(const std::string& dir, const QDResult& r, const QDConfig& cfg) {
    std::filesystem::create_directories(dir);
    const int G = r.archive.grid;
    {
        CsvWriter w(dir + "/manifest.csv");
        w.header({"cell_i", "cell_j", "quality", "vs_baseline_pct", "n_evals"});
        for (int i = 0; i < G; ++i) {
            for (int j = 0; j < G; ++j) {
                const ArchiveCell& c = r.archive.at(i, j);
                if (!c.occupied) continue;
                std::size_t idx = std::size_t(i) * std::size_t(G) + std::size_t(j);
                double base = r.seed_quality[idx];
                double vs = (!is_missing(base) && base != 0.0)
                                ? 100.0 * (c.quality - base) / std::fabs(base)
                                : kMissing;
                w.field(i);
                w.field(j);
                w.field(c.quality);
                w.field(vs);
                w.field(c.n_evals);
                w.end_row();
            }
        }
    }
    {
        CsvWriter w(dir + "/surface.csv");
        w.header({"iteration", "cell_i", "cell_j", "quality"});
        for (const CellHistory& h : r.history) {
            w.field(h.iteration);
            w.field(h.cell_i);
            w.field(h.cell_j);
            w.field(h.quality);
            w.end_row();
        }
    }
    TrainConfig stub;
    stub.dims = cfg.dims;
    stub.seed = cfg.seed;
    for (int i = 0; i < G; ++i) {
        for (int j = 0; j < G; ++j) {
            const ArchiveCell& c = r.archive.at(i, j);
            if (!c.occupied) continue;
            PolicyParams p = unflatten_params(cfg.dims, c.params);
            save_checkpoint(dir + "/elite_" + std::to_string(i) + "_" +
                                std::to_string(j) + ".json",
                            p, r.norm, stub);
        }
    }
}

Checkpoint load_elite(const std::string& dir, int i, int j) {
    return load_checkpoint(dir + "/elite_" + std::to_string(i) + "_" +
                           std::to_string(j) + ".json");
}

}  // namespace geo
