#pragma once

// Quality-diversity search: a liquidity x volatility archive of policy
// parameter vectors, filled by mutate-evaluate-replace over seeded episodes.

#include "geo/ppo.hpp"

namespace geo {

struct Descriptor {
    double liq = 0;  // quantile rank of 21-day ADV, in [0,1]
    double vol = 0;  // quantile rank of 1-day Parkinson vol, in [0,1]
};

// Per-symbol sample means the quantile ranks are computed against.
struct UniverseStats {
    std::vector<std::string> symbols;  // sorted
    std::vector<double> adv;
    std::vector<double> vol;
    bool degenerate_liq = false;  // all ADVs equal: every rank is 1
    bool degenerate_vol = false;
};

UniverseStats compute_universe_stats(const MarketData& data);

// rank = fraction of the universe with value <= this symbol's value.
// Throws std::out_of_range when the symbol is not in the universe.
Descriptor compute_descriptor(const std::string& symbol, const UniverseStats& u);

// [0,1] -> {0..grid-1}; exactly 1.0 lands in the top cell.
int descriptor_cell(double d, int grid);

struct ArchiveCell {
    bool occupied = false;
    std::vector<double> params;  // flat policy weights
    double quality = 0;
    long n_evals = 0;        // candidate evaluations routed here (incl. seed)
    int replaced_at = -1;    // iteration of the last insert/replace, -1 = seed
};

struct Archive {
    int grid = 3;
    std::vector<ArchiveCell> cells;  // row-major [liq][vol]

    explicit Archive(int g = 3) : grid(g), cells(std::size_t(g) * std::size_t(g)) {}
    ArchiveCell& at(int i, int j) { return cells[std::size_t(i) * std::size_t(grid) + std::size_t(j)]; }
    const ArchiveCell& at(int i, int j) const {
        return cells[std::size_t(i) * std::size_t(grid) + std::size_t(j)];
    }
    int occupied_count() const {
        int n = 0;
        for (const auto& c : cells) n += c.occupied ? 1 : 0;
        return n;
    }
};

// Empty cell: insert. Occupied: replace only on strictly higher quality.
// Returns true when the cell changed.
bool archive_update(Archive& a, int i, int j, const std::vector<double>& params,
                    double quality, int iteration);

// child = parent + N(0, sigma^2) element-wise.
std::vector<double> mutate_params(const std::vector<double>& parent, double sigma,
                                  Rng& rng);

// Q = -mean dimensionless total execution cost over the given episodes,
// greedy policy, fixed seed. kMissing when no episode completes.
double evaluate_quality(const PolicyParams& params, const RunningNorm& norm,
                        const MarketData& data, RewardWeights weights,
                        const std::vector<const Order*>& orders, uint64_t seed);

struct QDConfig {
    NetDims dims;
    int grid = 3;
    int iterations = 500;
    int children = 256;
    double sigma = 0.01;
    int eval_episodes = 8;  // orders per candidate evaluation
    uint64_t seed = 0;
    int workers = 1;
};

struct CellHistory {
    int iteration = 0;
    int cell_i = 0, cell_j = 0;
    double quality = 0;
};

struct QDResult {
    Archive archive;
    RunningNorm norm;                  // shared by every elite, frozen
    std::vector<CellHistory> history;  // occupied cells after each iteration
    std::vector<double> seed_quality;  // baseline Q per cell; kMissing if unevaluable
    std::vector<uint8_t> evaluable;    // cell has enough matching orders
    long total_child_evals = 0;
};

// Seeds every evaluable cell with the given policy, then runs
// iterations x children mutate/evaluate/replace rounds. Children are routed
// round-robin over evaluable cells that are occupied or adjacent to one;
// siblings share per-iteration episode pools. Throws when no cell is evaluable.
QDResult run_map_elites(const MarketData& data, RewardWeights weights,
                        const std::vector<Order>& train_orders,
                        const PolicyParams& seed_params, const RunningNorm& seed_norm,
                        const QDConfig& cfg);

// manifest.csv + surface.csv + per-cell checkpoints (elite_<i>_<j>.json).
void save_archive(const std::string& dir, const QDResult& r, const QDConfig& cfg);
Checkpoint load_elite(const std::string& dir, int i, int j);

}  // namespace geo
