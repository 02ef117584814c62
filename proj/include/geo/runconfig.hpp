#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "geo/env.hpp"
#include "geo/impact.hpp"
#include "geo/mapelites.hpp"
#include "geo/marketdata.hpp"
#include "geo/orders.hpp"
#include "geo/ppo.hpp"

namespace geo {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One nested config file drives every subcommand. Unknown keys are rejected
// so a typo cannot silently fall back to a default.
struct RunConfig {
    uint64_t seed = 42;
    std::string out_dir = "out";
    int workers = 0;  // 0 means logical cores

    struct DataSection {
        std::string root = "data";
        double missing_ceiling = 0.07;
        double outlier_threshold = 0.10;
    } data;

    SynthConfig synth;

    CalibConfig calibration;
    std::vector<int> lag_grid = {5, 10, 20, 30};

    // seeds and the crosswise excluded calendar are filled in by the CLI
    OrderGenConfig orders_train;
    OrderGenConfig orders_test;

    RewardWeights reward;

    TrainConfig ppo;
    QDConfig qd;

    struct EvalSection {
        std::vector<std::string> strategies = {"twap", "vwap", "pov", "random"};
        double winsor_lo = 0.01;
        double winsor_hi = 0.99;
        std::string checkpoint;   // trained policy for strategy "ppo"
        std::string archive_dir;  // elite store for strategy "elite:i,j"
    } eval;
};

RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig load_run_config(const std::string& path);

// Full round-trippable dump with every default made explicit. Deterministic
// byte output for a given config, so reruns can be diffed.
std::string resolved_config_text(const RunConfig& cfg);
void write_resolved_config(const RunConfig& cfg, const std::string& path);

}  // namespace geo
