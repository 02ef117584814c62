#pragma once

// Episodic execution environment: one parent order worked over minute bars,
// fills priced off the minute VWAP plus propagator impact.

#include <array>
#include <string>
#include <vector>

#include "geo/marketdata.hpp"
#include "geo/orders.hpp"

namespace geo {

// relative trade-rate adjustments; a = -1 means sit out the minute
inline const std::array<double, 9>& action_space() {
    static const std::array<double, 9> k = {-1.0, -0.75, -0.5, -0.25, 0.0,
                                            0.25, 0.5,   0.75, 1.0};
    return k;
}

struct RewardWeights {
    double arrival = 1.0;    // b1
    double vwap = 1.0;       // b2
    double schedule = 1.0;   // b3
    double inventory = 0.1;  // b4
};

struct Observation {
    double mid_price = 0;
    double market_volume = 0;
    double time_remaining = 0;
    double q_rem = 0;
    double adv_pct = 0;
    double ehv_pct = 0;
    double last_fill_price = 0;
    double last_fill_qty = 0;
    double immediate_impact_bps = 0;
    double cumulative_impact_bps = 0;
    double arrival_price = 0;
    double sigma_1 = 0;
    double sigma_5 = 0;

    static constexpr int kDim = 13;
    std::array<double, kDim> as_array() const {
        return {mid_price,       market_volume,       time_remaining,
                q_rem,           adv_pct,             ehv_pct,
                last_fill_price, last_fill_qty,       immediate_impact_bps,
                cumulative_impact_bps, arrival_price, sigma_1,
                sigma_5};
    }
};

struct StepRecord {
    int t = 0;
    double action = 0;  // action-space value; implied equivalent for baselines
    double q = 0;
    double p_fill = kMissing;  // missing when no fill this minute
    double impact_bps = 0;     // cumulative impact applied to this minute's fill
    double c_arrival = 0;
    double c_vwap = 0;
    double delta = 0;
    double zeta = 0;
    double reward = 0;
    double rho_target = 0;       // kMissing when undefined
    double market_volume = 0;
};

struct EpisodeSummary {
    double arrival_slippage_bps = kMissing;
    double vwap_slippage = kMissing;  // currency units per the metric table
    double total_cost_bps = 0;
    double completion_rate = 0;
    double duration_pct = 0;
};

struct EpisodeResult {
    long order_id = 0;
    bool ok = false;
    std::string error;
    std::vector<StepRecord> steps;
    EpisodeSummary summary;
};

struct SetupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ExecutionEnv {
public:
    explicit ExecutionEnv(const MarketData& data, RewardWeights weights = {});

    Observation reset(const Order& order);

    struct Step {
        Observation obs;
        double reward = 0;
        bool done = false;
        StepRecord record;
    };

    Step step(double action_value);     // value from action_space()
    Step step_quantity(double shares);  // direct-schedule baselines

    bool done() const { return done_; }
    int t() const { return t_; }
    double q_rem() const { return order_.q0 - fill_sum_; }
    const Order& order() const { return order_; }
    const std::vector<double>& profile() const { return profile_; }
    double current_market_volume() const;
    double target_rate() const;               // rho_target at the current minute
    double expected_remaining_volume() const;  // trailing-profile volume left
    EpisodeSummary summarize() const;          // call once done

private:
    Step do_step(double q_desired, bool action_mode, double action_value);
    Observation observe() const;
    const MinuteBar& bar_at(int t_step) const;

    const MarketData* data_;
    RewardWeights w_;

    Order order_;
    const BarSeries* series_ = nullptr;
    const DailyStats* stats_ = nullptr;
    std::vector<double> profile_;
    std::vector<double> suffix_;  // expected volume over [t, H) by step
    double p0_ = 0;
    double sigma_minute_ = 0;
    double lot_ = 0;  // fill grid: q0's ulp, keeps fill sums rounding-free

    int t_ = 0;
    bool done_ = false;
    bool active_ = false;
    double fill_sum_ = 0;
    // benchmark gaps accumulate as deviations from p0 so a flat tape with
    // zero impact produces exactly zero cost, free of product rounding
    double own_dev_ = 0, own_v_ = 0;
    double mkt_dev_ = 0, mkt_v_ = 0;
    double carried_price_ = 0;  // last tradable price, for quote/trade gaps
    ImpactState impact_;
    double last_fill_price_ = 0, last_fill_qty_ = 0, last_imm_impact_ = 0;
    int last_fill_t_ = -1;
    double total_cost_ = 0;  // dimensionless running weighted cost
};

}  // namespace geo
