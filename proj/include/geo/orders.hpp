#pragma once

// Parent-order sampling and the order store.

#include <map>
#include <string>
#include <vector>

#include "geo/impact.hpp"
#include "geo/marketdata.hpp"

namespace geo {

struct Order {
    long id = 0;
    std::string symbol;
    int date = 0;          // YYYYMMDD
    int start_minute = 0;  // 0..389
    int horizon = 1;       // minutes, start_minute + horizon <= 390
    double q0 = 0;         // shares, > 0
    int side = 1;          // +1 buy / -1 sell
    double ehv_pct = 0;    // order size as % of expected horizon volume
    double adv_pct = 0;    // order size as % of 21-day ADV
    ImpactParams impact;   // per-symbol calibrated propagator
};

struct OrderGenError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OrderGenConfig {
    int n_orders = 100;
    int date_lo = 0;
    int date_hi = 99991231;
    // the other split's calendar; any overlap with [date_lo, date_hi] or a
    // sampled order date inside it is a validation error
    bool has_excluded_range = false;
    int excluded_lo = 0;
    int excluded_hi = 0;
    double ehv_lo = 0.005;  // fraction of expected horizon volume
    double ehv_hi = 0.20;
    std::string ehv_shape = "loguniform";  // or "uniform"
    int horizon_lo = 1;
    int horizon_hi = 390;
    double side_buy_prob = 0.5;
    uint64_t seed = 0;
};

// Samples orders over retained symbols and dates with usable stats/history.
// q0 = ehv * (trailing-profile volume over the order window).
std::vector<Order> generate_orders(const OrderGenConfig& cfg, const MarketData& data,
                                   const std::map<std::string, ImpactParams>& calibration);

// Errors if any order is dated inside the forbidden window [lo, hi].
void validate_orders_outside(const std::vector<Order>& orders, int lo, int hi,
                             const std::string& what);

void save_orders_csv(const std::string& path, const std::vector<Order>& orders);
std::vector<Order> load_orders_csv(const std::string& path);

}  // namespace geo
