#pragma once

// Per-episode execution metrics, winsorized aggregation, and report files
// (summary tables, plot data, results JSONL).

#include <string>
#include <vector>

#include "geo/env.hpp"

namespace geo {

struct MetricRow {
    long order_id = 0;
    std::string strategy;
    bool pathological = false;  // failed or zero-executed; dropped before aggregation

    double arrival_slippage_bps = kMissing;
    double market_vwap_vs_arrival_bps = kMissing;  // drift measure, no side
    double vwap_slippage = kMissing;               // currency units
    double completion_rate = 0;
    double horizon_usage = 0;
    double action_variability = 0;  // population variance of per-step actions
    double no_trade_pct = 0;
    double high_rate_favourable_pct = 0;
    double low_rate_unfavourable_pct = 0;
    double total_cost_bps = 0;
    double return_drift_bps = kMissing;  // side-signed mid move over the window
    double notional = 0;                 // executed currency
    double mean_action = 0;

    // weighted cost decomposition; the four sum to total_cost_bps
    double cost_arrival_bps = 0;
    double cost_vwap_bps = 0;
    double cost_schedule_bps = 0;
    double cost_inventory_bps = 0;
};

// Recomputes every metric from the step records and the bar data; matches the
// engine's own end-of-episode summary (cross-checked in tests).
MetricRow compute_metrics(const EpisodeResult& result, const Order& order,
                          const MarketData& data, RewardWeights weights);

// Nearest-rank percentile of a sorted sample, p in (0,1].
double percentile_nearest_rank(const std::vector<double>& sorted, double p);

// Clamp into [P_lo, P_hi] empirical percentiles; order preserved; idempotent.
std::vector<double> winsorize(std::vector<double> values, double p_lo = 0.01,
                              double p_hi = 0.99);

struct StrategySummary {
    std::string strategy;
    long n = 0;              // aggregated rows
    long n_pathological = 0;  // excluded rows
    double notional_sum = 0;

    // winsorized means with standard errors (sample std / sqrt(n))
    double arrival_slippage_bps_mean = kMissing, arrival_slippage_bps_se = kMissing;
    double return_drift_bps_mean = kMissing, return_drift_bps_se = kMissing;
    double total_cost_bps_mean = kMissing, total_cost_bps_se = kMissing;
    double vwap_slippage_mean = kMissing, vwap_slippage_se = kMissing;
    double market_vwap_vs_arrival_bps_mean = kMissing, market_vwap_vs_arrival_bps_se = kMissing;

    double completion_rate_mean = kMissing;
    double duration_pct_mean = kMissing;  // 100 * horizon usage
    double action_pct_mean = kMissing;    // 100 * mean action
    double action_variability_mean = kMissing;
    double no_trade_pct_mean = kMissing;
    double high_rate_favourable_pct_mean = kMissing;
    double low_rate_unfavourable_pct_mean = kMissing;

    double cost_arrival_bps_mean = kMissing;
    double cost_vwap_bps_mean = kMissing;
    double cost_schedule_bps_mean = kMissing;
    double cost_inventory_bps_mean = kMissing;
};

// Groups rows by strategy; pathological rows are excluded, then each metric
// column is winsorized before its mean/SE. Empty groups are skipped.
std::vector<StrategySummary> aggregate_summary(const std::vector<MetricRow>& rows,
                                               double winsor_lo = 0.01,
                                               double winsor_hi = 0.99);

void write_metric_rows_csv(const std::string& path, const std::vector<MetricRow>& rows);
void write_summary_csv(const std::string& path, const std::vector<StrategySummary>& s);
void write_summary_json(const std::string& path, const std::vector<StrategySummary>& s);

// plotdata: mean action per horizon bucket, split by order-level drift sign
void write_action_horizon_csv(const std::string& path,
                              const std::vector<MetricRow>& rows,
                              const std::vector<const EpisodeResult*>& results,
                              const std::vector<const Order*>& orders, int buckets = 20);
// plotdata: per-strategy mean weighted cost components
void write_cost_decomposition_csv(const std::string& path,
                                  const std::vector<StrategySummary>& s);
// plotdata: one order's full step trace
void write_anatomy_csv(const std::string& path, const EpisodeResult& result,
                       const Order& order);

// one JSON object per line: strategy, the order, the summary, the step trace
void save_results_jsonl(const std::string& path, const std::string& strategy,
                        const std::vector<Order>& orders,
                        const std::vector<EpisodeResult>& results);

struct LoadedRun {
    std::vector<std::string> strategies;  // parallel to orders/results
    std::vector<Order> orders;
    std::vector<EpisodeResult> results;
};

LoadedRun load_results_jsonl(const std::string& path);

}  // namespace geo
