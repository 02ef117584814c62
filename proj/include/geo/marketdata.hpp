#pragma once

// Minute-bar market data: loading, cleaning, daily statistics, trailing
// intraday volume profiles, and the synthetic generator.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geo/common.hpp"
#include "geo/impact.hpp"

namespace geo {

constexpr int kMinutesPerDay = 390;

struct MinuteBar {
    int time = 0;  // minute of session, 0..389
    double trade_count = kMissing;
    double trade_volume = kMissing;
    double hid_vol = kMissing;
    double unsided_vol = kMissing;
    double sell_vol = kMissing;
    double buy_vol = kMissing;
    double bid_price = kMissing;
    double ask_price = kMissing;
    double bid_size = kMissing;
    double ask_size = kMissing;
    double trade_last = kMissing;
    double trade_high = kMissing;
    double trade_low = kMissing;
    double vwap = kMissing;
    // derived
    double mid_price = kMissing;
    double trade_imbalance = kMissing;  // (buy - sell) / volume
    double volatility = kMissing;       // rolling 21-minute std of mid returns

    bool has_quote() const { return !is_missing(bid_price) && !is_missing(ask_price); }
    bool has_trades() const { return !is_missing(trade_volume) && trade_volume > 0.0; }
};

enum class SeriesStatus { raw, clean, dropped };

struct BarSeries {
    std::string symbol;
    int date = 0;  // YYYYMMDD
    std::vector<MinuteBar> bars;                  // always kMinutesPerDay slots
    std::vector<uint8_t> excluded_for_returns;    // zero-trade or outlier minutes
    SeriesStatus status = SeriesStatus::raw;

    BarSeries() : bars(kMinutesPerDay), excluded_for_returns(kMinutesPerDay, 0) {
        for (int t = 0; t < kMinutesPerDay; ++t) bars[std::size_t(t)].time = t;
    }
    int missing_quote_minutes() const {
        int n = 0;
        for (const auto& b : bars) n += b.has_quote() ? 0 : 1;
        return n;
    }
};

struct LoadIssue {
    std::string file;
    int line = 0;  // 0 = file-level
    std::string message;
};

struct LoadReport {
    std::vector<LoadIssue> issues;
    int files_loaded = 0;
    long rows_loaded = 0;
    long rows_rejected = 0;
};

using SymbolBars = std::map<int, BarSeries>;  // date -> series

struct DailyStats {
    std::string symbol;
    int date = 0;
    double adv_21 = kMissing;
    double avg_trade_count_21 = kMissing;
    double avg_spread_21 = kMissing;
    double avg_depth_21 = kMissing;
    double vwap_day = kMissing;  // volume-weighted, last-trade-price fallback
    double sigma_1 = kMissing;   // Parkinson, window 1 day, clipped
    double sigma_2 = kMissing;   // window 2
    double sigma_5 = kMissing;   // window 5
    double trade_high_day = kMissing;
    double trade_low_day = kMissing;
};

constexpr double kSigmaClipLo = 1e-4;
constexpr double kSigmaClipHi = 2.0;

// sqrt( (1/(4 n ln2)) sum ln(H/L)^2 ) over the last w entries; days without a
// usable range are skipped and n shrinks accordingly (clip floor if none).
double parkinson_vol(const std::vector<double>& highs, const std::vector<double>& lows,
                     int w);

struct MarketData {
    std::map<std::string, SymbolBars> bars;
    std::map<std::string, std::vector<DailyStats>> daily;  // sorted by date

    const BarSeries* find_series(const std::string& symbol, int date) const;
    const DailyStats* find_stats(const std::string& symbol, int date) const;
    std::vector<int> dates(const std::string& symbol) const;
};

// Directory layout: <root>/bars/<SYMBOL>/<YYYYMMDD>.csv. Malformed rows and
// invariant-violating rows (ask < bid, negative volume) are rejected with a
// line number in the report; the load continues.
std::map<std::string, SymbolBars> load_minute_bars(const std::string& root,
                                                   LoadReport& report,
                                                   int workers = 1);

// Forward-fills quote gaps of exactly one bar, flags zero-trade minutes and
// |return| > outlier_threshold minutes as excluded-for-returns, computes the
// derived per-minute fields. Idempotent.
BarSeries clean_bars(const BarSeries& raw, double outlier_threshold = 0.10);

// Applies clean_bars per day and the missing-value ceiling (fraction of
// quote-missing minutes across ALL the symbol's days after fill); beyond the
// ceiling every series of the symbol is marked dropped.
void clean_symbol(SymbolBars& days, double missing_ceiling = 0.07,
                  double outlier_threshold = 0.10);

std::vector<DailyStats> compute_daily_stats(const std::string& symbol,
                                            const SymbolBars& days, int window = 21);

// Mean volume per minute over up to `window` days strictly before `date`
// (falls back to the day itself when no history exists). Missing minutes
// count as zero volume.
std::vector<double> intraday_profile(const SymbolBars& days, int date, int window = 21);

// Per-minute mid returns and signed participation (trade imbalance) for
// calibration, concatenated across days with max_lag zero-flow spacers so lag
// windows never straddle a session boundary.
CalibSeries build_calibration_series(const SymbolBars& days, int max_lag);

// ============================================================
// Synthetic generator
// ============================================================

struct SynthConfig {
    int n_symbols = 4;
    int n_days = 60;
    double base_price = 100.0;
    double daily_vol_range_lo = 0.01;
    double daily_vol_range_hi = 0.04;
    double adv_range_lo = 5e5;
    double adv_range_hi = 5e6;
    double u_shape_strength = 1.5;
    std::optional<ImpactParams> planted_impact;
    uint64_t seed = 0;
    int start_date = 20220103;
    std::string symbol_prefix = "SYN";
    // deterministic per-minute return drift (0 for plain noise data)
    double drift_per_minute = 0.0;
};

// Bit-reproducible for a given config; planted impact injects an exogenous
// propagator response that calibration can recover.
MarketData synth_generate(const SynthConfig& cfg);

void write_market_data_csv(const MarketData& data, const std::string& root);
MarketData load_market_data(const std::string& root, LoadReport& report,
                            int workers = 1, double missing_ceiling = 0.07,
                            double outlier_threshold = 0.10);

}  // namespace geo
