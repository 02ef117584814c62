#include <algorithm>
#include <cmath>
#include <cstdio>

#include "geo/dates.hpp"
#include "geo/marketdata.hpp"

namespace geo {

namespace {

// Exogenous flow scale for planted-impact data: participation cap chosen so
// the propagator return component has std ~ snr x the Gaussian noise std.
double planted_flow_cap(const ImpactParams& p, double sigma_minute, double snr) {
    double two_beta = 2.0 * p.beta();
    double decay2 = std::exp(-2.0 / p.tau);
    double S = decay2 / (1.0 - decay2);  // sum_{l>=1} exp(-2l/tau)
    double num = snr * snr * sigma_minute * sigma_minute * (two_beta + 1.0);
    double den = p.g0 * p.g0 * p.gamma * p.gamma * S;
    double cap = std::pow(num / den, 1.0 / two_beta);
    return std::min(cap, 0.5);
}

}  // namespace

MarketData synth_generate(const SynthConfig& cfg) {
    if (cfg.n_symbols < 1 || cfg.n_days < 1) throw std::invalid_argument("synth: empty universe");
    if (cfg.base_price <= 0) throw std::invalid_argument("synth: base_price must be > 0");
    if (cfg.daily_vol_range_lo <= 0 || cfg.daily_vol_range_hi < cfg.daily_vol_range_lo)
        throw std::invalid_argument("synth: bad daily_vol_range");
    if (cfg.adv_range_lo <= 0 || cfg.adv_range_hi < cfg.adv_range_lo)
        throw std::invalid_argument("synth: bad adv_range");

    const bool planted = cfg.planted_impact.has_value() && cfg.planted_impact->g0 > 0;
    std::vector<int> calendar = weekday_calendar(cfg.start_date, cfg.n_days);

    // U-shaped intraday weights, mean 1 across the session
    std::vector<double> shape(kMinutesPerDay);
    double shape_sum = 0;
    double c = (kMinutesPerDay - 1) / 2.0;
    for (int t = 0; t < kMinutesPerDay; ++t) {
        double z = (double(t) - c) / c;
        shape[std::size_t(t)] = 1.0 + cfg.u_shape_strength * z * z;
        shape_sum += shape[std::size_t(t)];
    }
    for (auto& w : shape) w *= double(kMinutesPerDay) / shape_sum;

    MarketData md;
    for (int i = 0; i < cfg.n_symbols; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%s%03d", cfg.symbol_prefix.c_str(), i);
        std::string sym(name);

        Rng srng(derive_seed(cfg.seed, "synth.symbol", uint64_t(i)));
        double adv = srng.uniform(cfg.adv_range_lo, cfg.adv_range_hi);
        double dvol = srng.uniform(cfg.daily_vol_range_lo, cfg.daily_vol_range_hi);
        double half_spread = 0.5 * srng.uniform(2.0, 10.0) * 1e-4;
        double sigma_m = dvol / std::sqrt(double(kMinutesPerDay));
        double flow_cap =
            planted ? planted_flow_cap(*cfg.planted_impact, sigma_m, 1.5) : 0.0;

        double price = cfg.base_price * srng.uniform(0.8, 1.2);
        SymbolBars days;
        for (int j = 0; j < cfg.n_days; ++j) {
            Rng rng(derive_seed(cfg.seed, "synth.day",
                                uint64_t(i) * 1000003ULL + uint64_t(j)));
            BarSeries series;
            series.symbol = sym;
            series.date = calendar[std::size_t(j)];
            double response = 0.0;  // propagator terms from lags >= 1, this session
            for (int t = 0; t < kMinutesPerDay; ++t) {
                double z_ret = rng.normal();
                double r = cfg.drift_per_minute + sigma_m * z_ret + response;
                double m_prev = price;
                price *= 1.0 + r;
                double m = price;

                double x;  // signed participation booked as trade imbalance
                if (planted) {
                    double eps = rng.uniform() < 0.5 ? 1.0 : -1.0;
                    x = eps * rng.uniform(0.0, flow_cap);
                } else {
                    x = std::clamp(0.3 * rng.normal(), -0.9, 0.9);
                }
                if (planted) {
                    const auto& P = *cfg.planted_impact;
                    double s = (x >= 0 ? 1.0 : -1.0) * P.gamma *
                               std::pow(std::fabs(x), P.beta());
                    response = std::exp(-1.0 / P.tau) * (response + P.g0 * s);
                }

                double V = adv / double(kMinutesPerDay) * shape[std::size_t(t)] *
                           std::exp(0.25 * rng.normal() - 0.03125);
                double vwap = 0.5 * (m_prev + m) * (1.0 + 0.05 * sigma_m * rng.normal());
                double hi = std::max(m_prev, m) * (1.0 + 0.25 * sigma_m * std::fabs(rng.normal()));
                double lo = std::min(m_prev, m) * (1.0 - 0.25 * sigma_m * std::fabs(rng.normal()));
                vwap = std::clamp(vwap, lo, hi);

                auto& b = series.bars[std::size_t(t)];
                b.time = t;
                b.trade_volume = V;
                b.trade_count = std::max(1.0, std::round(V / 250.0));
                double sided = 0.9 * V;
                b.buy_vol = 0.5 * sided * (1.0 + x / 0.9);
                b.sell_vol = 0.5 * sided * (1.0 - x / 0.9);
                b.unsided_vol = 0.1 * V;
                b.hid_vol = 0.1 * V;
                b.bid_price = m * (1.0 - half_spread);
                b.ask_price = m * (1.0 + half_spread);
                b.bid_size = std::max(1.0, 0.1 * adv / double(kMinutesPerDay) *
                                               (0.5 + rng.uniform()));
                b.ask_size = std::max(1.0, 0.1 * adv / double(kMinutesPerDay) *
                                               (0.5 + rng.uniform()));
                b.trade_last = std::clamp(m * (1.0 + 0.02 * sigma_m * rng.normal()), lo, hi);
                b.trade_high = hi;
                b.trade_low = lo;
                b.vwap = vwap;
            }
            days[series.date] = std::move(series);
        }
        clean_symbol(days);
        md.daily[sym] = compute_daily_stats(sym, days);
        md.bars[sym] = std::move(days);
    }
    return md;
}

}  // namespace geo
