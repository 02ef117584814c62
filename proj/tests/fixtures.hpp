#pragma once

// Hand-built market worlds for engine/metric tests: flat or drifting prices,
// constant volume, fully controlled daily stats.

#include <cmath>
#include <string>
#include <vector>

#include "geo/marketdata.hpp"
#include "geo/orders.hpp"

namespace geo::testfix {

// One clean day: constant spread around a mid path, constant volume, vwap=mid.
inline BarSeries make_series(const std::string& symbol, int date, double mid0,
                             double volume, double drift_per_minute = 0.0) {
    BarSeries s;
    s.symbol = symbol;
    s.date = date;
    double mid = mid0;
    for (int t = 0; t < kMinutesPerDay; ++t) {
        MinuteBar& b = s.bars[std::size_t(t)];
        b.bid_price = mid - 0.05;
        b.ask_price = mid + 0.05;
        b.bid_size = 100;
        b.ask_size = 100;
        b.trade_count = 10;
        b.trade_volume = volume;
        b.buy_vol = volume / 2;
        b.sell_vol = volume / 2;
        b.unsided_vol = 0;
        b.hid_vol = 0;
        b.vwap = mid;
        b.trade_last = mid;
        b.trade_high = mid + 0.05;
        b.trade_low = mid - 0.05;
        mid *= (1.0 + drift_per_minute);
    }
    return clean_bars(s);
}

// A little universe with hand-set daily stats (sigma values chosen, not
// recomputed) so reward formulas can be checked against exact numbers.
inline MarketData make_world(const std::string& symbol, const std::vector<int>& dates,
                             double mid, double volume, double sigma_1 = 0.02,
                             double drift_per_minute = 0.0) {
    MarketData data;
    for (int date : dates) {
        data.bars[symbol][date] = make_series(symbol, date, mid, volume,
                                              drift_per_minute);
        DailyStats st;
        st.symbol = symbol;
        st.date = date;
        st.adv_21 = volume * kMinutesPerDay;
        st.avg_trade_count_21 = 10 * kMinutesPerDay;
        st.avg_spread_21 = 0.1;
        st.avg_depth_21 = 200;
        st.vwap_day = mid;
        st.sigma_1 = sigma_1;
        st.sigma_2 = sigma_1;
        st.sigma_5 = sigma_1;
        st.trade_high_day = mid + 0.05;
        st.trade_low_day = mid - 0.05;
        data.daily[symbol].push_back(st);
    }
    return data;
}

inline Order make_order(const std::string& symbol, int date, int start, int horizon,
                        double q0, int side, double g0 = 0.0, double tau = 10.0,
                        ImpactForm form = ImpactForm::sqrt) {
    Order o;
    o.id = 1;
    o.symbol = symbol;
    o.date = date;
    o.start_minute = start;
    o.horizon = horizon;
    o.q0 = q0;
    o.side = side;
    o.ehv_pct = 1.0;
    o.adv_pct = 1.0;
    o.impact.form = form;
    o.impact.gamma = 1.0;
    o.impact.g0 = g0;
    o.impact.tau = tau;
    return o;
}

}  // namespace geo::testfix
