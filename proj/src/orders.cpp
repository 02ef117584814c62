#include "geo/orders.hpp"

#include <algorithm>
#include <cmath>

#include "geo/csvio.hpp"
#include "geo/dates.hpp"

namespace geo {

std::vector<Order> generate_orders(const OrderGenConfig& cfg, const MarketData& data,
                                   const std::map<std::string, ImpactParams>& calibration) {
    if (cfg.n_orders < 1) throw OrderGenError("n_orders must be >= 1");
    if (cfg.ehv_lo <= 0 || cfg.ehv_hi < cfg.ehv_lo) throw OrderGenError("bad ehv range");
    if (cfg.horizon_lo < 1 || cfg.horizon_hi > kMinutesPerDay ||
        cfg.horizon_hi < cfg.horizon_lo)
        throw OrderGenError("bad horizon range");
    if (cfg.ehv_shape != "loguniform" && cfg.ehv_shape != "uniform")
        throw OrderGenError("unknown ehv_shape: " + cfg.ehv_shape);
    if (cfg.has_excluded_range &&
        ranges_overlap(cfg.date_lo, cfg.date_hi, cfg.excluded_lo, cfg.excluded_hi))
        throw OrderGenError("calendar overlap: requested dates intersect the excluded split");

    // pool of (symbol, date) with a retained calibration, stats, and >= 1 prior
    // day of history for the volume profile
    struct Slot {
        const std::string* symbol;
        int date;
    };
    std::vector<Slot> pool;
    for (const auto& [sym, params] : calibration) {
        if (!params.retained) continue;
        auto bit = data.bars.find(sym);
        if (bit == data.bars.end()) continue;
        for (const auto& [date, series] : bit->second) {
            if (series.status == SeriesStatus::dropped) continue;
            if (!date_in_range(date, cfg.date_lo, cfg.date_hi)) continue;
            if (bit->second.begin()->first == date) continue;  // no prior history
            const DailyStats* st = data.find_stats(sym, date);
            if (!st || is_missing(st->adv_21) || st->adv_21 <= 0) continue;
            pool.push_back({&sym, date});
        }
    }
    if (pool.empty()) throw OrderGenError("no eligible (symbol, date) slots in range");

    Rng rng(derive_seed(cfg.seed, "orders"));
    std::vector<Order> out;
    out.reserve(std::size_t(cfg.n_orders));
    int attempts = 0;
    while (int(out.size()) < cfg.n_orders) {
        if (++attempts > cfg.n_orders * 200)
            throw OrderGenError("order sampling failed to converge");
        const Slot& slot = pool[std::size_t(rng.pick(int(pool.size())))];
        int h = rng.uniform_int(cfg.horizon_lo, cfg.horizon_hi);
        int start = rng.uniform_int(0, kMinutesPerDay - h);
        double ehv_frac = cfg.ehv_shape == "loguniform"
                              ? rng.log_uniform(cfg.ehv_lo, cfg.ehv_hi)
                              : rng.uniform(cfg.ehv_lo, cfg.ehv_hi);
        int side = rng.uniform() < cfg.side_buy_prob ? 1 : -1;

        auto prof = intraday_profile(data.bars.at(*slot.symbol), slot.date);
        double ehv = 0;
        for (int t = start; t < start + h; ++t) ehv += prof[std::size_t(t)];
        if (ehv <= 0) continue;  // dead window, resample

        const DailyStats* st = data.find_stats(*slot.symbol, slot.date);
        Order o;
        o.id = long(out.size()) + 1;
        o.symbol = *slot.symbol;
        o.date = slot.date;
        o.start_minute = start;
        o.horizon = h;
        o.q0 = ehv_frac * ehv;
        o.side = side;
        o.ehv_pct = ehv_frac * 100.0;
        o.adv_pct = o.q0 / st->adv_21 * 100.0;
        o.impact = calibration.at(*slot.symbol);
        out.push_back(std::move(o));
    }
    return out;
}

void validate_orders_outside(const std::vector<Order>& orders, int lo, int hi,
                             const std::string& what) {
    for (const auto& o : orders)
        if (date_in_range(o.date, lo, hi))
            throw OrderGenError("calendar overlap: order " + std::to_string(o.id) +
                                " dated " + std::to_string(o.date) + " falls inside " +
                                what);
}

void save_orders_csv(const std::string& path, const std::vector<Order>& orders) {
    CsvWriter w(path);
    w.header({"id", "symbol", "date", "start_minute", "horizon", "q0", "side",
              "ehv_pct", "adv_pct", "g0", "tau", "gamma", "form"});
    for (const auto& o : orders) {
        w.field(o.id);
        w.field(o.symbol);
        w.field(o.date);
        w.field(o.start_minute);
        w.field(o.horizon);
        w.field(o.q0);
        w.field(o.side);
        w.field(o.ehv_pct);
        w.field(o.adv_pct);
        w.field(o.impact.g0);
        w.field(o.impact.tau);
        w.field(o.impact.gamma);
        w.field(std::string(form_name(o.impact.form)));
        w.end_row();
    }
}

std::vector<Order> load_orders_csv(const std::string& path) {
    CsvReader rd(path);
    if (!rd.ok()) throw std::runtime_error("cannot open orders: " + path);
    std::vector<std::string> f;
    if (!rd.next(f) || f.empty() || f[0] != "id")
        throw std::runtime_error("bad orders header: " + path);
    if (f.size() != 13) throw std::runtime_error("bad orders column count: " + path);
    std::vector<Order> out;
    while (rd.next(f)) {
        if (f.size() != 13)
            throw std::runtime_error(path + ":" + std::to_string(rd.line_no()) +
                                     ": bad column count");
        Order o;
        long date, start, horizon, side;
        bool ok = csv_parse_long(f[0], o.id) && csv_parse_long(f[2], date) &&
                  csv_parse_long(f[3], start) && csv_parse_long(f[4], horizon) &&
                  csv_parse_double(f[5], o.q0) && csv_parse_long(f[6], side) &&
                  csv_parse_double(f[7], o.ehv_pct) && csv_parse_double(f[8], o.adv_pct) &&
                  csv_parse_double(f[9], o.impact.g0) &&
                  csv_parse_double(f[10], o.impact.tau) &&
                  csv_parse_double(f[11], o.impact.gamma);
        if (!ok)
            throw std::runtime_error(path + ":" + std::to_string(rd.line_no()) +
                                     ": bad field");
        o.symbol = f[1];
        o.date = int(date);
        o.start_minute = int(start);
        o.horizon = int(horizon);
        o.side = int(side);
        o.impact.form = form_from_name(f[12]);
        if (o.side != 1 && o.side != -1)
            throw std::runtime_error(path + ":" + std::to_string(rd.line_no()) +
                                     ": side must be +/-1");
        if (o.horizon < 1 || o.start_minute < 0 ||
            o.start_minute + o.horizon > kMinutesPerDay)
            throw std::runtime_error(path + ":" + std::to_string(rd.line_no()) +
                                     ": window out of session");
        if (!(o.q0 > 0))
            throw std::runtime_error(path + ":" + std::to_string(rd.line_no()) +
                                     ": q0 must be > 0");
        out.push_back(std::move(o));
    }
    return out;
}

}  // namespace geo
