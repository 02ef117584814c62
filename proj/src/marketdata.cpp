#include "geo/marketdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <mutex>

#include "geo/csvio.hpp"
#include "geo/dates.hpp"

namespace fs = std::filesystem;

namespace geo {

namespace {

const std::vector<std::string> kMinuteCols = {
    "time",      "trade_count", "trade_volume", "hid_vol",   "unsided_vol",
    "sell_vol",  "buy_vol",     "bid_price",    "ask_price", "bid_size",
    "ask_size",  "trade_last",  "trade_high",   "trade_low", "vwap"};

bool parse_minute_row(const std::vector<std::string>& f, MinuteBar& b, std::string& err) {
    if (f.size() != kMinuteCols.size()) {
        err = "expected " + std::to_string(kMinuteCols.size()) + " columns, got " +
              std::to_string(f.size());
        return false;
    }
    long t;
    if (!csv_parse_long(f[0], t) || t < 0 || t >= kMinutesPerDay) {
        err = "bad minute index '" + f[0] + "'";
        return false;
    }
    double* slots[] = {&b.trade_count, &b.trade_volume, &b.hid_vol, &b.unsided_vol,
                       &b.sell_vol,    &b.buy_vol,      &b.bid_price, &b.ask_price,
                       &b.bid_size,    &b.ask_size,     &b.trade_last, &b.trade_high,
                       &b.trade_low,   &b.vwap};
    for (std::size_t i = 0; i < 14; ++i) {
        if (!csv_parse_double(f[i + 1], *slots[i])) {
            err = "bad numeric field '" + f[i + 1] + "' in column " + kMinuteCols[i + 1];
            return false;
        }
    }
    b.time = int(t);
    if (b.has_quote() && b.ask_price < b.bid_price) {
        err = "crossed quote (ask < bid)";
        return false;
    }
    for (double* v : {&b.trade_volume, &b.sell_vol, &b.buy_vol, &b.hid_vol, &b.unsided_vol})
        if (!is_missing(*v) && *v < 0) {
            err = "negative volume";
            return false;
        }
    return true;
}

void load_one_file(const std::string& path, const std::string& symbol, int date,
                   BarSeries& series, LoadReport& rep, std::mutex& mu) {
    CsvReader rd(path);
    if (!rd.ok()) {
        std::lock_guard<std::mutex> lk(mu);
        rep.issues.push_back({path, 0, "cannot open"});
        return;
    }
    std::vector<std::string> f;
    if (!rd.next(f)) {
        std::lock_guard<std::mutex> lk(mu);
        rep.issues.push_back({path, 0, "empty file"});
        return;
    }
    if (f != kMinuteCols) {
        std::lock_guard<std::mutex> lk(mu);
        rep.issues.push_back({path, 1, "schema mismatch in header"});
        return;
    }
    series.symbol = symbol;
    series.date = date;
    long loaded = 0, rejected = 0;
    std::vector<LoadIssue> local;
    std::vector<uint8_t> seen(kMinutesPerDay, 0);
    while (rd.next(f)) {
        MinuteBar b;
        std::string err;
        if (!parse_minute_row(f, b, err)) {
            local.push_back({path, rd.line_no(), err});
            ++rejected;
            continue;
        }
        if (seen[std::size_t(b.time)]) {
            local.push_back({path, rd.line_no(), "duplicate minute " + std::to_string(b.time)});
            ++rejected;
            continue;
        }
        seen[std::size_t(b.time)] = 1;
        series.bars[std::size_t(b.time)] = b;
        ++loaded;
    }
    std::lock_guard<std::mutex> lk(mu);
    rep.files_loaded += 1;
    rep.rows_loaded += loaded;
    rep.rows_rejected += rejected;
    for (auto& is : local) rep.issues.push_back(std::move(is));
}

double clip_sigma(double v) { return std::min(kSigmaClipHi, std::max(kSigmaClipLo, v)); }

}  // namespace

const BarSeries* MarketData::find_series(const std::string& symbol, int date) const {
    auto it = bars.find(symbol);
    if (it == bars.end()) return nullptr;
    auto jt = it->second.find(date);
    return jt == it->second.end() ? nullptr : &jt->second;
}

const DailyStats* MarketData::find_stats(const std::string& symbol, int date) const {
    auto it = daily.find(symbol);
    if (it == daily.end()) return nullptr;
    for (const auto& s : it->second)
        if (s.date == date) return &s;
    return nullptr;
}

std::vector<int> MarketData::dates(const std::string& symbol) const {
    std::vector<int> out;
    auto it = bars.find(symbol);
    if (it == bars.end()) return out;
    for (const auto& [d, _] : it->second) out.push_back(d);
    return out;
}

double parkinson_vol(const std::vector<double>& highs, const std::vector<double>& lows,
                     int w) {
    if (w < 1) throw std::invalid_argument("parkinson_vol: window must be >= 1");
    if (highs.size() != lows.size())
        throw std::invalid_argument("parkinson_vol: sequences must align");
    if (int(highs.size()) < w) throw std::invalid_argument("parkinson_vol: too few days");
    double acc = 0.0;
    int n = 0;
    for (int i = 0; i < w; ++i) {
        double h = highs[highs.size() - 1 - std::size_t(i)];
        double l = lows[lows.size() - 1 - std::size_t(i)];
        if (is_missing(h) || is_missing(l) || h <= 0 || l <= 0 || h < l) continue;
        double x = std::log(h / l);
        acc += x * x;
        ++n;
    }
    if (n == 0) return kSigmaClipLo;
    return clip_sigma(std::sqrt(acc / (4.0 * double(n) * std::log(2.0))));
}

std::map<std::string, SymbolBars> load_minute_bars(const std::string& root,
                                                   LoadReport& report, int workers) {
    fs::path base = fs::path(root) / "bars";
    if (!fs::exists(base)) throw std::runtime_error("no bars directory under " + root);

    struct FileJob {
        std::string path, symbol;
        int date;
    };
    std::vector<FileJob> jobs;
    std::vector<fs::path> symdirs;
    for (const auto& e : fs::directory_iterator(base))
        if (e.is_directory()) symdirs.push_back(e.path());
    std::sort(symdirs.begin(), symdirs.end());
    for (const auto& sd : symdirs) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(sd))
            if (e.is_regular_file() && e.path().extension() == ".csv")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            long d;
            if (!csv_parse_long(f.stem().string(), d)) {
                report.issues.push_back({f.string(), 0, "file name is not a date"});
                continue;
            }
            jobs.push_back({f.string(), sd.filename().string(), int(d)});
        }
    }

    std::map<std::string, SymbolBars> out;
    for (const auto& j : jobs) out[j.symbol][j.date] = BarSeries();
    std::mutex mu;
    parallel_for(jobs.size(), workers, [&](std::size_t i) {
        const auto& j = jobs[i];
        load_one_file(j.path, j.symbol, j.date, out[j.symbol][j.date], report, mu);
    });
    return out;
}

BarSeries clean_bars(const BarSeries& raw, double outlier_threshold) {
    BarSeries s = raw;
    // quote gaps of exactly one bar take the left neighbour's quote
    for (int t = 1; t < kMinutesPerDay; ++t) {
        auto& b = s.bars[std::size_t(t)];
        if (b.has_quote()) continue;
        bool left_ok = s.bars[std::size_t(t - 1)].has_quote();
        bool right_missing = t + 1 < kMinutesPerDay && !raw.bars[std::size_t(t + 1)].has_quote();
        bool left_was_missing = !raw.bars[std::size_t(t - 1)].has_quote();
        if (left_ok && !right_missing && !left_was_missing) {
            const auto& prev = s.bars[std::size_t(t - 1)];
            b.bid_price = prev.bid_price;
            b.ask_price = prev.ask_price;
            b.bid_size = prev.bid_size;
            b.ask_size = prev.ask_size;
        }
    }
    for (auto& b : s.bars) {
        b.mid_price = b.has_quote() ? 0.5 * (b.bid_price + b.ask_price) : kMissing;
        b.trade_imbalance =
            (b.has_trades() && !is_missing(b.buy_vol) && !is_missing(b.sell_vol))
                ? (b.buy_vol - b.sell_vol) / b.trade_volume
                : kMissing;
        b.volatility = kMissing;
    }
    std::fill(s.excluded_for_returns.begin(), s.excluded_for_returns.end(), 0);
    std::vector<double> rets(kMinutesPerDay, kMissing);
    for (int t = 0; t < kMinutesPerDay; ++t) {
        auto& b = s.bars[std::size_t(t)];
        if (!b.has_trades()) s.excluded_for_returns[std::size_t(t)] = 1;
        if (t == 0) continue;
        double m0 = s.bars[std::size_t(t - 1)].mid_price, m1 = b.mid_price;
        if (is_missing(m0) || is_missing(m1) || m0 <= 0) continue;
        double r = m1 / m0 - 1.0;
        rets[std::size_t(t)] = r;
        if (std::fabs(r) > outlier_threshold) s.excluded_for_returns[std::size_t(t)] = 1;
    }
    // rolling 21-minute std of mid returns
    constexpr int kVolWin = 21;
    for (int t = 0; t < kMinutesPerDay; ++t) {
        std::vector<double> win;
        for (int u = std::max(1, t - kVolWin + 1); u <= t; ++u)
            if (!is_missing(rets[std::size_t(u)])) win.push_back(rets[std::size_t(u)]);
        if (win.size() >= 2) s.bars[std::size_t(t)].volatility = stddev_of(win);
    }
    s.status = SeriesStatus::clean;
    return s;
}

void clean_symbol(SymbolBars& days, double missing_ceiling, double outlier_threshold) {
    long missing = 0, total = 0;
    for (auto& [date, series] : days) {
        series = clean_bars(series, outlier_threshold);
        missing += series.missing_quote_minutes();
        total += kMinutesPerDay;
    }
    if (total > 0 && double(missing) / double(total) > missing_ceiling)
        for (auto& [date, series] : days) series.status = SeriesStatus::dropped;
}

std::vector<DailyStats> compute_daily_stats(const std::string& symbol,
                                            const SymbolBars& days, int window) {
    struct DayAgg {
        int date;
        double volume = 0, count = 0;
        double spread = kMissing, depth = kMissing;
        double vwap = kMissing, high = kMissing, low = kMissing;
    };
    std::vector<DayAgg> agg;
    for (const auto& [date, series] : days) {
        DayAgg a;
        a.date = date;
        double sp_sum = 0, dp_sum = 0, pv = 0, vv = 0, last_px = kMissing;
        int sp_n = 0, dp_n = 0;
        for (const auto& b : series.bars) {
            if (b.has_quote()) {
                sp_sum += b.ask_price - b.bid_price;
                ++sp_n;
                if (!is_missing(b.bid_size) && !is_missing(b.ask_size)) {
                    dp_sum += 0.5 * (b.bid_size + b.ask_size);
                    ++dp_n;
                }
            }
            if (b.has_trades()) {
                a.volume += b.trade_volume;
                if (!is_missing(b.trade_count)) a.count += b.trade_count;
                if (!is_missing(b.vwap)) {
                    pv += b.vwap * b.trade_volume;
                    vv += b.trade_volume;
                }
                if (!is_missing(b.trade_last)) last_px = b.trade_last;
                if (!is_missing(b.trade_high))
                    a.high = is_missing(a.high) ? b.trade_high : std::max(a.high, b.trade_high);
                if (!is_missing(b.trade_low))
                    a.low = is_missing(a.low) ? b.trade_low : std::min(a.low, b.trade_low);
            }
        }
        if (sp_n) a.spread = sp_sum / sp_n;
        if (dp_n) a.depth = dp_sum / dp_n;
        a.vwap = vv > 0 ? pv / vv : last_px;  // last-trade fallback
        agg.push_back(a);
    }

    auto trailing_mean = [&](std::size_t i, auto get) {
        double s = 0;
        int n = 0;
        for (std::size_t k = i + 1 >= std::size_t(window) ? i + 1 - std::size_t(window) : 0;
             k <= i; ++k) {
            double v = get(agg[k]);
            if (!is_missing(v)) {
                s += v;
                ++n;
            }
        }
        return n ? s / n : kMissing;
    };

    std::vector<DailyStats> out;
    std::vector<double> highs, lows;
    for (std::size_t i = 0; i < agg.size(); ++i) {
        highs.push_back(agg[i].high);
        lows.push_back(agg[i].low);
        DailyStats d;
        d.symbol = symbol;
        d.date = agg[i].date;
        d.adv_21 = trailing_mean(i, [](const DayAgg& a) { return a.volume; });
        d.avg_trade_count_21 = trailing_mean(i, [](const DayAgg& a) { return a.count; });
        d.avg_spread_21 = trailing_mean(i, [](const DayAgg& a) { return a.spread; });
        d.avg_depth_21 = trailing_mean(i, [](const DayAgg& a) { return a.depth; });
        d.vwap_day = agg[i].vwap;
        d.trade_high_day = agg[i].high;
        d.trade_low_day = agg[i].low;
        d.sigma_1 = parkinson_vol(highs, lows, std::min<int>(1, int(highs.size())));
        d.sigma_2 = parkinson_vol(highs, lows, std::min<int>(2, int(highs.size())));
        d.sigma_5 = parkinson_vol(highs, lows, std::min<int>(5, int(highs.size())));
        out.push_back(d);
    }
    return out;
}

std::vector<double> intraday_profile(const SymbolBars& days, int date, int window) {
    std::vector<const BarSeries*> used;
    for (auto it = days.lower_bound(date); it != days.begin() && int(used.size()) < window;) {
        --it;
        used.push_back(&it->second);
    }
    if (used.empty()) {
        auto it = days.find(date);
        if (it == days.end()) throw std::runtime_error("no data for profile date");
        log_debug("profile fallback to same-day volumes for date " + std::to_string(date));
        used.push_back(&it->second);
    }
    std::vector<double> prof(kMinutesPerDay, 0.0);
    for (const BarSeries* s : used)
        for (int t = 0; t < kMinutesPerDay; ++t) {
            double v = s->bars[std::size_t(t)].trade_volume;
            if (!is_missing(v)) prof[std::size_t(t)] += v;
        }
    for (auto& v : prof) v /= double(used.size());
    return prof;
}

CalibSeries build_calibration_series(const SymbolBars& days, int max_lag) {
    CalibSeries out;
    bool first = true;
    for (const auto& [date, series] : days) {
        if (series.status == SeriesStatus::dropped) continue;
        const BarSeries s =
            series.status == SeriesStatus::clean ? series : clean_bars(series);
        if (!first)
            for (int k = 0; k < max_lag; ++k) {  // session-boundary spacer
                out.returns.push_back(kMissing);
                out.participation.push_back(0.0);
            }
        first = false;
        for (int t = 0; t < kMinutesPerDay; ++t) {
            const auto& b = s.bars[std::size_t(t)];
            double ret = kMissing;
            if (t > 0 && !s.excluded_for_returns[std::size_t(t)]) {
                double m0 = s.bars[std::size_t(t - 1)].mid_price, m1 = b.mid_price;
                if (!is_missing(m0) && !is_missing(m1) && m0 > 0) ret = m1 / m0 - 1.0;
            }
            out.returns.push_back(ret);
            out.participation.push_back(is_missing(b.trade_imbalance) ? 0.0
                                                                      : b.trade_imbalance);
        }
    }
    return out;
}

void write_market_data_csv(const MarketData& data, const std::string& root) {
    fs::create_directories(fs::path(root) / "bars");
    fs::create_directories(fs::path(root) / "daily");
    for (const auto& [sym, days] : data.bars) {
        fs::create_directories(fs::path(root) / "bars" / sym);
        for (const auto& [date, series] : days) {
            CsvWriter w((fs::path(root) / "bars" / sym / (std::to_string(date) + ".csv")).string());
            w.header(kMinuteCols);
            for (const auto& b : series.bars) {
                w.field(b.time);
                w.field(b.trade_count);
                w.field(b.trade_volume);
                w.field(b.hid_vol);
                w.field(b.unsided_vol);
                w.field(b.sell_vol);
                w.field(b.buy_vol);
                w.field(b.bid_price);
                w.field(b.ask_price);
                w.field(b.bid_size);
                w.field(b.ask_size);
                w.field(b.trade_last);
                w.field(b.trade_high);
                w.field(b.trade_low);
                w.field(b.vwap);
                w.end_row();
            }
        }
    }
    for (const auto& [sym, rows] : data.daily) {
        CsvWriter w((fs::path(root) / "daily" / (sym + ".csv")).string());
        w.header({"symbol", "date", "adv_21", "avg_trade_count_21", "avg_spread_21",
                  "avg_depth_21", "vwap", "daily_volatility", "daily_vol_lag1",
                  "daily_vol_5d", "trade_high", "trade_low"});
        for (const auto& d : rows) {
            w.field(d.symbol);
            w.field(d.date);
            w.field(d.adv_21);
            w.field(d.avg_trade_count_21);
            w.field(d.avg_spread_21);
            w.field(d.avg_depth_21);
            w.field(d.vwap_day);
            w.field(d.sigma_1);
            w.field(d.sigma_2);
            w.field(d.sigma_5);
            w.field(d.trade_high_day);
            w.field(d.trade_low_day);
            w.end_row();
        }
    }
}

MarketData load_market_data(const std::string& root, LoadReport& report, int workers,
                            double missing_ceiling, double outlier_threshold) {
    MarketData md;
    md.bars = load_minute_bars(root, report, workers);
    std::vector<std::string> syms;
    for (auto& [sym, _] : md.bars) syms.push_back(sym);
    parallel_for(syms.size(), workers, [&](std::size_t i) {
        clean_symbol(md.bars[syms[i]], missing_ceiling, outlier_threshold);
    });
    for (auto& [sym, days] : md.bars)
        md.daily[sym] = compute_daily_stats(sym, days);
    return md;
}

}  // namespace geo
