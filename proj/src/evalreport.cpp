#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "geo/csvio.hpp"
#include "geo/evalreport.hpp"

namespace geo {

using nlohmann::json;

MetricRow compute_metrics(const EpisodeResult& result, const Order& order,
                          const MarketData& data, RewardWeights weights) {
    MetricRow m;
    m.order_id = result.order_id;
    if (!result.ok || result.steps.empty()) {
        m.pathological = true;
        return m;
    }
    const BarSeries* series = data.find_series(order.symbol, order.date);
    if (!series) throw std::runtime_error("no bars for metric computation: " + order.symbol);
    const double p0 = series->bars[std::size_t(order.start_minute)].mid_price;
    const int H = order.horizon;

    double fill_pv = 0, executed = 0;
    int last_trade_t = -1;
    double sum_carr = 0, sum_cvwap = 0, sum_delta = 0, sum_zeta = 0;
    std::vector<double> actions;
    actions.reserve(result.steps.size());
    int n_high_fav = 0, n_low_unfav = 0, n_traded = 0;

    // running market vwap, inclusive of the current minute
    double mkt_pv = 0, mkt_v = 0;
    std::size_t step_at = 0;
    for (int t = 0; t < H; ++t) {
        const MinuteBar& bar = series->bars[std::size_t(order.start_minute + t)];
        if (bar.has_trades() && !is_missing(bar.vwap)) {
            mkt_pv += bar.vwap * bar.trade_volume;
            mkt_v += bar.trade_volume;
        }
        if (step_at >= result.steps.size() || result.steps[step_at].t != t) continue;
        const StepRecord& s = result.steps[step_at++];
        actions.push_back(s.action);
        if (s.q > 0) {
            executed += s.q;
            fill_pv += s.p_fill * s.q;
            last_trade_t = t;
            n_traded += 1;
        }
        sum_carr += s.c_arrival;
        sum_cvwap += s.c_vwap;
        sum_delta += s.delta;
        sum_zeta += s.zeta;
        if (!is_missing(s.rho_target) && mkt_v > 0) {
            double p_stock = (bar.has_trades() && !is_missing(bar.vwap)) ? bar.vwap
                                                                         : bar.mid_price;
            if (!is_missing(p_stock)) {
                double edge = double(order.side) * (p_stock - mkt_pv / mkt_v);
                if (s.q > s.rho_target * s.market_volume && edge < 0) n_high_fav += 1;
                if (s.q < s.rho_target * s.market_volume && edge > 0) n_low_unfav += 1;
            }
        }
    }

    if (executed <= 0) {
        m.pathological = true;
        return m;
    }
    m.notional = fill_pv;
    m.arrival_slippage_bps = 1e4 * double(order.side) * (fill_pv / order.q0 - p0) / p0;
    if (mkt_v > 0) {
        double mkt_vwap = mkt_pv / mkt_v;
        m.market_vwap_vs_arrival_bps = 1e4 * (mkt_vwap - p0) / p0;
        m.vwap_slippage = double(order.side) * (fill_pv / order.q0 - mkt_vwap);
    }
    m.completion_rate = executed / order.q0;
    m.horizon_usage = last_trade_t >= 0 ? double(last_trade_t) / double(H) : 0.0;
    m.no_trade_pct = double(H - n_traded) / double(H);
    m.high_rate_favourable_pct = double(n_high_fav) / double(H);
    m.low_rate_unfavourable_pct = double(n_low_unfav) / double(H);

    if (!actions.empty()) {
        double am = mean_of(actions);
        double v = 0;
        for (double a : actions) v += (a - am) * (a - am);
        m.action_variability = v / double(actions.size());
        m.mean_action = am;
    }

    // side-signed mid drift over the window, last valid mid vs arrival
    double mid_last = p0;
    for (int t = H - 1; t >= 0; --t) {
        const MinuteBar& bar = series->bars[std::size_t(order.start_minute + t)];
        if (!is_missing(bar.mid_price)) {
            mid_last = bar.mid_price;
            break;
        }
    }
    m.return_drift_bps = 1e4 * double(order.side) * (mid_last - p0) / p0;

    m.cost_arrival_bps = 1e4 * weights.arrival * sum_carr / p0;
    m.cost_vwap_bps = 1e4 * weights.vwap * sum_cvwap / p0;
    m.cost_schedule_bps = 1e4 * weights.schedule * sum_delta;
    m.cost_inventory_bps = 1e4 * weights.inventory * sum_zeta;
    m.total_cost_bps = m.cost_arrival_bps + m.cost_vwap_bps + m.cost_schedule_bps +
                       m.cost_inventory_bps;
    m.strategy = "";
    return m;
}

double percentile_nearest_rank(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("empty sample");
    long n = long(sorted.size());
    long rank = long(std::ceil(p * double(n) - 1e-9));
    rank = std::clamp(rank, 1L, n);
    return sorted[std::size_t(rank - 1)];
}

std::vector<double> winsorize(std::vector<double> values, double p_lo, double p_hi) {
    if (values.size() < 2) return values;
    std::vector<double> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    double lo = percentile_nearest_rank(sorted, p_lo);
    double hi = percentile_nearest_rank(sorted, p_hi);
    for (double& v : values) v = std::clamp(v, lo, hi);
    return values;
}

namespace {

struct MeanSe {
    double mean = kMissing, se = kMissing;
};

MeanSe winsorized_mean_se(std::vector<double> vals, double lo, double hi) {
    // NaN entries (undefined metric for a row) are dropped
    vals.erase(std::remove_if(vals.begin(), vals.end(),
                              [](double v) { return is_missing(v); }),
               vals.end());
    if (vals.empty()) return {};
    std::vector<double> w = winsorize(std::move(vals), lo, hi);
    MeanSe out;
    out.mean = mean_of(w);
    out.se = w.size() > 1 ? stddev_of(w) / std::sqrt(double(w.size())) : 0.0;
    return out;
}

}  // namespace

std::vector<StrategySummary> aggregate_summary(const std::vector<MetricRow>& rows,
                                               double winsor_lo, double winsor_hi) {
    std::map<std::string, std::vector<const MetricRow*>> groups;
    std::map<std::string, long> patho;
    for (const MetricRow& r : rows) {
        if (r.pathological) {
            patho[r.strategy] += 1;
            continue;
        }
        groups[r.strategy].push_back(&r);
    }
    std::vector<StrategySummary> out;
    for (const auto& [name, g] : groups) {
        if (g.empty()) {
            log_warn("strategy group empty after exclusions: " + name);
            continue;
        }
        StrategySummary s;
        s.strategy = name;
        s.n = long(g.size());
        s.n_pathological = patho.count(name) ? patho[name] : 0;
        auto col = [&](auto getter) {
            std::vector<double> v;
            v.reserve(g.size());
            for (const MetricRow* r : g) v.push_back(getter(*r));
            return v;
        };
        for (const MetricRow* r : g) s.notional_sum += r->notional;

        auto ms = winsorized_mean_se(col([](const MetricRow& r) { return r.arrival_slippage_bps; }),
                                     winsor_lo, winsor_hi);
        s.arrival_slippage_bps_mean = ms.mean;
        s.arrival_slippage_bps_se = ms.se;
        ms = winsorized_mean_se(col([](const MetricRow& r) { return r.return_drift_bps; }),
                                winsor_lo, winsor_hi);
        s.return_drift_bps_mean = ms.mean;
        s.return_drift_bps_se = ms.se;
        ms = winsorized_mean_se(col([](const MetricRow& r) { return r.total_cost_bps; }),
                                winsor_lo, winsor_hi);
        s.total_cost_bps_mean = ms.mean;
        s.total_cost_bps_se = ms.se;
        ms = winsorized_mean_se(col([](const MetricRow& r) { return r.vwap_slippage; }),
                                winsor_lo, winsor_hi);
        s.vwap_slippage_mean = ms.mean;
        s.vwap_slippage_se = ms.se;
        ms = winsorized_mean_se(
            col([](const MetricRow& r) { return r.market_vwap_vs_arrival_bps; }), winsor_lo,
            winsor_hi);
        s.market_vwap_vs_arrival_bps_mean = ms.mean;
        s.market_vwap_vs_arrival_bps_se = ms.se;

        s.completion_rate_mean =
            winsorized_mean_se(col([](const MetricRow& r) { return r.completion_rate; }),
                               winsor_lo, winsor_hi)
                .mean;
        s.duration_pct_mean =
            100.0 * winsorized_mean_se(col([](const MetricRow& r) { return r.horizon_usage; }),
                                       winsor_lo, winsor_hi)
                        .mean;
        s.action_pct_mean =
            100.0 * winsorized_mean_se(col([](const MetricRow& r) { return r.mean_action; }),
                                       winsor_lo, winsor_hi)
                        .mean;
        s.action_variability_mean =
            winsorized_mean_se(col([](const MetricRow& r) { return r.action_variability; }),
                               winsor_lo, winsor_hi)
                .mean;
        s.no_trade_pct_mean =
            winsorized_mean_se(col([](const MetricRow& r) { return r.no_trade_pct; }),
                               winsor_lo, winsor_hi)
                .mean;
        s.high_rate_favourable_pct_mean = winsorized_mean_se(
                                              col([](const MetricRow& r) {
                                                  return r.high_rate_favourable_pct;
                                              }),
                                              winsor_lo, winsor_hi)
                                              .mean;
        s.low_rate_unfavourable_pct_mean = winsorized_mean_se(
                                               col([](const MetricRow& r) {
                                                   return r.low_rate_unfavourable_pct;
                                               }),
                                               winsor_lo, winsor_hi)
                                               .mean;
        s.cost_arrival_bps_mean =
            winsorized_mean_se(col([](const MetricRow& r) { return r.cost_arrival_bps; }),
                               winsor_lo, winsor_hi)
                .mean;
        s.cost_vwap_bps_mean =
            winsorized_mean_se(col([](const MetricRow& r) { return r.cost_vwap_bps; }),
                               winsor_lo, winsor_hi)
                .mean;
        s.cost_schedule_bps_mean =
            winsorized_mean_se(col([](const MetricRow& r) { return r.cost_schedule_bps; }),
                               winsor_lo, winsor_hi)
                .mean;
        s.cost_inventory_bps_mean =
            winsorized_mean_se(col([](const MetricRow& r) { return r.cost_inventory_bps; }),
                               winsor_lo, winsor_hi)
                .mean;
        out.push_back(std::move(s));
    }
    return out;
}

void write_metric_rows_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    CsvWriter w(path);
    w.header({"order_id", "strategy", "pathological", "arrival_slippage_bps",
              "market_vwap_vs_arrival_bps", "vwap_slippage", "completion_rate",
              "horizon_usage", "action_variability", "no_trade_pct",
              "high_rate_favourable_pct", "low_rate_unfavourable_pct", "total_cost_bps",
              "return_drift_bps", "notional", "mean_action", "cost_arrival_bps",
              "cost_vwap_bps", "cost_schedule_bps", "cost_inventory_bps"});
    for (const MetricRow& r : rows) {
        w.field(r.order_id);
        w.field(r.strategy);
        w.field(r.pathological ? 1 : 0);
        w.field(r.arrival_slippage_bps);
        w.field(r.market_vwap_vs_arrival_bps);
        w.field(r.vwap_slippage);
        w.field(r.completion_rate);
        w.field(r.horizon_usage);
        w.field(r.action_variability);
        w.field(r.no_trade_pct);
        w.field(r.high_rate_favourable_pct);
        w.field(r.low_rate_unfavourable_pct);
        w.field(r.total_cost_bps);
        w.field(r.return_drift_bps);
        w.field(r.notional);
        w.field(r.mean_action);
        w.field(r.cost_arrival_bps);
        w.field(r.cost_vwap_bps);
        w.field(r.cost_schedule_bps);
        w.field(r.cost_inventory_bps);
        w.end_row();
    }
}

namespace {

const std::vector<std::string> kSummaryCols = {
    "strategy", "n", "n_pathological", "notional_sum", "arrival_slippage_bps_mean",
    "arrival_slippage_bps_se", "return_drift_bps_mean", "return_drift_bps_se",
    "total_cost_bps_mean", "total_cost_bps_se", "vwap_slippage_mean", "vwap_slippage_se",
    "market_vwap_vs_arrival_bps_mean", "market_vwap_vs_arrival_bps_se",
    "completion_rate_mean", "duration_pct_mean", "action_pct_mean",
    "action_variability_mean", "no_trade_pct_mean", "high_rate_favourable_pct_mean",
    "low_rate_unfavourable_pct_mean", "cost_arrival_bps_mean", "cost_vwap_bps_mean",
    "cost_schedule_bps_mean", "cost_inventory_bps_mean"};

json summary_to_json(const StrategySummary& s) {
    json j;
    j["strategy"] = s.strategy;
    j["n"] = s.n;
    j["n_pathological"] = s.n_pathological;
    j["notional_sum"] = s.notional_sum;
    auto put = [&](const char* k, double v) {
        if (is_missing(v))
            j[k] = nullptr;
        else
            j[k] = v;
    };
    put("arrival_slippage_bps_mean", s.arrival_slippage_bps_mean);
    put("arrival_slippage_bps_se", s.arrival_slippage_bps_se);
    put("return_drift_bps_mean", s.return_drift_bps_mean);
    put("return_drift_bps_se", s.return_drift_bps_se);
    put("total_cost_bps_mean", s.total_cost_bps_mean);
    put("total_cost_bps_se", s.total_cost_bps_se);
    put("vwap_slippage_mean", s.vwap_slippage_mean);
    put("vwap_slippage_se", s.vwap_slippage_se);
    put("market_vwap_vs_arrival_bps_mean", s.market_vwap_vs_arrival_bps_mean);
    put("market_vwap_vs_arrival_bps_se", s.market_vwap_vs_arrival_bps_se);
    put("completion_rate_mean", s.completion_rate_mean);
    put("duration_pct_mean", s.duration_pct_mean);
    put("action_pct_mean", s.action_pct_mean);
    put("action_variability_mean", s.action_variability_mean);
    put("no_trade_pct_mean", s.no_trade_pct_mean);
    put("high_rate_favourable_pct_mean", s.high_rate_favourable_pct_mean);
    put("low_rate_unfavourable_pct_mean", s.low_rate_unfavourable_pct_mean);
    put("cost_arrival_bps_mean", s.cost_arrival_bps_mean);
    put("cost_vwap_bps_mean", s.cost_vwap_bps_mean);
    put("cost_schedule_bps_mean", s.cost_schedule_bps_mean);
    put("cost_inventory_bps_mean", s.cost_inventory_bps_mean);
    return j;
}

}  // namespace

void write_summary_csv(const std::string& path, const std::vector<StrategySummary>& sums) {
    CsvWriter w(path);
    w.header(kSummaryCols);
    for (const StrategySummary& s : sums) {
        w.field(s.strategy);
        w.field(s.n);
        w.field(s.n_pathological);
        w.field(s.notional_sum);
        w.field(s.arrival_slippage_bps_mean);
        w.field(s.arrival_slippage_bps_se);
        w.field(s.return_drift_bps_mean);
        w.field(s.return_drift_bps_se);
        w.field(s.total_cost_bps_mean);
        w.field(s.total_cost_bps_se);
        w.field(s.vwap_slippage_mean);
        w.field(s.vwap_slippage_se);
        w.field(s.market_vwap_vs_arrival_bps_mean);
        w.field(s.market_vwap_vs_arrival_bps_se);
        w.field(s.completion_rate_mean);
        w.field(s.duration_pct_mean);
        w.field(s.action_pct_mean);
        w.field(s.action_variability_mean);
        w.field(s.no_trade_pct_mean);
        w.field(s.high_rate_favourable_pct_mean);
        w.field(s.low_rate_unfavourable_pct_mean);
        w.field(s.cost_arrival_bps_mean);
        w.field(s.cost_vwap_bps_mean);
        w.field(s.cost_schedule_bps_mean);
        w.field(s.cost_inventory_bps_mean);
        w.end_row();
    }
}

void write_summary_json(const std::string& path, const std::vector<StrategySummary>& sums) {
    json j = json::array();
    for (const StrategySummary& s : sums) j.push_back(summary_to_json(s));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << j.dump(2) << "\n";
}

void write_action_horizon_csv(const std::string& path, const std::vector<MetricRow>& rows,
                              const std::vector<const EpisodeResult*>& results,
                              const std::vector<const Order*>& orders, int buckets) {
    if (rows.size() != results.size() || rows.size() != orders.size())
        throw std::invalid_argument("rows/results/orders must align");
    // key: strategy, drift class (0 favourable/flat, 1 adverse), bucket
    std::map<std::string, std::vector<std::pair<double, long>>> acc;
    auto slot = [&](const std::string& strat, const char* drift) -> std::vector<std::pair<double, long>>& {
        auto& v = acc[strat + "," + drift];
        if (v.empty()) v.assign(std::size_t(buckets), {0.0, 0});
        return v;
    };
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].pathological) continue;
        const EpisodeResult& r = *results[k];
        const Order& o = *orders[k];
        const char* drift = rows[k].return_drift_bps > 0 ? "adverse" : "favourable";
        for (const StepRecord& s : r.steps) {
            int b = std::min(buckets - 1, int(double(s.t) / double(o.horizon) * buckets));
            auto& va = slot(rows[k].strategy, "all");
            va[std::size_t(b)].first += s.action;
            va[std::size_t(b)].second += 1;
            auto& vd = slot(rows[k].strategy, drift);
            vd[std::size_t(b)].first += s.action;
            vd[std::size_t(b)].second += 1;
        }
    }
    CsvWriter w(path);
    w.header({"strategy", "drift", "bucket", "mean_action", "n"});
    for (const auto& [key, v] : acc) {
        auto comma = key.find(',');
        std::string strat = key.substr(0, comma), drift = key.substr(comma + 1);
        for (int b = 0; b < buckets; ++b) {
            const auto& [sum, n] = v[std::size_t(b)];
            if (n == 0) continue;
            w.field(strat);
            w.field(drift);
            w.field(b);
            w.field(sum / double(n));
            w.field(n);
            w.end_row();
        }
    }
}

void write_cost_decomposition_csv(const std::string& path,
                                  const std::vector<StrategySummary>& sums) {
    CsvWriter w(path);
    w.header({"strategy", "component", "mean_bps"});
    for (const StrategySummary& s : sums) {
        const std::pair<const char*, double> comps[] = {
            {"arrival", s.cost_arrival_bps_mean},
            {"vwap", s.cost_vwap_bps_mean},
            {"schedule", s.cost_schedule_bps_mean},
            {"inventory", s.cost_inventory_bps_mean}};
        for (const auto& [name, v] : comps) {
            w.field(s.strategy);
            w.field(std::string(name));
            w.field(v);
            w.end_row();
        }
    }
}

void write_anatomy_csv(const std::string& path, const EpisodeResult& result,
                       const Order& order) {
    CsvWriter w(path);
    w.header({"order_id", "symbol", "date", "t", "action", "q", "p_fill", "impact_bps",
              "c_arrival", "c_vwap", "delta", "zeta", "reward", "rho_target",
              "market_volume"});
    for (const StepRecord& s : result.steps) {
        w.field(result.order_id);
        w.field(order.symbol);
        w.field(order.date);
        w.field(s.t);
        w.field(s.action);
        w.field(s.q);
        w.field(s.p_fill);
        w.field(s.impact_bps);
        w.field(s.c_arrival);
        w.field(s.c_vwap);
        w.field(s.delta);
        w.field(s.zeta);
        w.field(s.reward);
        w.field(s.rho_target);
        w.field(s.market_volume);
        w.end_row();
    }
}

namespace {

json dnull(double v) { return is_missing(v) ? json(nullptr) : json(v); }
double djson(const json& j) { return j.is_null() ? kMissing : j.get<double>(); }

json order_to_json(const Order& o) {
    return json{{"id", o.id},
                {"symbol", o.symbol},
                {"date", o.date},
                {"start_minute", o.start_minute},
                {"horizon", o.horizon},
                {"q0", o.q0},
                {"side", o.side},
                {"ehv_pct", o.ehv_pct},
                {"adv_pct", o.adv_pct},
                {"g0", o.impact.g0},
                {"tau", o.impact.tau},
                {"gamma", o.impact.gamma},
                {"form", form_name(o.impact.form)}};
}

Order order_from_json(const json& j) {
    Order o;
    o.id = j.at("id").get<long>();
    o.symbol = j.at("symbol").get<std::string>();
    o.date = j.at("date").get<int>();
    o.start_minute = j.at("start_minute").get<int>();
    o.horizon = j.at("horizon").get<int>();
    o.q0 = j.at("q0").get<double>();
    o.side = j.at("side").get<int>();
    o.ehv_pct = j.at("ehv_pct").get<double>();
    o.adv_pct = j.at("adv_pct").get<double>();
    o.impact.g0 = j.at("g0").get<double>();
    o.impact.tau = j.at("tau").get<double>();
    o.impact.gamma = j.at("gamma").get<double>();
    o.impact.form = form_from_name(j.at("form").get<std::string>());
    return o;
}

}  // namespace

void save_results_jsonl(const std::string& path, const std::string& strategy,
                        const std::vector<Order>& orders,
                        const std::vector<EpisodeResult>& results) {
    if (orders.size() != results.size())
        throw std::invalid_argument("orders/results must align");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + path);
    for (std::size_t k = 0; k < results.size(); ++k) {
        const EpisodeResult& r = results[k];
        json j;
        j["strategy"] = strategy;
        j["order"] = order_to_json(orders[k]);
        j["ok"] = r.ok;
        if (!r.ok) j["error"] = r.error;
        j["summary"] = {{"arrival_slippage_bps", dnull(r.summary.arrival_slippage_bps)},
                        {"vwap_slippage", dnull(r.summary.vwap_slippage)},
                        {"total_cost_bps", r.summary.total_cost_bps},
                        {"completion_rate", r.summary.completion_rate},
                        {"duration_pct", r.summary.duration_pct}};
        json steps = json::array();
        for (const StepRecord& s : r.steps)
            steps.push_back(json::array({s.t, s.action, s.q, dnull(s.p_fill), s.impact_bps,
                                         s.c_arrival, s.c_vwap, s.delta, s.zeta, s.reward,
                                         dnull(s.rho_target), s.market_volume}));
        j["steps"] = std::move(steps);
        out << j.dump() << "\n";
    }
}

LoadedRun load_results_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read: " + path);
    LoadedRun run;
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, true);
        EpisodeResult r;
        run.strategies.push_back(j.at("strategy").get<std::string>());
        Order o = order_from_json(j.at("order"));
        r.order_id = o.id;
        r.ok = j.at("ok").get<bool>();
        if (!r.ok) r.error = j.value("error", "");
        const json& s = j.at("summary");
        r.summary.arrival_slippage_bps = djson(s.at("arrival_slippage_bps"));
        r.summary.vwap_slippage = djson(s.at("vwap_slippage"));
        r.summary.total_cost_bps = s.at("total_cost_bps").get<double>();
        r.summary.completion_rate = s.at("completion_rate").get<double>();
        r.summary.duration_pct = s.at("duration_pct").get<double>();
        for (const json& st : j.at("steps")) {
            if (st.size() != 12)
                throw std::runtime_error(path + ":" + std::to_string(ln) +
                                         ": bad step record");
            StepRecord rec;
            rec.t = st[0].get<int>();
            rec.action = st[1].get<double>();
            rec.q = st[2].get<double>();
            rec.p_fill = djson(st[3]);
            rec.impact_bps = st[4].get<double>();
            rec.c_arrival = st[5].get<double>();
            rec.c_vwap = st[6].get<double>();
            rec.delta = st[7].get<double>();
            rec.zeta = st[8].get<double>();
            rec.reward = st[9].get<double>();
            rec.rho_target = djson(st[10]);
            rec.market_volume = st[11].get<double>();
            r.steps.push_back(rec);
        }
        run.orders.push_back(std::move(o));
        run.results.push_back(std::move(r));
    }
    return run;
}

}  // namespace geo
