#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixtures.hpp"
#include "geo/csvio.hpp"
#include "geo/evalreport.hpp"
#include "geo/runner.hpp"
#include "geo/strategies.hpp"

using namespace geo;

namespace {

StepRecord step(int t, double action, double q, double p_fill, double c_arr,
                double c_vwap, double delta, double zeta, double rho, double vol) {
    StepRecord s;
    s.t = t;
    s.action = action;
    s.q = q;
    s.p_fill = p_fill;
    s.c_arrival = c_arr;
    s.c_vwap = c_vwap;
    s.delta = delta;
    s.zeta = zeta;
    s.rho_target = rho;
    s.market_volume = vol;
    return s;
}

MetricRow cost_row(const std::string& strategy, double cost, bool patho = false) {
    MetricRow r;
    r.strategy = strategy;
    r.pathological = patho;
    r.total_cost_bps = cost;
    r.notional = 100.0;
    r.completion_rate = 1.0;
    return r;
}

}  // namespace

TEST_CASE("nearest-rank percentiles pick the ceil-rank element") {
    std::vector<double> s{10, 20, 30, 40, 50};
    CHECK(percentile_nearest_rank(s, 0.5) == 30.0);
    CHECK(percentile_nearest_rank(s, 0.2) == 10.0);  // rank ceil(1.0) = 1
    CHECK(percentile_nearest_rank(s, 0.4) == 20.0);
    CHECK(percentile_nearest_rank(s, 0.41) == 30.0);
    CHECK(percentile_nearest_rank(s, 0.01) == 10.0);
    CHECK(percentile_nearest_rank(s, 0.99) == 50.0);
    CHECK(percentile_nearest_rank(s, 1.0) == 50.0);
    CHECK(percentile_nearest_rank(s, 0.0) == 10.0);  // rank clamps to 1
    CHECK(percentile_nearest_rank({7.0}, 0.5) == 7.0);
    CHECK_THROWS_AS(percentile_nearest_rank({}, 0.5), std::invalid_argument);
}

TEST_CASE("winsorizing clamps tails in place and is idempotent") {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(double(i));

    // at the default (1%, 99%) the nearest-rank bounds are 1 and 99: the top
    // value is clamped, so even this is not a no-op
    std::vector<double> w = winsorize(v, 0.01, 0.99);
    CHECK(w[0] == 1.0);
    CHECK(w[98] == 99.0);
    CHECK(w[99] == 99.0);
    CHECK(winsorize(w, 0.01, 0.99) == w);

    std::vector<double> ten = winsorize(v, 0.10, 0.90);
    for (int i = 0; i < 9; ++i) CHECK(ten[std::size_t(i)] == 10.0);
    CHECK(ten[9] == 10.0);
    CHECK(ten[10] == 11.0);
    CHECK(ten[89] == 90.0);
    for (int i = 90; i < 100; ++i) CHECK(ten[std::size_t(i)] == 90.0);
    CHECK(winsorize(ten, 0.10, 0.90) == ten);

    // order of the input is preserved
    std::vector<double> mixed{5.0, 1.0, 100.0, 50.0};
    std::vector<double> mw = winsorize(mixed, 0.25, 0.75);
    CHECK(mw == std::vector<double>{5.0, 1.0, 50.0, 50.0});

    CHECK(winsorize({}, 0.01, 0.99).empty());
    CHECK(winsorize({42.0}, 0.01, 0.99) == std::vector<double>{42.0});
}

TEST_CASE("hand-built episode reproduces every metric") {
    MarketData data = testfix::make_world("MM", {20240102}, 100.0, 1000.0);
    Order order = testfix::make_order("MM", 20240102, 60, 4, 1000.0, +1);

    EpisodeResult r;
    r.order_id = order.id;
    r.ok = true;
    r.steps = {
        step(0, 0.0, 250.0, 100.1, 0.025, 0.01, 0.0001, 1e-4, 0.1, 1000.0),
        step(1, -1.0, 0.0, kMissing, 0.0, 0.0, 0.0002, 5e-5, 0.1, 1000.0),
        step(2, 1.0, 500.0, 100.2, 0.05, 0.01, 0.0, 2.5e-5, 0.1, 1000.0),
        step(3, 0.0, 250.0, 99.9, -0.025, 0.0, 0.0001, 0.0, 0.1, 1000.0),
    };

    RewardWeights w;  // 1, 1, 1, 0.1
    MetricRow m = compute_metrics(r, order, data, w);

    CHECK(!m.pathological);
    CHECK(m.order_id == order.id);
    // fill value 250*100.1 + 500*100.2 + 250*99.9 = 100100, avg fill 100.1
    CHECK(m.notional == doctest::Approx(100100.0).epsilon(1e-12));
    CHECK(m.arrival_slippage_bps == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(m.market_vwap_vs_arrival_bps ==
          doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
    CHECK(m.vwap_slippage == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(m.completion_rate == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.horizon_usage == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(m.no_trade_pct == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(m.mean_action == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    CHECK(m.action_variability == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.return_drift_bps == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
    // flat prices: the stock never trades away from the running market vwap
    CHECK(m.high_rate_favourable_pct == 0.0);
    CHECK(m.low_rate_unfavourable_pct == 0.0);

    CHECK(m.cost_arrival_bps == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(m.cost_vwap_bps == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(m.cost_schedule_bps == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(m.cost_inventory_bps == doctest::Approx(0.175).epsilon(1e-9));
    CHECK(m.total_cost_bps == doctest::Approx(11.175).epsilon(1e-9));
    CHECK(m.total_cost_bps == m.cost_arrival_bps + m.cost_vwap_bps +
                                  m.cost_schedule_bps + m.cost_inventory_bps);
}

TEST_CASE("rate counters follow the running-vwap edge on a drifting tape") {
    // 10 bps per minute drift: the stock trades above its running market vwap
    MarketData data = testfix::make_world("DD", {20240102}, 100.0, 1000.0, 0.02, 0.001);
    const BarSeries* series = data.find_series("DD", 20240102);
    REQUIRE(series);
    double m60 = series->bars[60].mid_price;
    double m62 = series->bars[62].mid_price;

    auto steps3 = [&]() {
        return std::vector<StepRecord>{
            step(0, 0.0, 100.0, series->bars[60].vwap, 0, 0, 0, 0, 0.1, 1000.0),
            step(1, -0.5, 50.0, series->bars[61].vwap, 0, 0, 0, 0, 0.1, 1000.0),
            step(2, 1.0, 200.0, series->bars[62].vwap, 0, 0, 0, 0, 0.1, 1000.0),
        };
    };

    Order buy = testfix::make_order("DD", 20240102, 60, 3, 350.0, +1);
    EpisodeResult rb;
    rb.order_id = buy.id;
    rb.ok = true;
    rb.steps = steps3();
    MetricRow mb = compute_metrics(rb, buy, data, RewardWeights{});
    // buy: a positive edge makes under-trading unfavourable at t=1
    CHECK(mb.low_rate_unfavourable_pct == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(mb.high_rate_favourable_pct == 0.0);
    CHECK(mb.return_drift_bps ==
          doctest::Approx(1e4 * (m62 - m60) / m60).epsilon(1e-9));

    Order sell = buy;
    sell.side = -1;
    EpisodeResult rs = rb;
    MetricRow ms = compute_metrics(rs, sell, data, RewardWeights{});
    // sell: the same tape flips the edge, so over-trading at t=2 is favourable
    CHECK(ms.high_rate_favourable_pct == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(ms.low_rate_unfavourable_pct == 0.0);
    CHECK(ms.return_drift_bps ==
          doctest::Approx(-1e4 * (m62 - m60) / m60).epsilon(1e-9));
}

TEST_CASE("failed or zero-fill episodes are pathological") {
    MarketData data = testfix::make_world("MM", {20240102}, 100.0, 1000.0);
    Order order = testfix::make_order("MM", 20240102, 60, 4, 1000.0, +1);

    EpisodeResult failed;
    failed.order_id = 9;
    failed.ok = false;
    failed.error = "boom";
    CHECK(compute_metrics(failed, order, data, RewardWeights{}).pathological);

    EpisodeResult empty;
    empty.ok = true;
    CHECK(compute_metrics(empty, order, data, RewardWeights{}).pathological);

    EpisodeResult zero;
    zero.ok = true;
    zero.steps = {step(0, -1.0, 0.0, kMissing, 0, 0, 0, 0, 0.1, 1000.0)};
    CHECK(compute_metrics(zero, order, data, RewardWeights{}).pathological);
}

TEST_CASE("metrics recomputed from steps match the engine summary") {
    MarketData data =
        testfix::make_world("EE", {20240102, 20240103}, 100.0, 2000.0, 0.02, 0.0005);
    Order order =
        testfix::make_order("EE", 20240103, 45, 24, 6000.0, +1, 0.003, 6.0);
    RewardWeights w{1.0, 0.8, 1.2, 0.1};

    auto policy = make_baseline("twap");
    EpisodeResult r = run_one(data, w, order, *policy, 42);
    REQUIRE(r.ok);

    MetricRow m = compute_metrics(r, order, data, w);
    CHECK(!m.pathological);
    CHECK(m.arrival_slippage_bps ==
          doctest::Approx(r.summary.arrival_slippage_bps).epsilon(1e-9));
    CHECK(m.vwap_slippage == doctest::Approx(r.summary.vwap_slippage).epsilon(1e-9));
    CHECK(m.completion_rate ==
          doctest::Approx(r.summary.completion_rate).epsilon(1e-12));
    CHECK(100.0 * m.horizon_usage ==
          doctest::Approx(r.summary.duration_pct).epsilon(1e-12));
    CHECK(m.total_cost_bps ==
          doctest::Approx(r.summary.total_cost_bps).epsilon(1e-9).scale(1.0));
    CHECK(m.total_cost_bps == m.cost_arrival_bps + m.cost_vwap_bps +
                                  m.cost_schedule_bps + m.cost_inventory_bps);
    CHECK(m.notional > 0.0);

    // the same cross-check under a sell on the opposite drift
    MarketData down =
        testfix::make_world("EE", {20240102, 20240103}, 100.0, 2000.0, 0.02, -0.0005);
    Order sell = order;
    sell.side = -1;
    EpisodeResult r2 = run_one(down, w, sell, *policy, 42);
    REQUIRE(r2.ok);
    MetricRow m2 = compute_metrics(r2, sell, down, w);
    CHECK(m2.arrival_slippage_bps ==
          doctest::Approx(r2.summary.arrival_slippage_bps).epsilon(1e-9));
    CHECK(m2.total_cost_bps ==
          doctest::Approx(r2.summary.total_cost_bps).epsilon(1e-9).scale(1.0));
}

TEST_CASE("aggregation excludes pathological rows and reports winsorized means") {
    std::vector<MetricRow> rows;
    rows.push_back(cost_row("alpha", 10.0));
    rows.push_back(cost_row("alpha", 20.0));
    rows.push_back(cost_row("alpha", 30.0));
    rows.push_back(cost_row("alpha", 999.0, true));  // excluded
    rows.push_back(cost_row("beta", 7.0));

    std::vector<StrategySummary> sums = aggregate_summary(rows);
    REQUIRE(sums.size() == 2);
    const StrategySummary& a = sums[0];
    CHECK(a.strategy == "alpha");
    CHECK(a.n == 3);
    CHECK(a.n_pathological == 1);
    CHECK(a.notional_sum == doctest::Approx(300.0).epsilon(1e-12));
    CHECK(a.total_cost_bps_mean == doctest::Approx(20.0).epsilon(1e-12));
    // sample std 10 over n=3
    CHECK(a.total_cost_bps_se ==
          doctest::Approx(10.0 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(a.completion_rate_mean == doctest::Approx(1.0).epsilon(1e-12));
    // metrics that were missing on every row stay missing
    CHECK(is_missing(a.arrival_slippage_bps_mean));
    CHECK(is_missing(a.arrival_slippage_bps_se));

    const StrategySummary& b = sums[1];
    CHECK(b.strategy == "beta");
    CHECK(b.n == 1);
    CHECK(b.total_cost_bps_mean == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(b.total_cost_bps_se == 0.0);  // single row

    // identical rows aggregate with zero standard error
    std::vector<MetricRow> same(5, cost_row("gamma", 12.5));
    std::vector<StrategySummary> gs = aggregate_summary(same);
    REQUIRE(gs.size() == 1);
    CHECK(gs[0].total_cost_bps_mean == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(gs[0].total_cost_bps_se == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));

    // an aggressive winsor pair actually clamps: {1..10} at (0.2, 0.8)
    std::vector<MetricRow> wide;
    for (int i = 1; i <= 10; ++i) wide.push_back(cost_row("delta", double(i)));
    std::vector<StrategySummary> ws = aggregate_summary(wide, 0.2, 0.8);
    // clamped sample: {2,2,3,4,5,6,7,8,8,8} -> wait, bounds are 2 and 8
    // values {1->2, 9->8, 10->8}: mean = (2+2+3+4+5+6+7+8+8+8)/10
    CHECK(ws[0].total_cost_bps_mean == doctest::Approx(5.3).epsilon(1e-12));

    CHECK(aggregate_summary({}).empty());
    std::vector<MetricRow> all_bad{cost_row("omega", 1.0, true)};
    CHECK(aggregate_summary(all_bad).empty());
}

TEST_CASE("results stream round-trips orders, summaries, and step traces") {
    Order o1 = testfix::make_order("MM", 20240102, 60, 4, 1000.0, +1, 0.004, 12.0,
                                   ImpactForm::linear);
    o1.id = 101;
    o1.ehv_pct = 3.25;
    o1.adv_pct = 0.5;
    Order o2 = testfix::make_order("MM", 20240103, 90, 8, 500.0, -1);
    o2.id = 102;

    EpisodeResult r1;
    r1.order_id = 101;
    r1.ok = true;
    r1.summary.arrival_slippage_bps = 3.75;
    r1.summary.vwap_slippage = -0.0125;
    r1.summary.total_cost_bps = 11.175;
    r1.summary.completion_rate = 1.0;
    r1.summary.duration_pct = 75.0;
    r1.steps = {
        step(0, 0.25, 250.0, 100.1, 0.025, 0.01, 1e-4, 1e-4, 0.1, 1000.0),
        step(1, -1.0, 0.0, kMissing, 0.0, 0.0, 2e-4, 5e-5, kMissing, 0.0),
    };
    r1.steps[0].impact_bps = 1.25;
    r1.steps[0].reward = -0.002;

    EpisodeResult r2;
    r2.order_id = 102;
    r2.ok = false;
    r2.error = "no bars for order";

    std::string path = "/tmp/geo_results_roundtrip.jsonl";
    save_results_jsonl(path, "twap", {o1, o2}, {r1, r2});

    LoadedRun run = load_results_jsonl(path);
    REQUIRE(run.orders.size() == 2);
    REQUIRE(run.results.size() == 2);
    CHECK(run.strategies == std::vector<std::string>{"twap", "twap"});

    const Order& l1 = run.orders[0];
    CHECK(l1.id == 101);
    CHECK(l1.symbol == "MM");
    CHECK(l1.date == 20240102);
    CHECK(l1.start_minute == 60);
    CHECK(l1.horizon == 4);
    CHECK(l1.q0 == 1000.0);
    CHECK(l1.side == +1);
    CHECK(l1.ehv_pct == 3.25);
    CHECK(l1.adv_pct == 0.5);
    CHECK(l1.impact.g0 == 0.004);
    CHECK(l1.impact.tau == 12.0);
    CHECK(l1.impact.gamma == 1.0);
    CHECK(l1.impact.form == ImpactForm::linear);
    CHECK(run.orders[1].side == -1);

    const EpisodeResult& k1 = run.results[0];
    CHECK(k1.ok);
    CHECK(k1.order_id == 101);
    CHECK(k1.summary.arrival_slippage_bps == 3.75);
    CHECK(k1.summary.vwap_slippage == -0.0125);
    CHECK(k1.summary.total_cost_bps == 11.175);
    CHECK(k1.summary.duration_pct == 75.0);
    REQUIRE(k1.steps.size() == 2);
    CHECK(k1.steps[0].t == 0);
    CHECK(k1.steps[0].action == 0.25);
    CHECK(k1.steps[0].q == 250.0);
    CHECK(k1.steps[0].p_fill == 100.1);
    CHECK(k1.steps[0].impact_bps == 1.25);
    CHECK(k1.steps[0].reward == -0.002);
    CHECK(k1.steps[0].rho_target == 0.1);
    CHECK(is_missing(k1.steps[1].p_fill));
    CHECK(is_missing(k1.steps[1].rho_target));
    CHECK(k1.steps[1].c_vwap == 0.0);

    const EpisodeResult& k2 = run.results[1];
    CHECK(!k2.ok);
    CHECK(k2.error == "no bars for order");
    CHECK(k2.steps.empty());

    // a second save of the loaded run is byte-identical for the first line
    std::string path2 = "/tmp/geo_results_roundtrip2.jsonl";
    save_results_jsonl(path2, "twap", run.orders, run.results);
    std::ifstream f1(path), f2(path2);
    std::string a, b;
    std::getline(f1, a);
    std::getline(f2, b);
    CHECK(a == b);

    CHECK_THROWS_AS(load_results_jsonl("/tmp/geo_no_such_results.jsonl"),
                    std::runtime_error);
    CHECK_THROWS_AS(save_results_jsonl(path, "x", {o1}, {}), std::invalid_argument);

    // step records must have exactly twelve fields
    std::string bad = "/tmp/geo_results_bad.jsonl";
    {
        std::ofstream out(bad);
        out << R"({"strategy":"x","order":{"id":1,"symbol":"A","date":1,"start_minute":0,)"
            << R"("horizon":1,"q0":1,"side":1,"ehv_pct":1,"adv_pct":1,"g0":0,"tau":1,)"
            << R"("gamma":1,"form":"sqrt"},"ok":true,"summary":{"arrival_slippage_bps":0,)"
            << R"("vwap_slippage":0,"total_cost_bps":0,"completion_rate":1,)"
            << R"("duration_pct":0},"steps":[[0,0,0,null,0,0,0,0,0,0,null]]})"
            << "\n";
    }
    CHECK_THROWS_AS(load_results_jsonl(bad), std::runtime_error);
}

TEST_CASE("report files carry the full schema") {
    MetricRow good = cost_row("alpha", 10.0);
    good.order_id = 7;
    good.arrival_slippage_bps = 1.5;
    MetricRow bad = cost_row("alpha", 0.0, true);
    bad.order_id = 8;
    bad.arrival_slippage_bps = kMissing;
    std::vector<MetricRow> rows{good, bad};

    std::string rows_csv = "/tmp/geo_metric_rows.csv";
    write_metric_rows_csv(rows_csv, rows);
    CsvReader rr(rows_csv);
    std::vector<std::string> fields;
    REQUIRE(rr.next(fields));
    REQUIRE(fields.size() == 20);
    CHECK(fields[0] == "order_id");
    CHECK(fields[19] == "cost_inventory_bps");
    REQUIRE(rr.next(fields));
    CHECK(fields[0] == "7");
    CHECK(fields[2] == "0");
    REQUIRE(rr.next(fields));
    CHECK(fields[2] == "1");
    CHECK(fields[3].empty());  // missing metric serializes as an empty cell
    CHECK(!rr.next(fields));

    std::vector<StrategySummary> sums = aggregate_summary(rows);
    std::string sum_csv = "/tmp/geo_summary.csv";
    write_summary_csv(sum_csv, sums);
    CsvReader sr(sum_csv);
    REQUIRE(sr.next(fields));
    REQUIRE(fields.size() == 25);
    CHECK(fields[0] == "strategy");
    CHECK(fields[24] == "cost_inventory_bps_mean");
    REQUIRE(sr.next(fields));
    CHECK(fields[0] == "alpha");
    CHECK(fields[1] == "1");
    CHECK(fields[2] == "1");

    std::string sum_json = "/tmp/geo_summary.json";
    write_summary_json(sum_json, sums);
    std::ifstream in(sum_json);
    nlohmann::json j = nlohmann::json::parse(in);
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 1);
    CHECK(j[0]["strategy"] == "alpha");
    CHECK(j[0]["n"] == 1);
    CHECK(j[0]["total_cost_bps_mean"].get<double>() == doctest::Approx(10.0));
    CHECK(j[0]["return_drift_bps_mean"].is_null());  // missing stays null

    // cost decomposition: one row per component per strategy
    std::string comp_csv = "/tmp/geo_cost_components.csv";
    write_cost_decomposition_csv(comp_csv, sums);
    CsvReader cr(comp_csv);
    REQUIRE(cr.next(fields));
    CHECK(fields == std::vector<std::string>{"strategy", "component", "mean_bps"});
    std::set<std::string> comps;
    while (cr.next(fields)) {
        REQUIRE(fields.size() == 3);
        CHECK(fields[0] == "alpha");
        comps.insert(fields[1]);
    }
    CHECK(comps == std::set<std::string>{"arrival", "inventory", "schedule", "vwap"});
}

TEST_CASE("plot data buckets actions by horizon and splits by drift") {
    MetricRow adverse = cost_row("alpha", 1.0);
    adverse.return_drift_bps = 25.0;
    Order o = testfix::make_order("MM", 20240102, 60, 4, 1000.0, +1);
    EpisodeResult r;
    r.ok = true;
    r.steps = {step(0, 1.0, 1, 100, 0, 0, 0, 0, 0.1, 1),
               step(1, -1.0, 1, 100, 0, 0, 0, 0, 0.1, 1),
               step(2, 0.5, 1, 100, 0, 0, 0, 0, 0.1, 1),
               step(3, 0.0, 1, 100, 0, 0, 0, 0, 0.1, 1)};

    std::string path = "/tmp/geo_action_horizon.csv";
    write_action_horizon_csv(path, {adverse}, {&r}, {&o}, 4);

    CsvReader cr(path);
    std::vector<std::string> fields;
    REQUIRE(cr.next(fields));
    CHECK(fields ==
          std::vector<std::string>{"strategy", "drift", "bucket", "mean_action", "n"});
    int n_all = 0, n_adverse = 0, n_fav = 0;
    while (cr.next(fields)) {
        REQUIRE(fields.size() == 5);
        CHECK(fields[0] == "alpha");
        if (fields[1] == "all") ++n_all;
        if (fields[1] == "adverse") ++n_adverse;
        if (fields[1] == "favourable") ++n_fav;
        long bucket = -1;
        REQUIRE(csv_parse_long(fields[2], bucket));
        double want = r.steps[std::size_t(bucket)].action;
        double got = 0;
        REQUIRE(csv_parse_double(fields[3], got));
        CHECK(got == want);
        CHECK(fields[4] == "1");
    }
    CHECK(n_all == 4);
    CHECK(n_adverse == 4);  // positive drift means adverse for this order
    CHECK(n_fav == 0);

    CHECK_THROWS_AS(write_action_horizon_csv(path, {adverse}, {}, {&o}, 4),
                    std::invalid_argument);

    // anatomy trace: one row per step with missing fills left empty
    std::string anatomy = "/tmp/geo_anatomy.csv";
    EpisodeResult ar = r;
    ar.order_id = 55;
    ar.steps[1].p_fill = kMissing;
    write_anatomy_csv(anatomy, ar, o);
    CsvReader an(anatomy);
    REQUIRE(an.next(fields));
    REQUIRE(fields.size() == 15);
    CHECK(fields[0] == "order_id");
    CHECK(fields[6] == "p_fill");
    REQUIRE(an.next(fields));
    CHECK(fields[0] == "55");
    CHECK(fields[1] == "MM");
    REQUIRE(an.next(fields));
    CHECK(fields[6].empty());
    int more = 2;
    while (an.next(fields)) ++more;
    CHECK(more == 4);
}
