#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "geo/csvio.hpp"
#include "geo/mapelites.hpp"
#include "geo/runner.hpp"

using namespace geo;

namespace {

DailyStats day_stats(const std::string& symbol, int date, double adv, double vol) {
    DailyStats d;
    d.symbol = symbol;
    d.date = date;
    d.adv_21 = adv;
    d.sigma_1 = vol;
    return d;
}

NetDims qd_dims() {
    NetDims d;
    d.extractor = {8, 8};
    d.actor = {8};
    d.critic = {8};
    return d;
}

// two-symbol world whose descriptor ranks separate on a 3x3 grid:
// LL ranks (0.5, 0.5) -> cell (1,1); HH ranks (1,1) -> cell (2,2)
MarketData qd_world() {
    std::vector<int> dates{20240102, 20240103, 20240104, 20240105};
    MarketData data = testfix::make_world("LL", dates, 100.0, 1000.0, 0.01);
    MarketData hh = testfix::make_world("HH", dates, 50.0, 4000.0, 0.04);
    data.bars["HH"] = hh.bars["HH"];
    data.daily["HH"] = hh.daily["HH"];
    return data;
}

std::vector<Order> qd_orders() {
    std::vector<Order> orders;
    int id = 1;
    for (const std::string& sym : {std::string("LL"), std::string("HH")}) {
        for (int date : {20240103, 20240104, 20240105}) {
            for (int start : {30, 90, 150, 210}) {
                Order o = testfix::make_order(sym, date, start, 16, 1500.0,
                                              id % 2 ? +1 : -1, 0.002, 8.0);
                o.id = id++;
                orders.push_back(o);
            }
        }
    }
    return orders;
}

QDConfig qd_cfg(uint64_t seed) {
    QDConfig cfg;
    cfg.dims = qd_dims();
    cfg.grid = 3;
    cfg.iterations = 3;
    cfg.children = 6;
    cfg.sigma = 0.05;
    cfg.eval_episodes = 4;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("universe stats average per symbol and flag degenerate axes") {
    MarketData data;
    data.daily["AA"] = {day_stats("AA", 1, 10.0, 0.01), day_stats("AA", 2, 20.0, 0.03)};
    data.daily["BB"] = {day_stats("BB", 1, 30.0, 0.01)};
    data.daily["CC"] = {day_stats("CC", 1, 5.0, 0.05)};
    // no usable vol: excluded from the universe entirely
    data.daily["DD"] = {day_stats("DD", 1, 40.0, kMissing)};

    UniverseStats u = compute_universe_stats(data);
    REQUIRE(u.symbols == std::vector<std::string>{"AA", "BB", "CC"});
    CHECK(u.adv[0] == doctest::Approx(15.0).epsilon(1e-12));
    CHECK(u.vol[0] == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(!u.degenerate_liq);
    CHECK(!u.degenerate_vol);

    // rank = fraction of the universe at or below the symbol
    Descriptor a = compute_descriptor("AA", u);
    CHECK(a.liq == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(a.vol == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    Descriptor b = compute_descriptor("BB", u);
    CHECK(b.liq == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.vol == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    Descriptor c = compute_descriptor("CC", u);
    CHECK(c.liq == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(c.vol == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(compute_descriptor("DD", u), std::out_of_range);
    CHECK_THROWS_AS(compute_descriptor("ZZ", u), std::out_of_range);

    MarketData flat;
    flat.daily["AA"] = {day_stats("AA", 1, 10.0, 0.01)};
    flat.daily["BB"] = {day_stats("BB", 1, 10.0, 0.02)};
    UniverseStats uf = compute_universe_stats(flat);
    CHECK(uf.degenerate_liq);
    CHECK(!uf.degenerate_vol);
    CHECK(compute_descriptor("AA", uf).liq == 1.0);
    CHECK(compute_descriptor("BB", uf).liq == 1.0);
}

TEST_CASE("descriptor ranks map onto grid cells with 1.0 in the top cell") {
    CHECK(descriptor_cell(0.0, 3) == 0);
    CHECK(descriptor_cell(0.32, 3) == 0);
    CHECK(descriptor_cell(1.0 / 3.0, 3) == 1);  // 3 * (1/3) rounds to exactly 1.0
    CHECK(descriptor_cell(0.5, 3) == 1);
    CHECK(descriptor_cell(2.0 / 3.0, 3) == 2);
    CHECK(descriptor_cell(0.99, 3) == 2);
    CHECK(descriptor_cell(1.0, 3) == 2);
    CHECK(descriptor_cell(0.5, 1) == 0);
    CHECK(descriptor_cell(1.0, 5) == 4);
    CHECK_THROWS_AS(descriptor_cell(-0.01, 3), std::invalid_argument);
    CHECK_THROWS_AS(descriptor_cell(1.01, 3), std::invalid_argument);
}

TEST_CASE("archive replaces only on strictly higher quality") {
    Archive a(3);
    CHECK(a.occupied_count() == 0);

    std::vector<double> p1{1.0, 2.0}, p2{3.0, 4.0};
    CHECK(archive_update(a, 0, 0, p1, 1.0, 2));
    CHECK(a.at(0, 0).occupied);
    CHECK(a.at(0, 0).quality == 1.0);
    CHECK(a.at(0, 0).replaced_at == 2);
    CHECK(a.at(0, 0).params == p1);
    CHECK(a.at(0, 0).n_evals == 0);  // bookkeeping stays with the caller
    CHECK(a.occupied_count() == 1);

    CHECK(!archive_update(a, 0, 0, p2, 0.5, 3));  // worse: kept
    CHECK(!archive_update(a, 0, 0, p2, 1.0, 3));  // tie: kept
    CHECK(a.at(0, 0).params == p1);
    CHECK(a.at(0, 0).replaced_at == 2);

    CHECK(archive_update(a, 0, 0, p2, 1.5, 4));
    CHECK(a.at(0, 0).quality == 1.5);
    CHECK(a.at(0, 0).params == p2);
    CHECK(a.at(0, 0).replaced_at == 4);

    CHECK_THROWS_AS(archive_update(a, 1, 1, p1, kMissing, 0), std::invalid_argument);
    CHECK_THROWS_AS(
        archive_update(a, 1, 1, p1, std::numeric_limits<double>::infinity(), 0),
        std::invalid_argument);
}

TEST_CASE("mutation is gaussian around the parent and leaves it untouched") {
    std::vector<double> parent{1.0, -2.0, 3.0};
    Rng rng(7);
    std::vector<double> tiny = mutate_params(parent, 1e-12, rng);
    for (std::size_t i = 0; i < parent.size(); ++i)
        CHECK(std::fabs(tiny[i] - parent[i]) < 1e-9);
    CHECK(parent == std::vector<double>{1.0, -2.0, 3.0});

    const std::size_t n = 100000;
    std::vector<double> zeros(n, 0.0);
    Rng rng2(99);
    std::vector<double> child = mutate_params(zeros, 0.5, rng2);
    double mean = 0;
    for (double x : child) mean += x;
    mean /= double(n);
    double var = 0;
    for (double x : child) var += (x - mean) * (x - mean);
    var /= double(n - 1);
    double sd = std::sqrt(var);
    CHECK(std::fabs(mean) < 3.0 * 0.5 / std::sqrt(double(n)));
    CHECK(sd > 0.49);
    CHECK(sd < 0.51);

    Rng ra(123), rb(123);
    CHECK(mutate_params(parent, 0.1, ra) == mutate_params(parent, 0.1, rb));

    Rng rc(1);
    CHECK_THROWS_AS(mutate_params(parent, 0.0, rc), std::invalid_argument);
    CHECK_THROWS_AS(mutate_params(parent, -1.0, rc), std::invalid_argument);
}

TEST_CASE("quality is the negated mean dimensionless cost over ok episodes") {
    MarketData data = qd_world();
    std::vector<Order> orders = qd_orders();
    Rng rng(31);
    PolicyParams params = init_params(qd_dims(), rng);
    RunningNorm norm(13);

    std::vector<const Order*> ptrs;
    for (std::size_t k = 0; k < 5; ++k) ptrs.push_back(&orders[k]);

    double q = evaluate_quality(params, norm, data, RewardWeights{}, ptrs, 77);
    REQUIRE(!is_missing(q));
    CHECK(q < 0.0);  // penalties make costs strictly positive here

    // identity against the episode runner
    PpoPolicy policy(params, norm);
    double total = 0;
    int n_ok = 0;
    for (const Order* o : ptrs) {
        EpisodeResult r = run_one(data, RewardWeights{}, *o, policy, 77);
        REQUIRE(r.ok);
        total += r.summary.total_cost_bps / 1e4;
        ++n_ok;
    }
    CHECK(q == doctest::Approx(-total / n_ok).epsilon(1e-12));

    CHECK(evaluate_quality(params, norm, data, RewardWeights{}, ptrs, 77) == q);

    // an unrunnable order is skipped, not fatal; all-bad pools are missing
    Order ghost = orders[0];
    ghost.symbol = "NOPE";
    std::vector<const Order*> mixed{&orders[0], &ghost};
    double qm = evaluate_quality(params, norm, data, RewardWeights{}, mixed, 77);
    EpisodeResult solo = run_one(data, RewardWeights{}, orders[0], policy, 77);
    CHECK(qm == doctest::Approx(-solo.summary.total_cost_bps / 1e4).epsilon(1e-12));
    std::vector<const Order*> all_bad{&ghost};
    CHECK(is_missing(evaluate_quality(params, norm, data, RewardWeights{}, all_bad, 77)));
}

TEST_CASE("archive search is budgeted, monotone, and deterministic") {
    MarketData data = qd_world();
    std::vector<Order> orders = qd_orders();
    QDConfig cfg = qd_cfg(5);
    Rng rng(derive_seed(cfg.seed, "qd-seed-policy"));
    PolicyParams seed_params = init_params(cfg.dims, rng);
    RunningNorm seed_norm(13);
    Eigen::MatrixXd warm(4, 13);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 13; ++j) warm(i, j) = 0.3 * (i + 1) * (j - 6);
    seed_norm.update(warm);

    QDResult r = run_map_elites(data, RewardWeights{}, orders, seed_params, seed_norm,
                                cfg);

    // only the two populated cells are evaluable and occupied
    CHECK(r.archive.grid == 3);
    CHECK(r.archive.occupied_count() == 2);
    CHECK(r.archive.at(1, 1).occupied);
    CHECK(r.archive.at(2, 2).occupied);
    int evaluable = 0;
    for (uint8_t e : r.evaluable) evaluable += e;
    CHECK(evaluable == 2);
    CHECK(r.evaluable[1 * 3 + 1] == 1);
    CHECK(r.evaluable[2 * 3 + 2] == 1);
    CHECK(!is_missing(r.seed_quality[1 * 3 + 1]));
    CHECK(is_missing(r.seed_quality[0]));

    // exact evaluation budget: seed eval + round-robin children per cell
    CHECK(r.total_child_evals == long(cfg.iterations) * cfg.children);
    CHECK(r.archive.at(1, 1).n_evals == 1 + cfg.iterations * cfg.children / 2);
    CHECK(r.archive.at(2, 2).n_evals == 1 + cfg.iterations * cfg.children / 2);

    // per-cell quality never decreases and never drops below the seed
    REQUIRE(r.history.size() == std::size_t(cfg.iterations) * 2);
    double last11 = -1e300, last22 = -1e300;
    int per_iter[3] = {0, 0, 0};
    for (const CellHistory& h : r.history) {
        REQUIRE(h.iteration >= 0);
        REQUIRE(h.iteration < 3);
        per_iter[h.iteration] += 1;
        if (h.cell_i == 1) {
            CHECK(h.quality >= last11);
            last11 = h.quality;
        } else {
            CHECK(h.quality >= last22);
            last22 = h.quality;
        }
    }
    CHECK(per_iter[0] == 2);
    CHECK(per_iter[1] == 2);
    CHECK(per_iter[2] == 2);
    CHECK(r.archive.at(1, 1).quality >= r.seed_quality[1 * 3 + 1]);
    CHECK(r.archive.at(2, 2).quality >= r.seed_quality[2 * 3 + 2]);

    // every elite shares the seed's normalization, frozen
    CHECK(r.norm.frozen());
    CHECK(r.norm.count() == seed_norm.count());
    CHECK((r.norm.mean() - seed_norm.mean()).cwiseAbs().maxCoeff() == 0.0);

    // reruns and the parallel evaluator reproduce the archive exactly
    QDResult r2 = run_map_elites(data, RewardWeights{}, orders, seed_params, seed_norm,
                                 cfg);
    QDConfig par = cfg;
    par.workers = 3;
    QDResult r3 = run_map_elites(data, RewardWeights{}, orders, seed_params, seed_norm,
                                 par);
    for (const QDResult* o : {&r2, &r3}) {
        CHECK(o->archive.at(1, 1).quality == r.archive.at(1, 1).quality);
        CHECK(o->archive.at(2, 2).quality == r.archive.at(2, 2).quality);
        CHECK(o->archive.at(1, 1).params == r.archive.at(1, 1).params);
        CHECK(o->archive.at(2, 2).params == r.archive.at(2, 2).params);
        CHECK(o->history.size() == r.history.size());
    }

    QDConfig starved = cfg;
    starved.eval_episodes = 50;
    CHECK_THROWS_AS(run_map_elites(data, RewardWeights{}, orders, seed_params,
                                   seed_norm, starved),
                    std::runtime_error);
    QDConfig bad = cfg;
    bad.iterations = 0;
    CHECK_THROWS_AS(
        run_map_elites(data, RewardWeights{}, orders, seed_params, seed_norm, bad),
        std::invalid_argument);
    bad = cfg;
    bad.children = 0;
    CHECK_THROWS_AS(
        run_map_elites(data, RewardWeights{}, orders, seed_params, seed_norm, bad),
        std::invalid_argument);
    bad = cfg;
    bad.grid = 0;
    CHECK_THROWS_AS(
        run_map_elites(data, RewardWeights{}, orders, seed_params, seed_norm, bad),
        std::invalid_argument);
    CHECK_THROWS_AS(
        run_map_elites(data, RewardWeights{}, {}, seed_params, seed_norm, cfg),
        std::invalid_argument);
}

TEST_CASE("saved archives round-trip through manifest, surface, and elites") {
    MarketData data = qd_world();
    std::vector<Order> orders = qd_orders();
    QDConfig cfg = qd_cfg(9);
    Rng rng(derive_seed(cfg.seed, "qd-seed-policy"));
    PolicyParams seed_params = init_params(cfg.dims, rng);
    RunningNorm seed_norm(13);
    Eigen::MatrixXd warm = Eigen::MatrixXd::Random(6, 13);
    seed_norm.update(warm);

    QDResult r = run_map_elites(data, RewardWeights{}, orders, seed_params, seed_norm,
                                cfg);

    std::string dir = "/tmp/geo_qd_archive";
    std::filesystem::remove_all(dir);
    save_archive(dir, r, cfg);

    CsvReader manifest(dir + "/manifest.csv");
    REQUIRE(manifest.ok());
    std::vector<std::string> fields;
    REQUIRE(manifest.next(fields));
    CHECK(fields == std::vector<std::string>{"cell_i", "cell_j", "quality",
                                             "vs_baseline_pct", "n_evals"});
    int rows = 0;
    bool saw11 = false;
    while (manifest.next(fields)) {
        ++rows;
        REQUIRE(fields.size() == 5);
        long ci = 0, cj = 0;
        REQUIRE(csv_parse_long(fields[0], ci));
        REQUIRE(csv_parse_long(fields[1], cj));
        double quality = 0, vs = 0;
        REQUIRE(csv_parse_double(fields[2], quality));
        REQUIRE(csv_parse_double(fields[3], vs));
        const ArchiveCell& cell = r.archive.at(int(ci), int(cj));
        CHECK(quality == cell.quality);  // shortest round-trip survives the csv
        double base = r.seed_quality[std::size_t(ci) * 3 + std::size_t(cj)];
        CHECK(vs ==
              doctest::Approx(100.0 * (quality - base) / std::fabs(base)).epsilon(1e-12));
        if (ci == 1 && cj == 1) saw11 = true;
    }
    CHECK(rows == 2);
    CHECK(saw11);

    CsvReader surface(dir + "/surface.csv");
    REQUIRE(surface.ok());
    REQUIRE(surface.next(fields));
    CHECK(fields ==
          std::vector<std::string>{"iteration", "cell_i", "cell_j", "quality"});
    int surf_rows = 0;
    while (surface.next(fields)) ++surf_rows;
    CHECK(surf_rows == int(r.history.size()));

    CHECK(std::filesystem::exists(dir + "/elite_1_1.json"));
    CHECK(std::filesystem::exists(dir + "/elite_2_2.json"));
    CHECK(!std::filesystem::exists(dir + "/elite_0_0.json"));

    Checkpoint elite = load_elite(dir, 1, 1);
    CHECK(flatten_params(elite.params) == r.archive.at(1, 1).params);
    CHECK(elite.norm.frozen());
    CHECK(elite.norm.count() == r.norm.count());
    CHECK((elite.norm.mean() - r.norm.mean()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((elite.norm.var() - r.norm.var()).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(load_elite(dir, 0, 0), std::runtime_error);
}
