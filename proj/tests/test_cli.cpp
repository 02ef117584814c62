#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "geo/csvio.hpp"

// Drives the installed binary the way a user would: a config file, a shell
// command per stage, exit codes, and the files left behind. Assumes the test
// runs from the build directory next to geo-exec (ctest's default).

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = "./geo-exec " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const std::string& path, const json& j) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

json base_cfg(const std::string& root, uint64_t seed) {
    json j;
    j["seed"] = seed;
    j["out_dir"] = root + "/out";
    j["workers"] = 1;
    j["data"] = {{"root", root + "/data"}};
    j["synth"] = {{"n_symbols", 2},
                  {"n_days", 30},
                  {"base_price", 100.0},
                  {"planted", {{"form", "sqrt"}, {"g0", 0.004}, {"tau", 15.0}}}};
    j["calibration"] = {{"lag_grid", json::array({5, 10})}, {"max_lag", 10}};
    j["orders"] = {{"train",
                    {{"n_orders", 10},
                     {"date_lo", 20220103},
                     {"date_hi", 20220121},
                     {"horizon_lo", 5},
                     {"horizon_hi", 30}}},
                   {"test",
                    {{"n_orders", 8},
                     {"date_lo", 20220124},
                     {"date_hi", 20220211},
                     {"horizon_lo", 5},
                     {"horizon_hi", 30}}}};
    j["eval"] = {{"strategies", json::array({"twap"})}};
    return j;
}

std::string fresh_dir(const std::string& root) {
    fs::remove_all(root);
    fs::create_directories(root);
    return root;
}

// relative path -> file bytes for a whole tree
std::map<std::string, std::string> tree_bytes(const std::string& root) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[fs::relative(entry.path(), root).string()] = ss.str();
    }
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kPipe = "/tmp/geo_cli_pipe";

}  // namespace

TEST_CASE("bad command lines exit with status 2") {
    REQUIRE(fs::exists("./geo-exec"));  // run from the build directory
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("") == 2);  // a subcommand is required
    CHECK(run_cli("synth --bogus") == 2);
    CHECK(run_cli("run --strategy") == 2);  // flag without a value
}

TEST_CASE("synthetic data is bit-reproducible for a seed") {
    std::string ra = fresh_dir("/tmp/geo_cli_synth_a");
    std::string rb = fresh_dir("/tmp/geo_cli_synth_b");
    json ca = base_cfg(ra, 17);
    json cb = base_cfg(rb, 17);
    ca["synth"] = {{"n_symbols", 2}, {"n_days", 10}, {"base_price", 100.0}};
    cb["synth"] = ca["synth"];
    write_json(ra + "/cfg.json", ca);
    write_json(rb + "/cfg.json", cb);

    REQUIRE(run_cli("synth --config " + ra + "/cfg.json") == 0);
    REQUIRE(run_cli("synth --config " + rb + "/cfg.json") == 0);

    auto ta = tree_bytes(ra + "/data");
    auto tb = tree_bytes(rb + "/data");
    CHECK(!ta.empty());
    CHECK(ta == tb);

    // a seed override changes the data but not the file layout
    REQUIRE(run_cli("synth --seed 99 --config " + rb + "/cfg.json") == 0);
    auto tc = tree_bytes(rb + "/data");
    REQUIRE(tc.size() == ta.size());
    bool same_names = true, same_bytes = true;
    for (const auto& [path, bytes] : ta) {
        auto it = tc.find(path);
        if (it == tc.end()) {
            same_names = false;
            break;
        }
        if (it->second != bytes) same_bytes = false;
    }
    CHECK(same_names);
    CHECK(!same_bytes);
}

TEST_CASE("the pipeline drops its artifacts where the next stage expects them") {
    fresh_dir(kPipe);
    write_json(kPipe + "/cfg.json", base_cfg(kPipe, 11));
    std::string cfg = " --config " + kPipe + "/cfg.json";

    REQUIRE(run_cli("synth" + cfg) == 0);
    CHECK(fs::exists(kPipe + "/data/bars"));
    CHECK(fs::exists(kPipe + "/data/daily"));

    REQUIRE(run_cli("calibrate" + cfg) == 0);
    CHECK(fs::exists(kPipe + "/out/calibration.csv"));
    CHECK(fs::exists(kPipe + "/out/calibration_summary.csv"));

    REQUIRE(run_cli("gen-orders" + cfg) == 0);
    // the generated calendars respect the configured disjoint windows
    for (auto [file, lo, hi] :
         {std::tuple<const char*, int, int>{"orders_train.csv", 20220103, 20220121},
          std::tuple<const char*, int, int>{"orders_test.csv", 20220124, 20220211}}) {
        geo::CsvReader r(kPipe + "/out/" + file);
        std::vector<std::string> fields;
        REQUIRE(r.next(fields));  // header
        int rows = 0;
        while (r.next(fields)) {
            long date = 0;
            REQUIRE(geo::csv_parse_long(fields[2], date));
            CHECK(date >= lo);
            CHECK(date <= hi);
            ++rows;
        }
        CHECK(rows > 0);
    }

    REQUIRE(run_cli("run --strategy twap" + cfg) == 0);
    CHECK(fs::exists(kPipe + "/out/results_twap.jsonl"));
    CHECK(fs::exists(kPipe + "/out/metrics_twap.csv"));
    CHECK(fs::exists(kPipe + "/out/summary_twap.csv"));
    {
        std::ifstream in(kPipe + "/out/results_twap.jsonl");
        std::string line;
        int lines = 0;
        while (std::getline(in, line))
            if (!line.empty()) ++lines;
        CHECK(lines == 8);  // one JSON object per test order
    }

    REQUIRE(run_cli("report" + cfg) == 0);
    CHECK(fs::exists(kPipe + "/out/summary.csv"));
    CHECK(fs::exists(kPipe + "/out/summary.json"));
    CHECK(fs::exists(kPipe + "/out/metrics_all.csv"));
    CHECK(fs::exists(kPipe + "/out/plotdata/action_vs_horizon.csv"));
    CHECK(fs::exists(kPipe + "/out/plotdata/cost_decomposition.csv"));
    CHECK(fs::exists(kPipe + "/out/plotdata/anatomy_twap.csv"));

    geo::CsvReader sr(kPipe + "/out/summary.csv");
    std::vector<std::string> fields;
    REQUIRE(sr.next(fields));
    CHECK(fields[0] == "strategy");
    REQUIRE(sr.next(fields));
    CHECK(fields[0] == "twap");
    CHECK(fields[1] == "8");  // every episode aggregated
}

TEST_CASE("the resolved config reloads as the same config") {
    // depends on the pipeline case above having populated kPipe
    std::string resolved = kPipe + "/out/resolved_config.json";
    REQUIRE(fs::exists(resolved));

    json j = json::parse(slurp(resolved));
    CHECK(j["seed"] == 11);
    CHECK(j["out_dir"] == kPipe + "/out");
    CHECK(j["data"]["root"] == kPipe + "/data");

    // feeding it back reproduces it byte for byte: every default is explicit
    std::string before = slurp(resolved);
    REQUIRE(run_cli("report --config " + resolved) == 0);
    CHECK(slurp(resolved) == before);
}

TEST_CASE("runtime failures exit with status 1") {
    CHECK(run_cli("synth") == 1);  // no --config
    CHECK(run_cli("synth --config /tmp/geo_cli_no_such.json") == 1);

    std::string root = fresh_dir("/tmp/geo_cli_bad");
    json j = base_cfg(root, 5);
    j["synht"] = json::object();  // unknown keys are rejected, not ignored
    write_json(root + "/typo.json", j);
    CHECK(run_cli("synth --config " + root + "/typo.json") == 1);

    std::ofstream(root + "/mangled.json") << "{ not json";
    CHECK(run_cli("synth --config " + root + "/mangled.json") == 1);

    // data root was never generated
    json fresh = base_cfg(root, 5);
    write_json(root + "/cfg.json", fresh);
    CHECK(run_cli("calibrate --config " + root + "/cfg.json") == 1);

    // overlapping train/test calendars are refused before any work happens
    json overlap = base_cfg(root, 5);
    overlap["orders"]["test"]["date_lo"] = 20220110;
    write_json(root + "/overlap.json", overlap);
    CHECK(run_cli("gen-orders --config " + root + "/overlap.json") == 1);

    // these need real data and orders, reuse the pipeline directory
    std::string cfg = " --config " + kPipe + "/cfg.json";
    REQUIRE(fs::exists(kPipe + "/out/orders_test.csv"));
    CHECK(run_cli("run --strategy nope" + cfg) == 1);
    CHECK(run_cli("run" + cfg) == 1);  // strategy is required
    CHECK(run_cli("run --strategy ppo" + cfg) == 1);  // no checkpoint trained
    CHECK(run_cli("run --strategy elite:0,0" + cfg) == 1);  // no archive
    CHECK(run_cli("run --strategy twap --orders /tmp/geo_cli_no_orders.csv" + cfg) == 1);
}
