#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "geo/runconfig.hpp"

namespace geo {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : obj.items()) {
        if (!ok.count(key))
            throw ConfigError("unknown config key: " + where + key);
    }
}

template <class T>
void get_to(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) obj.at(key).get_to(out);
}

void parse_data(const json& j, RunConfig::DataSection& d) {
    reject_unknown(j, "data.", {"root", "missing_ceiling", "outlier_threshold"});
    get_to(j, "root", d.root);
    get_to(j, "missing_ceiling", d.missing_ceiling);
    get_to(j, "outlier_threshold", d.outlier_threshold);
}

void parse_synth(const json& j, SynthConfig& s) {
    reject_unknown(j, "synth.",
                   {"n_symbols", "n_days", "base_price", "daily_vol_lo", "daily_vol_hi",
                    "adv_lo", "adv_hi", "u_shape_strength", "start_date", "symbol_prefix",
                    "drift_per_minute", "planted"});
    get_to(j, "n_symbols", s.n_symbols);
    get_to(j, "n_days", s.n_days);
    get_to(j, "base_price", s.base_price);
    get_to(j, "daily_vol_lo", s.daily_vol_range_lo);
    get_to(j, "daily_vol_hi", s.daily_vol_range_hi);
    get_to(j, "adv_lo", s.adv_range_lo);
    get_to(j, "adv_hi", s.adv_range_hi);
    get_to(j, "u_shape_strength", s.u_shape_strength);
    get_to(j, "start_date", s.start_date);
    get_to(j, "symbol_prefix", s.symbol_prefix);
    get_to(j, "drift_per_minute", s.drift_per_minute);
    if (j.contains("planted") && !j.at("planted").is_null()) {
        const json& p = j.at("planted");
        reject_unknown(p, "synth.planted.", {"form", "g0", "tau"});
        ImpactParams ip;
        std::string form = "linear";
        get_to(p, "form", form);
        ip.form = form_from_name(form);
        get_to(p, "g0", ip.g0);
        get_to(p, "tau", ip.tau);
        s.planted_impact = ip;
    }
}

void parse_calibration(const json& j, RunConfig& cfg) {
    reject_unknown(j, "calibration.",
                   {"max_lag", "folds", "tau_lo", "tau_hi", "tau_grid", "retention_r2",
                    "lag_grid"});
    get_to(j, "max_lag", cfg.calibration.max_lag);
    get_to(j, "folds", cfg.calibration.folds);
    get_to(j, "tau_lo", cfg.calibration.tau_lo);
    get_to(j, "tau_hi", cfg.calibration.tau_hi);
    get_to(j, "tau_grid", cfg.calibration.tau_grid);
    get_to(j, "retention_r2", cfg.calibration.retention_r2);
    get_to(j, "lag_grid", cfg.lag_grid);
}

void parse_orders(const json& j, const std::string& where, OrderGenConfig& o) {
    reject_unknown(j, where,
                   {"n_orders", "date_lo", "date_hi", "ehv_lo", "ehv_hi", "ehv_shape",
                    "horizon_lo", "horizon_hi", "side_buy_prob"});
    get_to(j, "n_orders", o.n_orders);
    get_to(j, "date_lo", o.date_lo);
    get_to(j, "date_hi", o.date_hi);
    get_to(j, "ehv_lo", o.ehv_lo);
    get_to(j, "ehv_hi", o.ehv_hi);
    get_to(j, "ehv_shape", o.ehv_shape);
    get_to(j, "horizon_lo", o.horizon_lo);
    get_to(j, "horizon_hi", o.horizon_hi);
    get_to(j, "side_buy_prob", o.side_buy_prob);
}

void parse_reward(const json& j, RewardWeights& w) {
    reject_unknown(j, "reward.", {"arrival", "vwap", "schedule", "inventory"});
    get_to(j, "arrival", w.arrival);
    get_to(j, "vwap", w.vwap);
    get_to(j, "schedule", w.schedule);
    get_to(j, "inventory", w.inventory);
}

void parse_ppo(const json& j, TrainConfig& t) {
    reject_unknown(j, "ppo.",
                   {"extractor", "actor", "critic", "n_envs", "n_steps", "iterations",
                    "gamma", "epochs", "clip_eps", "target_kl", "ent_coef", "value_coef",
                    "kl_coef", "max_grad_norm", "lr", "gae_lambda"});
    get_to(j, "extractor", t.dims.extractor);
    get_to(j, "actor", t.dims.actor);
    get_to(j, "critic", t.dims.critic);
    get_to(j, "n_envs", t.n_envs);
    get_to(j, "n_steps", t.n_steps);
    get_to(j, "iterations", t.iterations);
    get_to(j, "gamma", t.gamma);
    get_to(j, "epochs", t.epochs);
    get_to(j, "clip_eps", t.clip_eps);
    get_to(j, "target_kl", t.target_kl);
    get_to(j, "ent_coef", t.ent_coef);
    get_to(j, "value_coef", t.value_coef);
    get_to(j, "kl_coef", t.kl_coef);
    get_to(j, "max_grad_norm", t.max_grad_norm);
    get_to(j, "lr", t.lr);
    get_to(j, "gae_lambda", t.gae_lambda);
}

void parse_qd(const json& j, QDConfig& q) {
    reject_unknown(j, "qd.", {"grid", "iterations", "children", "sigma", "eval_episodes"});
    get_to(j, "grid", q.grid);
    get_to(j, "iterations", q.iterations);
    get_to(j, "children", q.children);
    get_to(j, "sigma", q.sigma);
    get_to(j, "eval_episodes", q.eval_episodes);
}

void parse_eval(const json& j, RunConfig::EvalSection& e) {
    reject_unknown(j, "eval.",
                   {"strategies", "winsor_lo", "winsor_hi", "checkpoint", "archive_dir"});
    get_to(j, "strategies", e.strategies);
    get_to(j, "winsor_lo", e.winsor_lo);
    get_to(j, "winsor_hi", e.winsor_hi);
    get_to(j, "checkpoint", e.checkpoint);
    get_to(j, "archive_dir", e.archive_dir);
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(origin + ": config root must be an object");
    RunConfig cfg;
    try {
        reject_unknown(j, "",
                       {"seed", "out_dir", "workers", "data", "synth", "calibration",
                        "orders", "reward", "ppo", "qd", "eval"});
        get_to(j, "seed", cfg.seed);
        get_to(j, "out_dir", cfg.out_dir);
        get_to(j, "workers", cfg.workers);
        if (j.contains("data")) parse_data(j.at("data"), cfg.data);
        if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
        if (j.contains("calibration")) parse_calibration(j.at("calibration"), cfg);
        if (j.contains("orders")) {
            const json& o = j.at("orders");
            reject_unknown(o, "orders.", {"train", "test"});
            if (o.contains("train")) parse_orders(o.at("train"), "orders.train.", cfg.orders_train);
            if (o.contains("test")) parse_orders(o.at("test"), "orders.test.", cfg.orders_test);
        }
        if (j.contains("reward")) parse_reward(j.at("reward"), cfg.reward);
        if (j.contains("ppo")) parse_ppo(j.at("ppo"), cfg.ppo);
        if (j.contains("qd")) parse_qd(j.at("qd"), cfg.qd);
        if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path);
}

std::string resolved_config_text(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["workers"] = cfg.workers;
    j["data"] = {{"root", cfg.data.root},
                 {"missing_ceiling", cfg.data.missing_ceiling},
                 {"outlier_threshold", cfg.data.outlier_threshold}};
    json planted = nullptr;
    if (cfg.synth.planted_impact) {
        const ImpactParams& p = *cfg.synth.planted_impact;
        planted = {{"form", form_name(p.form)}, {"g0", p.g0}, {"tau", p.tau}};
    }
    j["synth"] = {{"n_symbols", cfg.synth.n_symbols},
                  {"n_days", cfg.synth.n_days},
                  {"base_price", cfg.synth.base_price},
                  {"daily_vol_lo", cfg.synth.daily_vol_range_lo},
                  {"daily_vol_hi", cfg.synth.daily_vol_range_hi},
                  {"adv_lo", cfg.synth.adv_range_lo},
                  {"adv_hi", cfg.synth.adv_range_hi},
                  {"u_shape_strength", cfg.synth.u_shape_strength},
                  {"start_date", cfg.synth.start_date},
                  {"symbol_prefix", cfg.synth.symbol_prefix},
                  {"drift_per_minute", cfg.synth.drift_per_minute},
                  {"planted", planted}};
    j["calibration"] = {{"max_lag", cfg.calibration.max_lag},
                        {"folds", cfg.calibration.folds},
                        {"tau_lo", cfg.calibration.tau_lo},
                        {"tau_hi", cfg.calibration.tau_hi},
                        {"tau_grid", cfg.calibration.tau_grid},
                        {"retention_r2", cfg.calibration.retention_r2},
                        {"lag_grid", cfg.lag_grid}};
    auto orders_j = [](const OrderGenConfig& o) {
        return json{{"n_orders", o.n_orders},     {"date_lo", o.date_lo},
                    {"date_hi", o.date_hi},       {"ehv_lo", o.ehv_lo},
                    {"ehv_hi", o.ehv_hi},         {"ehv_shape", o.ehv_shape},
                    {"horizon_lo", o.horizon_lo}, {"horizon_hi", o.horizon_hi},
                    {"side_buy_prob", o.side_buy_prob}};
    };
    j["orders"] = {{"train", orders_j(cfg.orders_train)},
                   {"test", orders_j(cfg.orders_test)}};
    j["reward"] = {{"arrival", cfg.reward.arrival},
                   {"vwap", cfg.reward.vwap},
                   {"schedule", cfg.reward.schedule},
                   {"inventory", cfg.reward.inventory}};
    j["ppo"] = {{"extractor", cfg.ppo.dims.extractor},
                {"actor", cfg.ppo.dims.actor},
                {"critic", cfg.ppo.dims.critic},
                {"n_envs", cfg.ppo.n_envs},
                {"n_steps", cfg.ppo.n_steps},
                {"iterations", cfg.ppo.iterations},
                {"gamma", cfg.ppo.gamma},
                {"epochs", cfg.ppo.epochs},
                {"clip_eps", cfg.ppo.clip_eps},
                {"target_kl", cfg.ppo.target_kl},
                {"ent_coef", cfg.ppo.ent_coef},
                {"value_coef", cfg.ppo.value_coef},
                {"kl_coef", cfg.ppo.kl_coef},
                {"max_grad_norm", cfg.ppo.max_grad_norm},
                {"lr", cfg.ppo.lr},
                {"gae_lambda", cfg.ppo.gae_lambda}};
    j["qd"] = {{"grid", cfg.qd.grid},
               {"iterations", cfg.qd.iterations},
               {"children", cfg.qd.children},
               {"sigma", cfg.qd.sigma},
               {"eval_episodes", cfg.qd.eval_episodes}};
    j["eval"] = {{"strategies", cfg.eval.strategies},
                 {"winsor_lo", cfg.eval.winsor_lo},
                 {"winsor_hi", cfg.eval.winsor_hi},
                 {"checkpoint", cfg.eval.checkpoint},
                 {"archive_dir", cfg.eval.archive_dir}};
    return j.dump(2) + "\n";
}

void write_resolved_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << resolved_config_text(cfg);
}

}  // namespace geo
