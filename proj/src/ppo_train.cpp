#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "geo/csvio.hpp"
#include "geo/ppo.hpp"

namespace geo {

namespace {

using nlohmann::json;

// One policy/value query on a single observation row.
struct RowOut {
    Eigen::VectorXd probs;
    Eigen::VectorXd logp;
    double value = 0;
};

RowOut policy_row(const PolicyParams& p, const Eigen::VectorXd& obs_n) {
    ForwardOut f = actor_critic_forward(p, obs_n.transpose());
    Eigen::VectorXd z = f.logits.row(0).transpose();
    double mx = z.maxCoeff();
    Eigen::VectorXd shifted = z.array() - mx;
    double lse = std::log(shifted.array().exp().sum());
    RowOut out;
    out.logp = shifted.array() - lse;
    out.probs = out.logp.array().exp();
    out.value = f.values(0);
    return out;
}

int sample_index(const Eigen::VectorXd& probs, Rng& rng) {
    double u = rng.uniform();
    double acc = 0;
    for (int j = 0; j < probs.size(); ++j) {
        acc += probs(j);
        if (u < acc) return j;
    }
    return int(probs.size()) - 1;
}

// Cycles training orders in seeded shuffled passes.
struct OrderCycle {
    const std::vector<Order>* orders;
    std::vector<std::size_t> idx;
    std::size_t pos = 0;
    Rng rng;

    OrderCycle(const std::vector<Order>& o, uint64_t seed)
        : orders(&o), idx(o.size()), rng(seed) {
        std::iota(idx.begin(), idx.end(), std::size_t(0));
        shuffle_vec(idx, rng);
    }

    const Order& next() {
        if (pos >= idx.size()) {
            shuffle_vec(idx, rng);
            pos = 0;
        }
        return (*orders)[idx[pos++]];
    }
};

struct EnvSlot {
    ExecutionEnv env;
    Observation obs;        // current state (post-reset or post-step)
    bool needs_reset = true;
    double ep_reward = 0;

    explicit EnvSlot(const MarketData& d, RewardWeights w) : env(d, w) {}
};

json dims_to_json(const NetDims& d) {
    return json{{"obs", d.obs},
                {"actions", d.actions},
                {"extractor", d.extractor},
                {"actor", d.actor},
                {"critic", d.critic}};
}

NetDims dims_from_json(const json& j) {
    NetDims d;
    d.obs = j.at("obs").get<int>();
    d.actions = j.at("actions").get<int>();
    d.extractor = j.at("extractor").get<std::vector<int>>();
    d.actor = j.at("actor").get<std::vector<int>>();
    d.critic = j.at("critic").get<std::vector<int>>();
    return d;
}

}  // namespace

TrainResult train_ppo(const MarketData& data, RewardWeights weights,
                      const std::vector<Order>& orders, const TrainConfig& cfg) {
    if (orders.empty()) throw std::invalid_argument("no training orders");
    if (cfg.n_envs < 1 || cfg.n_steps < 1 || cfg.iterations < 1 || cfg.epochs < 1)
        throw std::invalid_argument("bad training config");
    if (cfg.clip_eps <= 0 || cfg.clip_eps >= 1)
        throw std::invalid_argument("clip epsilon must be in (0,1)");

    Rng rng_init(derive_seed(cfg.seed, "ppo-init"));
    Rng rng_act(derive_seed(cfg.seed, "ppo-act"));
    Rng rng_shuffle(derive_seed(cfg.seed, "ppo-shuffle"));
    OrderCycle cycle(orders, derive_seed(cfg.seed, "ppo-orders"));

    TrainResult res;
    res.params = init_params(cfg.dims, rng_init);
    res.norm = RunningNorm(cfg.dims.obs);

    std::vector<double> flat = flatten_params(res.params);
    Adam adam;
    long timesteps = 0;
    // restore point for explosions that only surface in the next rollout
    std::vector<double> last_good_flat = flat;
    RunningNorm last_good_norm = res.norm;

    std::vector<EnvSlot> envs;
    envs.reserve(std::size_t(cfg.n_envs));
    for (int e = 0; e < cfg.n_envs; ++e) envs.emplace_back(data, weights);

    const long B = long(cfg.n_steps) * cfg.n_envs;
    const int nobs = cfg.dims.obs, na = cfg.dims.actions;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        double progress = double(iter) / double(cfg.iterations);
        double lr = cfg.lr * (1.0 - progress);
        double eps = cfg.clip_eps * (1.0 - progress);

        std::vector<double> snapshot = flat;  // restore point on divergence

        // ---- rollout (envs stepped in lockstep, one thread, deterministic) ----
        Eigen::MatrixXd obs_buf(B, nobs);
        Eigen::MatrixXd probs_buf(B, na);
        std::vector<int> act_buf(std::size_t(B), 0);
        std::vector<double> logp_buf(std::size_t(B), 0.0), val_buf(std::size_t(B), 0.0),
            rew_buf(std::size_t(B), 0.0);
        std::vector<uint8_t> done_buf(std::size_t(B), 0);
        std::vector<double> ep_rewards, ep_costs;
        Eigen::VectorXd adv_all(B), ret_all(B);

        // an update can push the weights somewhere that only explodes on the
        // next forward pass; treat that as divergence and restore the last
        // fully completed iteration (protocol errors are logic_error and pass)
        try {
            for (int step = 0; step < cfg.n_steps; ++step) {
                for (int e = 0; e < cfg.n_envs; ++e) {
                    EnvSlot& s = envs[std::size_t(e)];
                    if (s.needs_reset) {
                        std::size_t tries = 0;
                        for (;;) {
                            const Order& o = cycle.next();
                            try {
                                s.obs = s.env.reset(o);
                                break;
                            } catch (const SetupError& ex) {
                                log_warn(std::string("skipping order: ") + ex.what());
                                if (++tries > orders.size())
                                    throw std::invalid_argument(
                                        "no runnable training orders");
                            }
                        }
                        s.needs_reset = false;
                        s.ep_reward = 0;
                    }
                    auto arr = s.obs.as_array();
                    Eigen::VectorXd raw =
                        Eigen::Map<const Eigen::VectorXd>(arr.data(), long(arr.size()));
                    res.norm.update_row(raw);
                    Eigen::VectorXd obs_n = res.norm.normalize(raw);
                    RowOut ro = policy_row(res.params, obs_n);
                    int a = sample_index(ro.probs, rng_act);
                    ExecutionEnv::Step st = s.env.step(action_space()[std::size_t(a)]);

                    long row = long(e) * cfg.n_steps + step;
                    obs_buf.row(row) = obs_n.transpose();
                    probs_buf.row(row) = ro.probs.transpose();
                    act_buf[std::size_t(row)] = a;
                    logp_buf[std::size_t(row)] = ro.logp(a);
                    val_buf[std::size_t(row)] = ro.value;
                    rew_buf[std::size_t(row)] = st.reward;
                    done_buf[std::size_t(row)] = st.done ? 1 : 0;
                    s.ep_reward += st.reward;
                    s.obs = st.obs;
                    if (st.done) {
                        ep_rewards.push_back(s.ep_reward);
                        ep_costs.push_back(s.env.summarize().total_cost_bps);
                        s.needs_reset = true;
                    }
                }
            }
            timesteps += B;

            // ---- GAE per env stream, segments split at terminals ----
            for (int e = 0; e < cfg.n_envs; ++e) {
                long base = long(e) * cfg.n_steps;
                long seg_start = 0;
                for (long t = 0; t < cfg.n_steps; ++t) {
                    bool last = (t == cfg.n_steps - 1);
                    if (done_buf[std::size_t(base + t)] || last) {
                        long len = t - seg_start + 1;
                        std::vector<double> rews(std::size_t(len), 0.0);
                        std::vector<double> vals(std::size_t(len) + 1, 0.0);
                        for (long k = 0; k < len; ++k) {
                            rews[std::size_t(k)] =
                                rew_buf[std::size_t(base + seg_start + k)];
                            vals[std::size_t(k)] =
                                val_buf[std::size_t(base + seg_start + k)];
                        }
                        if (done_buf[std::size_t(base + t)]) {
                            vals[std::size_t(len)] = 0.0;
                        } else {
                            // truncated rollout: bootstrap from the live state
                            EnvSlot& s = envs[std::size_t(e)];
                            auto arr = s.obs.as_array();
                            Eigen::VectorXd raw = Eigen::Map<const Eigen::VectorXd>(
                                arr.data(), long(arr.size()));
                            vals[std::size_t(len)] =
                                policy_row(res.params, res.norm.normalize(raw)).value;
                        }
                        GaeOut g = gae_advantages(rews, vals, cfg.gamma, cfg.gae_lambda);
                        for (long k = 0; k < len; ++k) {
                            adv_all(base + seg_start + k) = g.advantages[std::size_t(k)];
                            ret_all(base + seg_start + k) = g.returns[std::size_t(k)];
                        }
                        seg_start = t + 1;
                    }
                }
            }
        } catch (const std::runtime_error& ex) {
            log_error(std::string("rollout aborted: ") + ex.what());
            flat = last_good_flat;
            res.params = unflatten_params(cfg.dims, flat);
            res.norm = last_good_norm;
            res.diverged = true;
            break;
        }

        // ---- update epochs ----
        IterationLog lg;
        lg.iteration = iter;
        lg.timesteps = timesteps;
        lg.episodes = int(ep_rewards.size());
        lg.mean_reward = !ep_rewards.empty()
                             ? mean_of(ep_rewards)
                             : std::accumulate(rew_buf.begin(), rew_buf.end(), 0.0) /
                                   double(cfg.n_envs);
        lg.mean_cost_bps = !ep_costs.empty() ? mean_of(ep_costs) : kMissing;
        lg.lr = lr;
        lg.clip_eps = eps;

        int mb = pick_minibatch(B);
        std::vector<long> idx(std::size_t(B), 0L);
        std::iota(idx.begin(), idx.end(), 0L);
        LossCoef coef{eps, cfg.value_coef, cfg.ent_coef, cfg.kl_coef};
        double sum_loss = 0, sum_pl = 0, sum_vl = 0, sum_ent = 0, sum_cf = 0;
        bool stop = false, bad = false;

        for (int epoch = 0; epoch < cfg.epochs && !stop && !bad; ++epoch) {
            shuffle_vec(idx, rng_shuffle);
            for (long k0 = 0; k0 < B && !stop && !bad; k0 += mb) {
                long k1 = std::min(B, k0 + mb);
                long m = k1 - k0;
                Batch batch;
                batch.obs.resize(m, nobs);
                batch.old_probs.resize(m, na);
                batch.actions.resize(std::size_t(m));
                batch.old_logp.resize(m);
                batch.adv.resize(m);
                batch.ret.resize(m);
                for (long k = 0; k < m; ++k) {
                    long src = idx[std::size_t(k0 + k)];
                    batch.obs.row(k) = obs_buf.row(src);
                    batch.old_probs.row(k) = probs_buf.row(src);
                    batch.actions[std::size_t(k)] = act_buf[std::size_t(src)];
                    batch.old_logp(k) = logp_buf[std::size_t(src)];
                    batch.adv(k) = adv_all(src);
                    batch.ret(k) = ret_all(src);
                }
                double am = batch.adv.mean();
                double as = std::sqrt((batch.adv.array() - am).square().sum() /
                                      double(std::max<long>(1, m - 1)));
                batch.adv = ((batch.adv.array() - am) / (as + 1e-8)).matrix();

                std::vector<double> grad;
                LossDiag diag;
                try {
                    diag = ppo_loss_and_grads(res.params, batch, coef, grad);
                } catch (const std::runtime_error& ex) {
                    log_error(std::string("update aborted: ") + ex.what());
                    bad = true;
                    break;
                }
                if (diag.kl > cfg.target_kl) {
                    lg.early_stopped = true;
                    lg.kl = diag.kl;
                    stop = true;
                    break;
                }
                clip_grad_norm(grad, cfg.max_grad_norm);
                adam.step(flat, grad, lr);
                res.params = unflatten_params(cfg.dims, flat);
                sum_loss += diag.loss;
                sum_pl += diag.policy_loss;
                sum_vl += diag.value_loss;
                sum_ent += diag.entropy;
                sum_cf += diag.clip_fraction;
                lg.kl = diag.kl;
                lg.n_updates += 1;
            }
        }
        if (bad) {
            flat = snapshot;
            res.params = unflatten_params(cfg.dims, flat);
            res.diverged = true;
            res.log.push_back(lg);
            break;
        }
        if (lg.n_updates > 0) {
            lg.loss = sum_loss / lg.n_updates;
            lg.policy_loss = sum_pl / lg.n_updates;
            lg.value_loss = sum_vl / lg.n_updates;
            lg.entropy = sum_ent / lg.n_updates;
            lg.clip_fraction = sum_cf / lg.n_updates;
        }
        res.log.push_back(lg);
        last_good_flat = flat;
        last_good_norm = res.norm;
        log_info("iter " + std::to_string(iter) + " reward " + fmt_double(lg.mean_reward) +
                 " kl " + fmt_double(lg.kl) + " updates " + std::to_string(lg.n_updates));

        if (!cfg.checkpoint_path.empty())
            save_checkpoint(cfg.checkpoint_path, res.params, res.norm, cfg);
        if (!cfg.log_csv.empty()) write_train_log_csv(cfg.log_csv, res.log);
    }
    return res;
}

void write_train_log_csv(const std::string& path, const std::vector<IterationLog>& log) {
    CsvWriter w(path);
    w.header({"iteration", "timesteps", "episodes", "mean_reward", "mean_cost_bps",
              "loss", "policy_loss", "value_loss", "entropy", "kl", "clip_fraction",
              "lr", "clip_eps", "n_updates", "early_stopped"});
    for (const IterationLog& l : log) {
        w.field(l.iteration);
        w.field(l.timesteps);
        w.field(l.episodes);
        w.field(l.mean_reward);
        w.field(l.mean_cost_bps);
        w.field(l.loss);
        w.field(l.policy_loss);
        w.field(l.value_loss);
        w.field(l.entropy);
        w.field(l.kl);
        w.field(l.clip_fraction);
        w.field(l.lr);
        w.field(l.clip_eps);
        w.field(l.n_updates);
        w.field(l.early_stopped ? 1 : 0);
        w.end_row();
    }
}

void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const RunningNorm& norm, const TrainConfig& cfg) {
    json j;
    j["version"] = 1;
    j["kind"] = "policy-checkpoint";
    j["dims"] = dims_to_json(params.dims);
    j["params"] = flatten_params(params);
    j["norm"] = {
        {"mean", std::vector<double>(norm.mean().data(), norm.mean().data() + norm.mean().size())},
        {"var", std::vector<double>(norm.var().data(), norm.var().data() + norm.var().size())},
        {"count", norm.count()},
        {"clip", norm.clip()}};
    j["config"] = {{"n_envs", cfg.n_envs},
                   {"n_steps", cfg.n_steps},
                   {"iterations", cfg.iterations},
                   {"gamma", cfg.gamma},
                   {"epochs", cfg.epochs},
                   {"clip_eps", cfg.clip_eps},
                   {"target_kl", cfg.target_kl},
                   {"ent_coef", cfg.ent_coef},
                   {"value_coef", cfg.value_coef},
                   {"kl_coef", cfg.kl_coef},
                   {"max_grad_norm", cfg.max_grad_norm},
                   {"lr", cfg.lr},
                   {"gae_lambda", cfg.gae_lambda},
                   {"seed", cfg.seed}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    json j = json::parse(in);
    if (j.value("kind", "") != "policy-checkpoint" || j.value("version", 0) != 1)
        throw std::runtime_error("not a recognized checkpoint: " + path);
    NetDims dims = dims_from_json(j.at("dims"));
    Checkpoint c;
    c.params = unflatten_params(dims, j.at("params").get<std::vector<double>>());
    const json& n = j.at("norm");
    auto mean = n.at("mean").get<std::vector<double>>();
    auto var = n.at("var").get<std::vector<double>>();
    if (int(mean.size()) != dims.obs || int(var.size()) != dims.obs)
        throw std::runtime_error("checkpoint norm size mismatch: " + path);
    Eigen::VectorXd mv = Eigen::Map<const Eigen::VectorXd>(mean.data(), long(mean.size()));
    Eigen::VectorXd vv = Eigen::Map<const Eigen::VectorXd>(var.data(), long(var.size()));
    c.norm = RunningNorm::restore(mv, vv, n.at("count").get<double>(),
                                  n.at("clip").get<double>(), true);
    return c;
}

}  // namespace geo
