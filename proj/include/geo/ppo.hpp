#pragma once

// Actor-critic PPO from scratch: MLP policy/value over the 13-dim observation,
// GAE, clipped surrogate loss with entropy and optional KL penalty, running
// observation normalization, Adam, and the rollout/update training loop.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "geo/runner.hpp"

namespace geo {

struct NetDims {
    int obs = Observation::kDim;
    int actions = 9;
    std::vector<int> extractor = {256, 256};   // ReLU
    std::vector<int> actor = {256, 256, 128};  // tanh hidden before the logits
    std::vector<int> critic = {256, 256, 128};
};

struct Layer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;  // out
};

// Shared extractor feeding separate actor (9 logits) and critic (scalar) heads.
// The last entry of actor/critic is the linear output layer.
struct PolicyParams {
    NetDims dims;
    std::vector<Layer> extractor;
    std::vector<Layer> actor;
    std::vector<Layer> critic;
};

// Orthogonal-style init, small gain on the actor output so the initial policy
// is near uniform.
PolicyParams init_params(const NetDims& dims, Rng& rng);

long param_count(const NetDims& dims);
std::vector<double> flatten_params(const PolicyParams& p);
PolicyParams unflatten_params(const NetDims& dims, const std::vector<double>& flat);

struct ForwardOut {
    Eigen::MatrixXd logits;  // N x actions
    Eigen::VectorXd values;  // N
};

// Batched forward pass; rows of obs are (normalized) observations.
// Throws std::runtime_error on non-finite activations.
ForwardOut actor_critic_forward(const PolicyParams& p, const Eigen::MatrixXd& obs);

// Row-wise stable softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

// ============================================================
// Generalized advantage estimation
// ============================================================

struct GaeOut {
    std::vector<double> advantages;
    std::vector<double> returns;  // advantages + values
};

// values must be rewards.size() + 1 long (bootstrap value last).
GaeOut gae_advantages(const std::vector<double>& rewards,
                      const std::vector<double>& values, double gamma, double lam);

// ============================================================
// Observation normalization
// ============================================================

class RunningNorm {
public:
    RunningNorm() = default;
    explicit RunningNorm(int dim, double clip = 10.0);

    // Streaming moment merge; two updates match one concatenated update.
    void update(const Eigen::MatrixXd& batch);
    void update_row(const Eigen::VectorXd& x);

    Eigen::VectorXd normalize(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd normalize(const Eigen::MatrixXd& batch) const;

    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }
    double count() const { return count_; }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::VectorXd& var() const { return var_; }
    double clip() const { return clip_; }

    // for checkpoint round-trips
    static RunningNorm restore(Eigen::VectorXd mean, Eigen::VectorXd var,
                               double count, double clip, bool frozen);

private:
    Eigen::VectorXd mean_, var_;
    double count_ = 0.0;
    double clip_ = 10.0;
    bool frozen_ = false;
};

// ============================================================
// Clipped surrogate loss
// ============================================================

struct Batch {
    Eigen::MatrixXd obs;        // N x obs_dim, already normalized
    std::vector<int> actions;   // indices into the action set
    Eigen::VectorXd old_logp;   // N
    Eigen::VectorXd adv;        // N, already normalized
    Eigen::VectorXd ret;        // N
    Eigen::MatrixXd old_probs;  // N x actions, for the old->new KL
};

struct LossCoef {
    double clip_eps = 0.18;
    double value_coef = 0.55;
    double ent_coef = 0.006;
    double kl_coef = 0.0;  // penalty term available but off by default
};

struct LossDiag {
    double loss = 0;
    double policy_loss = 0;  // L^pi (maximized)
    double value_loss = 0;   // L^V
    double entropy = 0;      // L^H
    double kl = 0;           // KL(old || new)
    double clip_fraction = 0;
};

// loss = -L^pi + c_v L^V - c_e L^H + c_KL L^KL. grad is d(loss)/d(flat params).
LossDiag ppo_loss_and_grads(const PolicyParams& p, const Batch& b,
                            const LossCoef& c, std::vector<double>& grad);

// ============================================================
// Optimizer
// ============================================================

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    long t = 0;

    void step(std::vector<double>& w, const std::vector<double>& g, double lr);
};

// Scales g in place so its L2 norm is at most max_norm; returns the pre-clip norm.
double clip_grad_norm(std::vector<double>& g, double max_norm);

// ============================================================
// Training loop
// ============================================================

struct TrainConfig {
    NetDims dims;
    int n_envs = 1;
    int n_steps = 2048;  // per env per rollout
    int iterations = 10;
    double gamma = 0.999;
    int epochs = 3;
    double clip_eps = 0.18;  // linearly decayed to 0, like the learning rate
    double target_kl = 0.02;
    double ent_coef = 0.006;
    double value_coef = 0.55;
    double kl_coef = 0.0;
    double max_grad_norm = 0.5;
    double lr = 3e-4;  // linear decay to 0
    double gae_lambda = 0.95;
    uint64_t seed = 0;
    std::string log_csv;          // per-iteration log, optional
    std::string checkpoint_path;  // written every iteration when set
};

// minibatch auto-scale over the rollout buffer: {2048, 4096, 8192}
int pick_minibatch(long buffer_size);

struct IterationLog {
    int iteration = 0;
    long timesteps = 0;  // cumulative transitions collected
    int episodes = 0;    // completed this rollout
    double mean_reward = 0;      // mean episode reward (completed episodes)
    double mean_cost_bps = 0;    // mean episode total cost
    double loss = 0;
    double policy_loss = 0;
    double value_loss = 0;
    double entropy = 0;
    double kl = 0;
    double clip_fraction = 0;
    double lr = 0;
    double clip_eps = 0;
    int n_updates = 0;
    bool early_stopped = false;  // KL exceeded target during the epochs
};

struct TrainResult {
    PolicyParams params;
    RunningNorm norm;
    std::vector<IterationLog> log;
    bool diverged = false;  // aborted on non-finite loss; params = last good
};

// Orders are cycled in seeded shuffled order across parallel-in-lockstep envs.
TrainResult train_ppo(const MarketData& data, RewardWeights weights,
                      const std::vector<Order>& orders, const TrainConfig& cfg);

void write_train_log_csv(const std::string& path, const std::vector<IterationLog>& log);

// ============================================================
// Checkpoints (versioned JSON: dims, flat weights, norm state, config)
// ============================================================

struct Checkpoint {
    PolicyParams params;
    RunningNorm norm;
};

void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const RunningNorm& norm, const TrainConfig& cfg);
Checkpoint load_checkpoint(const std::string& path);

// ============================================================
// Greedy policy wrapper for evaluation runs
// ============================================================

class PpoPolicy final : public Policy {
public:
    PpoPolicy(PolicyParams params, RunningNorm norm, std::string name = "ppo");

    Mode mode() const override { return Mode::action; }
    double decide(const Observation& obs, const ScheduleContext&, Rng&) const override;
    std::string name() const override { return name_; }

private:
    PolicyParams params_;
    RunningNorm norm_;  // frozen
    std::string name_;
};

}  // namespace geo
