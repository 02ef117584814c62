#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "geo/ppo.hpp"

namespace geo {

namespace {

Eigen::MatrixXd gaussian_matrix(int rows, int cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

// Orthogonal init: QR of a Gaussian, sign-fixed by R's diagonal, scaled by gain.
Eigen::MatrixXd orthogonal(int rows, int cols, double gain, Rng& rng) {
    bool flip = rows < cols;
    int r = flip ? cols : rows, c = flip ? rows : cols;
    Eigen::MatrixXd a = gaussian_matrix(r, c, rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
    Eigen::MatrixXd rr = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
    for (int j = 0; j < c; ++j)
        if (rr(j, j) < 0) q.col(j) = -q.col(j);
    Eigen::MatrixXd w = flip ? Eigen::MatrixXd(q.transpose()) : q;
    return gain * w;
}

Layer make_layer(int out, int in, double gain, Rng& rng) {
    Layer l;
    l.W = orthogonal(out, in, gain, rng);
    l.b = Eigen::VectorXd::Zero(out);
    return l;
}

constexpr double kReluGain = 1.4142135623730951;  // sqrt(2)
constexpr double kActorOutGain = 0.01;

// Builds one head: tanh hidden layers then a linear output layer.
std::vector<Layer> make_head(int in, const std::vector<int>& hidden, int out,
                             double out_gain, Rng& rng) {
    std::vector<Layer> layers;
    int d = in;
    for (int h : hidden) {
        layers.push_back(make_layer(h, d, 1.0, rng));
        d = h;
    }
    layers.push_back(make_layer(out, d, out_gain, rng));
    return layers;
}

void check_dims(const NetDims& d) {
    if (d.obs < 1 || d.actions < 2) throw std::invalid_argument("bad net dims");
    for (int w : d.extractor)
        if (w < 1) throw std::invalid_argument("bad extractor width");
    for (int w : d.actor)
        if (w < 1) throw std::invalid_argument("bad actor width");
    for (int w : d.critic)
        if (w < 1) throw std::invalid_argument("bad critic width");
}

// Forward with cached activations for backprop. stacks[k][i] is the activation
// AFTER layer i of stack k (0 extractor / 1 actor / 2 critic); index 0 is input.
struct Trace {
    std::vector<Eigen::MatrixXd> ex, ac, cr;
    Eigen::MatrixXd logits;
    Eigen::VectorXd values;
};

Eigen::MatrixXd linear(const Eigen::MatrixXd& a, const Layer& l) {
    return (a * l.W.transpose()).rowwise() + l.b.transpose();
}

Trace forward_trace(const PolicyParams& p, const Eigen::MatrixXd& obs) {
    Trace t;
    t.ex.push_back(obs);
    for (const Layer& l : p.extractor)
        t.ex.push_back(linear(t.ex.back(), l).cwiseMax(0.0));  // ReLU
    t.ac.push_back(t.ex.back());
    for (std::size_t i = 0; i + 1 < p.actor.size(); ++i)
        t.ac.push_back(linear(t.ac.back(), p.actor[i]).array().tanh().matrix());
    t.logits = linear(t.ac.back(), p.actor.back());
    t.cr.push_back(t.ex.back());
    for (std::size_t i = 0; i + 1 < p.critic.size(); ++i)
        t.cr.push_back(linear(t.cr.back(), p.critic[i]).array().tanh().matrix());
    t.values = linear(t.cr.back(), p.critic.back()).col(0);
    if (!t.logits.allFinite() || !t.values.allFinite())
        throw std::runtime_error("non-finite network output (check inputs/params)");
    return t;
}

}  // namespace

PolicyParams init_params(const NetDims& dims, Rng& rng) {
    check_dims(dims);
    PolicyParams p;
    p.dims = dims;
    int d = dims.obs;
    for (int h : dims.extractor) {
        p.extractor.push_back(make_layer(h, d, kReluGain, rng));
        d = h;
    }
    p.actor = make_head(d, dims.actor, dims.actions, kActorOutGain, rng);
    p.critic = make_head(d, dims.critic, 1, 1.0, rng);
    return p;
}

long param_count(const NetDims& dims) {
    long n = 0;
    int d = dims.obs;
    for (int h : dims.extractor) { n += long(h) * d + h; d = h; }
    int a = d;
    for (int h : dims.actor) { n += long(h) * a + h; a = h; }
    n += long(dims.actions) * a + dims.actions;
    int c = d;
    for (int h : dims.critic) { n += long(h) * c + h; c = h; }
    n += long(c) + 1;
    return n;
}

namespace {

void flatten_stack(const std::vector<Layer>& layers, std::vector<double>& out) {
    for (const Layer& l : layers) {
        for (int i = 0; i < l.W.rows(); ++i)
            for (int j = 0; j < l.W.cols(); ++j) out.push_back(l.W(i, j));
        for (int i = 0; i < l.b.size(); ++i) out.push_back(l.b(i));
    }
}

std::size_t unflatten_stack(std::vector<Layer>& layers, const std::vector<double>& flat,
                            std::size_t pos) {
    for (Layer& l : layers) {
        for (int i = 0; i < l.W.rows(); ++i)
            for (int j = 0; j < l.W.cols(); ++j) l.W(i, j) = flat[pos++];
        for (int i = 0; i < l.b.size(); ++i) l.b(i) = flat[pos++];
    }
    return pos;
}

}  // namespace

std::vector<double> flatten_params(const PolicyParams& p) {
    std::vector<double> out;
    out.reserve(std::size_t(param_count(p.dims)));
    flatten_stack(p.extractor, out);
    flatten_stack(p.actor, out);
    flatten_stack(p.critic, out);
    return out;
}

PolicyParams unflatten_params(const NetDims& dims, const std::vector<double>& flat) {
    if (long(flat.size()) != param_count(dims))
        throw std::invalid_argument("flat parameter vector has the wrong length");
    // zero-shape skeleton with the right layer geometry
    Rng dummy(0);
    PolicyParams p;
    p.dims = dims;
    int d = dims.obs;
    for (int h : dims.extractor) {
        p.extractor.push_back(Layer{Eigen::MatrixXd::Zero(h, d), Eigen::VectorXd::Zero(h)});
        d = h;
    }
    int a = d;
    for (int h : dims.actor) {
        p.actor.push_back(Layer{Eigen::MatrixXd::Zero(h, a), Eigen::VectorXd::Zero(h)});
        a = h;
    }
    p.actor.push_back(Layer{Eigen::MatrixXd::Zero(dims.actions, a),
                            Eigen::VectorXd::Zero(dims.actions)});
    int c = d;
    for (int h : dims.critic) {
        p.critic.push_back(Layer{Eigen::MatrixXd::Zero(h, c), Eigen::VectorXd::Zero(h)});
        c = h;
    }
    p.critic.push_back(Layer{Eigen::MatrixXd::Zero(1, c), Eigen::VectorXd::Zero(1)});
    std::size_t pos = 0;
    pos = unflatten_stack(p.extractor, flat, pos);
    pos = unflatten_stack(p.actor, flat, pos);
    pos = unflatten_stack(p.critic, flat, pos);
    return p;
}

ForwardOut actor_critic_forward(const PolicyParams& p, const Eigen::MatrixXd& obs) {
    if (obs.cols() != p.dims.obs)
        throw std::invalid_argument("observation width mismatch");
    if (!obs.allFinite()) throw std::runtime_error("non-finite observation");
    Trace t = forward_trace(p, obs);
    return ForwardOut{std::move(t.logits), std::move(t.values)};
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::VectorXd mx = logits.rowwise().maxCoeff();
    Eigen::MatrixXd e = (logits.colwise() - mx).array().exp().matrix();
    Eigen::VectorXd z = e.rowwise().sum();
    return (e.array().colwise() / z.array()).matrix();
}

GaeOut gae_advantages(const std::vector<double>& rewards,
                      const std::vector<double>& values, double gamma, double lam) {
    if (values.size() != rewards.size() + 1)
        throw std::invalid_argument("values must be one longer than rewards");
    std::size_t n = rewards.size();
    GaeOut out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double acc = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        double delta = rewards[i] + gamma * values[i + 1] - values[i];
        acc = delta + gamma * lam * acc;
        out.advantages[i] = acc;
        out.returns[i] = acc + values[i];
    }
    return out;
}

RunningNorm::RunningNorm(int dim, double clip)
    : mean_(Eigen::VectorXd::Zero(dim)), var_(Eigen::VectorXd::Ones(dim)), clip_(clip) {}

void RunningNorm::update(const Eigen::MatrixXd& batch) {
    if (frozen_ || batch.rows() == 0) return;
    double nb = double(batch.rows());
    Eigen::VectorXd bm = batch.colwise().mean().transpose();
    Eigen::VectorXd bv = ((batch.rowwise() - bm.transpose()).array().square().colwise().sum() / nb)
                             .matrix()
                             .transpose();
    if (count_ <= 0.0) {
        mean_ = bm;
        var_ = bv;
        count_ = nb;
        return;
    }
    double tot = count_ + nb;
    Eigen::VectorXd delta = bm - mean_;
    Eigen::VectorXd m2 = var_ * count_ + bv * nb +
                         delta.array().square().matrix() * (count_ * nb / tot);
    mean_ += delta * (nb / tot);
    var_ = m2 / tot;
    count_ = tot;
}

void RunningNorm::update_row(const Eigen::VectorXd& x) {
    update(Eigen::MatrixXd(x.transpose()));
}

Eigen::VectorXd RunningNorm::normalize(const Eigen::VectorXd& x) const {
    Eigen::ArrayXd z = (x - mean_).array() / (var_.array() + 1e-8).sqrt();
    return z.min(clip_).max(-clip_).matrix();
}

Eigen::MatrixXd RunningNorm::normalize(const Eigen::MatrixXd& batch) const {
    Eigen::MatrixXd out(batch.rows(), batch.cols());
    for (int i = 0; i < batch.rows(); ++i)
        out.row(i) = normalize(Eigen::VectorXd(batch.row(i))).transpose();
    return out;
}

RunningNorm RunningNorm::restore(Eigen::VectorXd mean, Eigen::VectorXd var,
                                 double count, double clip, bool frozen) {
    RunningNorm n(int(mean.size()), clip);
    n.mean_ = std::move(mean);
    n.var_ = std::move(var);
    n.count_ = count;
    n.frozen_ = frozen;
    return n;
}

LossDiag ppo_loss_and_grads(const PolicyParams& p, const Batch& b,
                            const LossCoef& c, std::vector<double>& grad) {
    const long n = b.obs.rows();
    if (n == 0) throw std::invalid_argument("empty batch");
    if (long(b.actions.size()) != n || b.old_logp.size() != n || b.adv.size() != n ||
        b.ret.size() != n || b.old_probs.rows() != n)
        throw std::invalid_argument("batch field length mismatch");

    Trace tr = forward_trace(p, b.obs);
    const int na = p.dims.actions;

    // log-softmax, stable
    Eigen::VectorXd mx = tr.logits.rowwise().maxCoeff();
    Eigen::MatrixXd shifted = tr.logits.colwise() - mx;
    Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
    Eigen::MatrixXd logp = shifted.colwise() - lse;
    Eigen::MatrixXd probs = logp.array().exp().matrix();

    const double invn = 1.0 / double(n);
    double l_pi = 0, l_v = 0, l_h = 0, l_kl = 0, clip_frac = 0;
    Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(n, na);
    Eigen::VectorXd dvalues(n);

    for (long i = 0; i < n; ++i) {
        int a = b.actions[std::size_t(i)];
        if (a < 0 || a >= na) throw std::invalid_argument("action index out of range");
        double ratio = std::exp(logp(i, a) - b.old_logp(i));
        double adv = b.adv(i);
        double clipped = std::clamp(ratio, 1.0 - c.clip_eps, 1.0 + c.clip_eps);
        double s1 = ratio * adv, s2 = clipped * adv;
        l_pi += std::min(s1, s2);
        if (std::fabs(ratio - 1.0) > c.clip_eps) clip_frac += 1.0;

        // policy gradient flows only on the unclipped min branch
        if (s1 <= s2) {
            double coef = -invn * ratio * adv;  // from -L^pi
            for (int j = 0; j < na; ++j) dlogits(i, j) += coef * ((j == a) - probs(i, j));
        }

        double h = 0;
        for (int j = 0; j < na; ++j) h -= probs(i, j) * logp(i, j);
        l_h += h;
        for (int j = 0; j < na; ++j)
            dlogits(i, j) += -c.ent_coef * invn * (-probs(i, j) * (logp(i, j) + h));

        double kl = 0;
        for (int j = 0; j < na; ++j) {
            double q = b.old_probs(i, j);
            if (q > 0) kl += q * (std::log(q) - logp(i, j));
        }
        l_kl += kl;
        if (c.kl_coef != 0.0)
            for (int j = 0; j < na; ++j)
                dlogits(i, j) += c.kl_coef * invn * (probs(i, j) - b.old_probs(i, j));

        double verr = tr.values(i) - b.ret(i);
        l_v += verr * verr;
        dvalues(i) = c.value_coef * invn * 2.0 * verr;
    }
    l_pi *= invn;
    l_v *= invn;
    l_h *= invn;
    l_kl *= invn;
    clip_frac *= invn;

    // backprop: heads first, summing into the shared features
    auto back_linear = [](const Eigen::MatrixXd& dy, const Eigen::MatrixXd& a,
                          const Layer& l, Layer& g) {
        g.W = dy.transpose() * a;
        g.b = dy.colwise().sum().transpose();
        return Eigen::MatrixXd(dy * l.W);
    };

    PolicyParams g = unflatten_params(p.dims, std::vector<double>(
                                                  std::size_t(param_count(p.dims)), 0.0));

    Eigen::MatrixXd d = back_linear(dlogits, tr.ac.back(), p.actor.back(), g.actor.back());
    for (std::size_t i = p.actor.size() - 1; i-- > 0;) {
        d = d.cwiseProduct((1.0 - tr.ac[i + 1].array().square()).matrix());  // tanh'
        d = back_linear(d, tr.ac[i], p.actor[i], g.actor[i]);
    }
    Eigen::MatrixXd dfeat = d;

    Eigen::MatrixXd dv = dvalues;
    d = back_linear(dv, tr.cr.back(), p.critic.back(), g.critic.back());
    for (std::size_t i = p.critic.size() - 1; i-- > 0;) {
        d = d.cwiseProduct((1.0 - tr.cr[i + 1].array().square()).matrix());
        d = back_linear(d, tr.cr[i], p.critic[i], g.critic[i]);
    }
    dfeat += d;

    d = dfeat;
    for (std::size_t i = p.extractor.size(); i-- > 0;) {
        d = d.cwiseProduct((tr.ex[i + 1].array() > 0.0).cast<double>().matrix());  // relu'
        Eigen::MatrixXd dprev = d * p.extractor[i].W;
        g.extractor[i].W = d.transpose() * tr.ex[i];
        g.extractor[i].b = d.colwise().sum().transpose();
        d = dprev;
    }

    grad = flatten_params(g);

    LossDiag diag;
    diag.policy_loss = l_pi;
    diag.value_loss = l_v;
    diag.entropy = l_h;
    diag.kl = l_kl;
    diag.clip_fraction = clip_frac;
    diag.loss = -l_pi + c.value_coef * l_v - c.ent_coef * l_h + c.kl_coef * l_kl;
    if (!std::isfinite(diag.loss))
        throw std::runtime_error("non-finite loss (n=" + std::to_string(n) + ")");
    return diag;
}

void Adam::step(std::vector<double>& w, const std::vector<double>& g, double lr) {
    if (w.size() != g.size()) throw std::invalid_argument("adam size mismatch");
    if (m.empty()) {
        m.assign(w.size(), 0.0);
        v.assign(w.size(), 0.0);
    }
    t += 1;
    double bc1 = 1.0 - std::pow(beta1, double(t));
    double bc2 = 1.0 - std::pow(beta2, double(t));
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
}

double clip_grad_norm(std::vector<double>& g, double max_norm) {
    double sq = 0;
    for (double x : g) sq += x * x;
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        double s = max_norm / norm;
        for (double& x : g) x *= s;
    }
    return norm;
}

int pick_minibatch(long buffer_size) {
    if (buffer_size >= 32768) return 8192;
    if (buffer_size >= 16384) return 4096;
    return int(std::min<long>(buffer_size, 2048));
}

PpoPolicy::PpoPolicy(PolicyParams params, RunningNorm norm, std::string name)
    : params_(std::move(params)), norm_(std::move(norm)), name_(std::move(name)) {
    norm_.freeze();
}

double PpoPolicy::decide(const Observation& obs, const ScheduleContext&, Rng&) const {
    auto arr = obs.as_array();
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(arr.data(), long(arr.size()));
    Eigen::MatrixXd row = norm_.normalize(x).transpose();
    ForwardOut f = actor_critic_forward(params_, row);
    int best = 0;
    for (int j = 1; j < f.logits.cols(); ++j)
        if (f.logits(0, j) > f.logits(0, best)) best = j;
    return action_space()[std::size_t(best)];
}

}  // namespace geo
