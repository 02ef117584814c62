#include "geo/env.hpp"

#include <algorithm>
#include <cmath>

namespace geo {

ExecutionEnv::ExecutionEnv(const MarketData& data, RewardWeights weights)
    : data_(&data), w_(weights) {}

const MinuteBar& ExecutionEnv::bar_at(int t_step) const {
    int m = order_.start_minute + std::min(t_step, order_.horizon - 1);
    return series_->bars[std::size_t(m)];
}

Observation ExecutionEnv::reset(const Order& order) {
    if (order.horizon < 1 || order.start_minute < 0 ||
        order.start_minute + order.horizon > kMinutesPerDay)
        throw SetupError("order window outside session");
    if (!(order.q0 > 0)) throw SetupError("order size must be > 0");
    if (order.side != 1 && order.side != -1) throw SetupError("bad side");

    series_ = data_->find_series(order.symbol, order.date);
    if (!series_) throw SetupError("no bars for " + order.symbol + " on " +
                                   std::to_string(order.date));
    if (series_->status == SeriesStatus::dropped)
        throw SetupError("series dropped: " + order.symbol);
    if (series_->status != SeriesStatus::clean)
        throw SetupError("series not cleaned: " + order.symbol);
    stats_ = data_->find_stats(order.symbol, order.date);
    if (!stats_) throw SetupError("no daily stats for " + order.symbol);

    order_ = order;
    profile_ = intraday_profile(data_->bars.at(order.symbol), order.date);
    suffix_.assign(std::size_t(order.horizon) + 1, 0.0);
    for (int k = order.horizon - 1; k >= 0; --k)
        suffix_[std::size_t(k)] = suffix_[std::size_t(k) + 1] +
                                  profile_[std::size_t(order.start_minute + k)];

    const MinuteBar& b0 = series_->bars[std::size_t(order.start_minute)];
    if (is_missing(b0.mid_price))
        throw SetupError("no arrival mid for " + order.symbol + " at minute " +
                         std::to_string(order.start_minute));
    p0_ = b0.mid_price;
    sigma_minute_ = stats_->sigma_1 / std::sqrt(double(kMinutesPerDay));
    // quantize fills to q0's ulp: every partial sum is then a multiple of
    // lot_ below 2^53 lots, so accumulation never rounds and the terminal
    // fill closes the order bit-exactly
    lot_ = std::ldexp(1.0, std::ilogb(order.q0) - 52);

    t_ = 0;
    done_ = false;
    active_ = true;
    fill_sum_ = own_dev_ = own_v_ = mkt_dev_ = mkt_v_ = 0.0;
    carried_price_ = !is_missing(b0.vwap) && b0.has_trades() ? b0.vwap : p0_;
    impact_ = ImpactState{};
    last_fill_price_ = p0_;
    last_fill_qty_ = 0;
    last_imm_impact_ = 0;
    last_fill_t_ = -1;
    total_cost_ = 0;
    return observe();
}

double ExecutionEnv::current_market_volume() const {
    const MinuteBar& b = bar_at(t_);
    return b.has_trades() ? b.trade_volume : 0.0;
}

double ExecutionEnv::expected_remaining_volume() const {
    if (t_ >= order_.horizon) return 0.0;
    return suffix_[std::size_t(t_)];
}

double ExecutionEnv::target_rate() const {
    double ev = expected_remaining_volume();
    if (ev <= 0.0) return kMissing;
    return q_rem() / ev;
}

ExecutionEnv::Step ExecutionEnv::step(double action_value) {
    const auto& acts = action_space();
    bool known = std::any_of(acts.begin(), acts.end(), [&](double a) {
        return std::fabs(a - action_value) < 1e-12;
    });
    if (!known) throw std::invalid_argument("action not in the action set");

    double rho = target_rate();
    double q_des;
    if (!is_missing(rho)) {
        q_des = (1.0 + action_value) * rho * current_market_volume();
    } else {
        // dead expected volume: fall back to a uniform-time rate
        q_des = (1.0 + action_value) * q_rem() / double(order_.horizon - t_);
    }
    return do_step(q_des, true, action_value);
}

ExecutionEnv::Step ExecutionEnv::step_quantity(double shares) {
    if (shares < 0 || !std::isfinite(shares))
        throw std::invalid_argument("baseline quantity must be finite and >= 0");
    return do_step(shares, false, 0.0);
}

ExecutionEnv::Step ExecutionEnv::do_step(double q_desired, bool action_mode,
                                         double action_value) {
    if (!active_) throw std::logic_error("step before reset");
    if (done_) throw std::logic_error("step after episode end");

    const int t = t_;
    const int minute = order_.start_minute + t;
    const MinuteBar& bar = series_->bars[std::size_t(minute)];
    const double V = bar.has_trades() ? bar.trade_volume : 0.0;
    const double rho = target_rate();
    const bool terminal_sweep = (t == order_.horizon - 1);

    double q;
    if (terminal_sweep) {
        // forced completion; q_rem() is exact on the lot grid
        q = std::max(0.0, q_rem());
    } else {
        q = std::min(q_rem(), std::max(0.0, q_desired));
        q = std::floor(q / lot_) * lot_;
    }

    // impact clock always advances one minute between steps
    if (t > 0) impact_.advance(1.0, order_.impact);

    double imm = 0.0;
    if (q > 0.0) {
        double v_imp = V > 0 ? V : profile_[std::size_t(minute)];
        if (v_imp > 0) {
            imm = order_.impact.g0 * instant_impact(q, v_imp, order_.impact);
            // own trades enter as magnitude; side is applied at the fill
            impact_.apply_trade(q, v_imp, 1.0, order_.impact);
        }
    }
    const double impact_now = impact_.accumulator;

    if (!is_missing(bar.vwap) && V > 0) carried_price_ = bar.vwap;
    else if (!is_missing(bar.mid_price)) carried_price_ = bar.mid_price;

    double p_fill = kMissing;
    if (q > 0.0) {
        p_fill = fill_price(carried_price_, order_.side, impact_now);
        fill_sum_ += q;
        own_dev_ += (p_fill - p0_) * q;
        own_v_ += q;
        last_fill_price_ = p_fill;
        last_fill_qty_ = q;
        last_imm_impact_ = imm;
        last_fill_t_ = t;
    }
    if (V > 0 && !is_missing(bar.vwap)) {
        mkt_dev_ += (bar.vwap - p0_) * V;
        mkt_v_ += V;
    }

    // reward components (running benchmarks through this minute)
    double c_arr = 0.0, c_vwap = 0.0;
    if (own_v_ > 0) {
        double fill_gap = own_dev_ / own_v_;  // fill vwap minus arrival
        c_arr = double(order_.side) * fill_gap;
        if (mkt_v_ > 0)
            c_vwap = double(order_.side) * (fill_gap - mkt_dev_ / mkt_v_);
    }
    double delta = 0.0;
    if (V > 0 && !is_missing(rho) && rho > 0) {
        double rho_actual = q / V;
        delta = sigma_minute_ * std::fabs(rho_actual - rho) / rho;
    }
    const double q_rem_after = std::max(0.0, order_.q0 - fill_sum_);
    const double zeta = sigma_minute_ * q_rem_after / order_.q0;
    const double reward =
        -(w_.arrival * c_arr + w_.vwap * c_vwap + w_.schedule * delta +
          w_.inventory * zeta);
    total_cost_ += w_.arrival * c_arr / p0_ + w_.vwap * c_vwap / p0_ +
                   w_.schedule * delta + w_.inventory * zeta;

    StepRecord rec;
    rec.t = t;
    if (action_mode) {
        rec.action = action_value;
    } else if (!is_missing(rho) && rho * V > 0) {
        rec.action = q / (rho * V) - 1.0;  // implied rate adjustment
    } else {
        rec.action = q > 0 ? 0.0 : -1.0;
    }
    rec.q = q;
    rec.p_fill = p_fill;
    rec.impact_bps = impact_now * 1e4;
    rec.c_arrival = c_arr;
    rec.c_vwap = c_vwap;
    rec.delta = delta;
    rec.zeta = zeta;
    rec.reward = reward;
    rec.rho_target = rho;
    rec.market_volume = V;

    t_ += 1;
    done_ = (q_rem() <= 0.0) || (t_ >= order_.horizon);

    Step out;
    out.obs = observe();
    out.reward = reward;
    out.done = done_;
    out.record = rec;
    return out;
}

Observation ExecutionEnv::observe() const {
    const MinuteBar& b = bar_at(t_);
    Observation o;
    o.mid_price = !is_missing(b.mid_price) ? b.mid_price : carried_price_;
    o.market_volume = b.has_trades() ? b.trade_volume : 0.0;
    o.time_remaining = double(order_.horizon - std::min(t_, order_.horizon));
    o.q_rem = q_rem();
    o.adv_pct = order_.adv_pct;
    o.ehv_pct = order_.ehv_pct;
    o.last_fill_price = last_fill_price_;
    o.last_fill_qty = last_fill_qty_;
    o.immediate_impact_bps = last_imm_impact_ * 1e4;
    o.cumulative_impact_bps = impact_.accumulator * 1e4;
    o.arrival_price = p0_;
    o.sigma_1 = stats_->sigma_1;
    o.sigma_5 = stats_->sigma_5;
    return o;
}

EpisodeSummary ExecutionEnv::summarize() const {
    if (!done_) throw std::logic_error("summarize before episode end");
    EpisodeSummary s;
    s.completion_rate = fill_sum_ / order_.q0;
    s.duration_pct = last_fill_t_ >= 0
                         ? 100.0 * double(last_fill_t_) / double(order_.horizon)
                         : 0.0;
    s.total_cost_bps = total_cost_ * 1e4;
    s.arrival_slippage_bps =
        1e4 * double(order_.side) * (own_dev_ / order_.q0) / p0_;
    // full-window market VWAP, including minutes after early completion
    double dev = 0, vv = 0;
    for (int k = 0; k < order_.horizon; ++k) {
        const MinuteBar& b = series_->bars[std::size_t(order_.start_minute + k)];
        if (b.has_trades() && !is_missing(b.vwap)) {
            dev += (b.vwap - p0_) * b.trade_volume;
            vv += b.trade_volume;
        }
    }
    if (vv > 0)
        s.vwap_slippage =
            double(order_.side) * (own_dev_ / order_.q0 - dev / vv);
    return s;
}

}  // namespace geo
