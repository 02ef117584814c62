#include "geo/strategies.hpp"

#include <stdexcept>

namespace geo {

double expected_window_volume(const ScheduleContext& ctx) {
    const Order& o = *ctx.order;
    double s = 0;
    for (int k = 0; k < o.horizon; ++k)
        s += (*ctx.profile)[std::size_t(o.start_minute + k)];
    return s;
}

double TwapPolicy::decide(const Observation&, const ScheduleContext& ctx, Rng&) const {
    return ctx.order->q0 / double(ctx.order->horizon);
}

double VwapPolicy::decide(const Observation&, const ScheduleContext& ctx, Rng&) const {
    double total = expected_window_volume(ctx);
    if (total <= 0) return ctx.order->q0 / double(ctx.order->horizon);
    const Order& o = *ctx.order;
    return o.q0 * (*ctx.profile)[std::size_t(o.start_minute + ctx.t)] / total;
}

double PovPolicy::decide(const Observation&, const ScheduleContext& ctx, Rng&) const {
    double total = expected_window_volume(ctx);
    if (total <= 0) return ctx.order->q0 / double(ctx.order->horizon);
    return ctx.order->q0 / total * ctx.market_volume;
}

double RandomPolicy::decide(const Observation&, const ScheduleContext&, Rng& rng) const {
    const auto& acts = action_space();
    return acts[std::size_t(rng.pick(int(acts.size())))];
}

std::unique_ptr<Policy> make_baseline(const std::string& name) {
    if (name == "twap") return std::make_unique<TwapPolicy>();
    if (name == "vwap") return std::make_unique<VwapPolicy>();
    if (name == "pov") return std::make_unique<PovPolicy>();
    if (name == "random") return std::make_unique<RandomPolicy>();
    throw std::invalid_argument("unknown strategy: " + name);
}

}  // namespace geo
