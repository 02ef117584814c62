#include "geo/runner.hpp"

namespace geo {

EpisodeResult run_one(const MarketData& data, RewardWeights weights,
                      const Order& order, const Policy& policy, uint64_t seed) {
    EpisodeResult res;
    res.order_id = order.id;
    Rng rng(derive_seed(seed, "episode", uint64_t(order.id)));
    try {
        ExecutionEnv env(data, weights);
        Observation obs = env.reset(order);
        res.steps.reserve(std::size_t(order.horizon));
        while (!env.done()) {
            ScheduleContext ctx;
            ctx.order = &order;
            ctx.t = env.t();
            ctx.market_volume = env.current_market_volume();
            ctx.q_rem = env.q_rem();
            ctx.profile = &env.profile();
            double d = policy.decide(obs, ctx, rng);
            ExecutionEnv::Step s = policy.mode() == Policy::Mode::action
                                       ? env.step(d)
                                       : env.step_quantity(d);
            res.steps.push_back(s.record);
            obs = s.obs;
        }
        res.summary = env.summarize();
        res.ok = true;
    } catch (const std::exception& e) {
        res.ok = false;
        res.error = e.what();
        res.steps.clear();
    }
    return res;
}

std::vector<EpisodeResult> run_episodes(const MarketData& data, RewardWeights weights,
                                        const std::vector<Order>& orders,
                                        const Policy& policy, uint64_t seed,
                                        int workers) {
    std::vector<EpisodeResult> out(orders.size());
    parallel_for(orders.size(), workers, [&](std::size_t i) {
        out[i] = run_one(data, weights, orders[i], policy, seed);
    });
    return out;
}

}  // namespace geo
