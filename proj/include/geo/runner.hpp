#pragma once

// Episode driver: runs a policy over a set of orders, optionally in parallel.
// Per-episode RNG streams are keyed by order id, so results are identical for
// any worker count and any order of scheduling.

#include <vector>

#include "geo/strategies.hpp"

namespace geo {

EpisodeResult run_one(const MarketData& data, RewardWeights weights,
                      const Order& order, const Policy& policy, uint64_t seed);

std::vector<EpisodeResult> run_episodes(const MarketData& data, RewardWeights weights,
                                        const std::vector<Order>& orders,
                                        const Policy& policy, uint64_t seed,
                                        int workers = 1);

}  // namespace geo
