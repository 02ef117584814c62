#pragma once

// Execution policies: the shared interface plus the schedule baselines.

#include <memory>
#include <string>

#include "geo/env.hpp"

namespace geo {

// Everything a schedule baseline may condition on at one decision point.
struct ScheduleContext {
    const Order* order = nullptr;
    int t = 0;                   // step within the order window
    double market_volume = 0;    // realized volume this minute
    double q_rem = 0;
    const std::vector<double>* profile = nullptr;  // full-day expected volume
};

class Policy {
public:
    enum class Mode { action, quantity };

    virtual ~Policy() = default;
    virtual Mode mode() const = 0;
    // Returns an action-space value (Mode::action) or shares (Mode::quantity).
    // Must be stateless across calls so episodes can run on any worker.
    virtual double decide(const Observation& obs, const ScheduleContext& ctx,
                          Rng& rng) const = 0;
    virtual std::string name() const = 0;
};

// Expected volume over the order's window from the trailing profile.
double expected_window_volume(const ScheduleContext& ctx);

class TwapPolicy final : public Policy {
public:
    Mode mode() const override { return Mode::quantity; }
    double decide(const Observation&, const ScheduleContext& ctx, Rng&) const override;
    std::string name() const override { return "twap"; }
};

class VwapPolicy final : public Policy {
public:
    Mode mode() const override { return Mode::quantity; }
    double decide(const Observation&, const ScheduleContext& ctx, Rng&) const override;
    std::string name() const override { return "vwap"; }
};

class PovPolicy final : public Policy {
public:
    Mode mode() const override { return Mode::quantity; }
    double decide(const Observation&, const ScheduleContext& ctx, Rng&) const override;
    std::string name() const override { return "pov"; }
};

class RandomPolicy final : public Policy {
public:
    Mode mode() const override { return Mode::action; }
    double decide(const Observation&, const ScheduleContext&, Rng& rng) const override;
    std::string name() const override { return "random"; }
};

// twap | vwap | pov | random; throws std::invalid_argument otherwise.
std::unique_ptr<Policy> make_baseline(const std::string& name);

}  // namespace geo
