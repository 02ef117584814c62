#pragma once

// Transient propagator impact model.
//
// One minute of signed flow leaves a price imprint that decays exponentially:
//   response at lag l = G0 * exp(-l/tau) * gamma * (q/V)^beta * sign
// The running sum of those imprints is the cumulative impact applied to fills.

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "geo/common.hpp"

namespace geo {

enum class ImpactForm { linear, sqrt };

inline const char* form_name(ImpactForm f) {
    return f == ImpactForm::linear ? "linear" : "sqrt";
}

ImpactForm form_from_name(const std::string& s);

struct ImpactParams {
    ImpactForm form = ImpactForm::sqrt;
    double gamma = 1.0;
    double g0 = 0.0;
    double tau = 1.0;
    double r2_bar = kMissing;
    bool retained = false;

    // beta is pinned by the functional form
    double beta() const { return form == ImpactForm::linear ? 1.0 : 0.5; }
};

// gamma * (q/V)^beta, the per-trade instantaneous imprint.
double instant_impact(double q, double V, const ImpactParams& p);

// G(l) = g0 * exp(-l/tau)
double kernel_weight(double lag, const ImpactParams& p);

// Recursive cumulative-impact state. Equivalent to the explicit lag sum over
// the full trade history (decay is multiplicative, new trades enter at lag 0).
struct ImpactState {
    double accumulator = 0.0;

    void advance(double minutes, const ImpactParams& p) {
        if (minutes < 0) throw std::invalid_argument("impact advance must be >= 0");
        if (minutes > 0) accumulator *= std::exp(-minutes / p.tau);
    }

    void apply_trade(double q, double V, double sign, const ImpactParams& p) {
        accumulator += p.g0 * sign * instant_impact(q, V, p);
    }
};

// Decay by `advance` minutes, then book the trade at lag 0.
ImpactState propagate_state(ImpactState s, double q, double V, double sign,
                            double advance, const ImpactParams& p);

// p_vwap * (1 + side * impact); side +1 buy / -1 sell.
double fill_price(double p_vwap, int side, double impact);

// ============================================================
// Calibration: constrained least squares on minute returns
// ============================================================

struct CalibError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CalibConfig {
    int max_lag = 20;
    int folds = 5;           // contiguous walk-forward blocks, >= 2
    double tau_lo = 0.5;     // minutes
    double tau_hi = 180.0;
    int tau_grid = 48;       // log-spaced candidates before local refinement
    double retention_r2 = 0.02;
};

struct CalibResult {
    ImpactParams params;          // gamma fixed at 1, product absorbed into g0
    std::vector<double> fold_r2;  // out-of-fold R^2, one per walk-forward step
    int n_obs = 0;
};

// returns[t] and signed_participation[t] are aligned per minute. NaN returns
// are skipped as regression targets; zero participation contributes nothing
// but the lag clock still advances. Throws CalibError on degenerate input.
CalibResult calibrate_propagator(const std::vector<double>& returns,
                                 const std::vector<double>& signed_participation,
                                 ImpactForm form, const CalibConfig& cfg);

// ============================================================
// Form / lag-grid comparison across a universe
// ============================================================

struct CalibSeries {
    std::vector<double> returns;
    std::vector<double> participation;  // signed, in [-1, 1]
};

struct SymbolCalibration {
    std::string symbol;
    ImpactParams params;  // best (form, max_lag) by r2_bar; retained flag set
    int max_lag = 0;
    std::vector<double> fold_r2;
};

struct FormLagSummary {
    ImpactForm form;
    int max_lag = 0;
    double mean_r2 = 0.0;
    int n_symbols = 0;
};

struct CalibrationReport {
    std::vector<SymbolCalibration> symbols;  // sorted by symbol
    std::vector<FormLagSummary> summaries;   // per (form, max_lag)
    ImpactForm winning_form = ImpactForm::sqrt;
    std::vector<std::string> retained;
};

CalibrationReport compare_impact_forms(const std::map<std::string, CalibSeries>& universe,
                                       const std::vector<int>& lag_grid,
                                       const CalibConfig& cfg, int workers = 1);

// Store round-trip (CSV: symbol,form,gamma,beta,g0,tau,r2_bar,retained).
void save_calibration_csv(const std::string& path,
                          const std::vector<SymbolCalibration>& rows);
std::map<std::string, ImpactParams> load_calibration_csv(const std::string& path);

}  // namespace geo
