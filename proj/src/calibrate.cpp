#include <algorithm>
#include <cmath>

#include "geo/csvio.hpp"
#include "geo/impact.hpp"

namespace geo {

namespace {

// |x|^beta with the sign carried through.
std::vector<double> signed_power(const std::vector<double>& x, double beta) {
    std::vector<double> s(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        double v = x[i];
        if (is_missing(v) || v == 0.0) continue;
        double m = std::pow(std::fabs(v), beta);
        s[i] = v > 0 ? m : -m;
    }
    return s;
}

struct FitData {
    const std::vector<double>* r;
    const std::vector<double>* s;
    std::vector<int> targets;  // indices with a usable return and full lag window
    int L;
};

// Predictor at one target: X_t(tau) = sum_{l=1..L} exp(-l/tau) * s[t-l]
double predictor_at(const FitData& d, int t, const std::vector<double>& w) {
    const auto& s = *d.s;
    double x = 0.0;
    for (int l = 1; l <= d.L; ++l) x += w[std::size_t(l)] * s[std::size_t(t - l)];
    return x;
}

std::vector<double> lag_weights(double tau, int L) {
    std::vector<double> w(std::size_t(L) + 1, 0.0);
    for (int l = 1; l <= L; ++l) w[std::size_t(l)] = std::exp(-double(l) / tau);
    return w;
}

struct SseFit {
    double g0 = 0.0;
    double sse = 0.0;
};

// Closed-form G0 >= 0 for fixed tau over targets [lo, hi).
SseFit fit_at_tau(const FitData& d, double tau, std::size_t lo, std::size_t hi) {
    auto w = lag_weights(tau, d.L);
    const auto& r = *d.r;
    double sxx = 0.0, sxr = 0.0;
    std::vector<double> xs(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
        double x = predictor_at(d, d.targets[i], w);
        xs[i - lo] = x;
        sxx += x * x;
        sxr += x * r[std::size_t(d.targets[i])];
    }
    SseFit out;
    out.g0 = sxx > 0.0 ? std::max(0.0, sxr / sxx) : 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        double e = r[std::size_t(d.targets[i])] - out.g0 * xs[i - lo];
        out.sse += e * e;
    }
    return out;
}

struct TauFit {
    double tau = 0.0;
    double g0 = 0.0;
    bool at_bound = false;
};

// Log-spaced grid then golden-section refinement between the flanking knots.
TauFit search_tau(const FitData& d, const CalibConfig& cfg, std::size_t lo, std::size_t hi) {
    int n = std::max(cfg.tau_grid, 8);
    double llo = std::log(cfg.tau_lo), lhi = std::log(cfg.tau_hi);
    std::vector<double> grid(std::size_t(n), 0.0);
    std::vector<double> sse(std::size_t(n), 0.0);
    int best = 0;
    for (int i = 0; i < n; ++i) {
        grid[std::size_t(i)] = std::exp(llo + (lhi - llo) * double(i) / double(n - 1));
        sse[std::size_t(i)] = fit_at_tau(d, grid[std::size_t(i)], lo, hi).sse;
        if (sse[std::size_t(i)] < sse[std::size_t(best)]) best = i;
    }
    double a = std::log(grid[std::size_t(std::max(0, best - 1))]);
    double b = std::log(grid[std::size_t(std::min(n - 1, best + 1))]);
    const double gr = 0.6180339887498949;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = fit_at_tau(d, std::exp(x1), lo, hi).sse;
    double f2 = fit_at_tau(d, std::exp(x2), lo, hi).sse;
    for (int it = 0; it < 24; ++it) {
        if (f1 < f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - gr * (b - a);
            f1 = fit_at_tau(d, std::exp(x1), lo, hi).sse;
        } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + gr * (b - a);
            f2 = fit_at_tau(d, std::exp(x2), lo, hi).sse;
        }
    }
    TauFit out;
    out.tau = std::exp(0.5 * (a + b));
    auto ff = fit_at_tau(d, out.tau, lo, hi);
    // keep the grid winner if refinement did not help
    if (sse[std::size_t(best)] < ff.sse) {
        out.tau = grid[std::size_t(best)];
        ff = fit_at_tau(d, out.tau, lo, hi);
    }
    out.g0 = ff.g0;
    double span = lhi - llo;
    out.at_bound = std::log(out.tau) < llo + 0.005 * span ||
                   std::log(out.tau) > lhi - 0.005 * span;
    return out;
}

double r2_on(const FitData& d, double g0, double tau, std::size_t lo, std::size_t hi) {
    auto w = lag_weights(tau, d.L);
    const auto& r = *d.r;
    double mean = 0.0;
    for (std::size_t i = lo; i < hi; ++i) mean += r[std::size_t(d.targets[i])];
    mean /= double(hi - lo);
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        double y = r[std::size_t(d.targets[i])];
        double x = predictor_at(d, d.targets[i], w);
        sse += (y - g0 * x) * (y - g0 * x);
        sst += (y - mean) * (y - mean);
    }
    if (sst <= 0.0) return 0.0;
    return 1.0 - sse / sst;
}

}  // namespace

CalibResult calibrate_propagator(const std::vector<double>& returns,
                                 const std::vector<double>& signed_participation,
                                 ImpactForm form, const CalibConfig& cfg) {
    if (returns.size() != signed_participation.size())
        throw CalibError("returns and participation must align");
    if (cfg.folds < 2) throw CalibError("folds must be >= 2");
    if (cfg.max_lag < 1) throw CalibError("max_lag must be >= 1");

    ImpactParams proto;
    proto.form = form;
    auto s = signed_power(signed_participation, proto.beta());

    FitData d;
    d.r = &returns;
    d.s = &s;
    d.L = cfg.max_lag;
    for (int t = cfg.max_lag; t < int(returns.size()); ++t)
        if (!is_missing(returns[std::size_t(t)])) d.targets.push_back(t);

    std::size_t n = d.targets.size();
    if (n < std::size_t(cfg.folds) * 8)
        throw CalibError("too few usable observations: " + std::to_string(n));

    double rmean = 0.0;
    for (int t : d.targets) rmean += returns[std::size_t(t)];
    rmean /= double(n);
    double rvar = 0.0;
    for (int t : d.targets) {
        double e = returns[std::size_t(t)] - rmean;
        rvar += e * e;
    }
    if (rvar <= 0.0) throw CalibError("degenerate returns (zero variance)");
    bool any_flow = std::any_of(s.begin(), s.end(), [](double v) { return v != 0.0; });
    if (!any_flow) throw CalibError("degenerate participation (no signed flow)");

    // walk-forward: fit on blocks [0..k), score on block k
    std::vector<double> fold_r2;
    for (int k = 1; k < cfg.folds; ++k) {
        std::size_t train_hi = n * std::size_t(k) / std::size_t(cfg.folds);
        std::size_t test_hi = n * std::size_t(k + 1) / std::size_t(cfg.folds);
        auto tf = search_tau(d, cfg, 0, train_hi);
        fold_r2.push_back(r2_on(d, tf.g0, tf.tau, train_hi, test_hi));
    }

    auto tf = search_tau(d, cfg, 0, n);
    CalibResult out;
    out.params.form = form;
    out.params.gamma = 1.0;  // identifiability: the product is reported as g0
    out.params.g0 = tf.g0;
    out.params.tau = tf.tau;
    out.params.r2_bar = mean_of(fold_r2);
    out.params.retained = out.params.r2_bar > cfg.retention_r2 && !tf.at_bound;
    out.fold_r2 = std::move(fold_r2);
    out.n_obs = int(n);
    return out;
}

CalibrationReport compare_impact_forms(const std::map<std::string, CalibSeries>& universe,
                                       const std::vector<int>& lag_grid,
                                       const CalibConfig& cfg, int workers) {
    struct Job {
        const std::string* symbol;
        const CalibSeries* series;
        ImpactForm form;
        int max_lag;
    };
    std::vector<Job> jobs;
    for (const auto& [sym, series] : universe)
        for (ImpactForm form : {ImpactForm::linear, ImpactForm::sqrt})
            for (int L : lag_grid) jobs.push_back({&sym, &series, form, L});

    struct JobOut {
        bool ok = false;
        CalibResult res;
    };
    std::vector<JobOut> outs(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t i) {
        CalibConfig c = cfg;
        c.max_lag = jobs[i].max_lag;
        try {
            outs[i].res = calibrate_propagator(jobs[i].series->returns,
                                               jobs[i].series->participation,
                                               jobs[i].form, c);
            outs[i].ok = true;
        } catch (const CalibError& e) {
            log_warn("calibration failed for " + *jobs[i].symbol + " (" +
                     form_name(jobs[i].form) + ", L=" + std::to_string(jobs[i].max_lag) +
                     "): " + e.what());
        }
    });

    CalibrationReport rep;
    std::map<std::pair<int, int>, std::pair<double, int>> agg;  // (form, L) -> (sum r2, count)
    std::map<std::string, std::size_t> best;                    // symbol -> job index
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!outs[i].ok) continue;
        auto key = std::make_pair(int(jobs[i].form), jobs[i].max_lag);
        agg[key].first += outs[i].res.params.r2_bar;
        agg[key].second += 1;
        auto it = best.find(*jobs[i].symbol);
        if (it == best.end() ||
            outs[i].res.params.r2_bar > outs[it->second].res.params.r2_bar)
            best[*jobs[i].symbol] = i;
    }
    for (const auto& [key, sc] : agg) {
        FormLagSummary s;
        s.form = ImpactForm(key.first);
        s.max_lag = key.second;
        s.mean_r2 = sc.first / double(sc.second);
        s.n_symbols = sc.second;
        rep.summaries.push_back(s);
    }
    // winner: higher mean of per-symbol best r2_bar under each form
    double sum_lin = 0, sum_sqrt = 0;
    int n_lin = 0, n_sqrt = 0;
    for (const auto& [sym, idx] : best) {
        double best_lin = -1e30, best_sq = -1e30;
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (*jobs[i].symbol != sym || !outs[i].ok) continue;
            double r2 = outs[i].res.params.r2_bar;
            if (jobs[i].form == ImpactForm::linear) best_lin = std::max(best_lin, r2);
            else best_sq = std::max(best_sq, r2);
        }
        if (best_lin > -1e29) { sum_lin += best_lin; ++n_lin; }
        if (best_sq > -1e29) { sum_sqrt += best_sq; ++n_sqrt; }
    }
    rep.winning_form =
        (n_sqrt > 0 && (n_lin == 0 || sum_sqrt / n_sqrt >= sum_lin / n_lin))
            ? ImpactForm::sqrt
            : ImpactForm::linear;

    for (const auto& [sym, idx] : best) {
        SymbolCalibration sc;
        sc.symbol = sym;
        sc.params = outs[idx].res.params;
        sc.max_lag = jobs[idx].max_lag;
        sc.fold_r2 = outs[idx].res.fold_r2;
        rep.symbols.push_back(std::move(sc));
        if (rep.symbols.back().params.retained) rep.retained.push_back(sym);
    }
    return rep;
}

void save_calibration_csv(const std::string& path,
                          const std::vector<SymbolCalibration>& rows) {
    CsvWriter w(path);
    w.header({"symbol", "form", "gamma", "beta", "g0", "tau", "r2_bar", "retained"});
    for (const auto& r : rows) {
        w.field(r.symbol);
        w.field(std::string(form_name(r.params.form)));
        w.field(r.params.gamma);
        w.field(r.params.beta());
        w.field(r.params.g0);
        w.field(r.params.tau);
        w.field(r.params.r2_bar);
        w.field(r.params.retained ? 1 : 0);
        w.end_row();
    }
}

std::map<std::string, ImpactParams> load_calibration_csv(const std::string& path) {
    CsvReader rd(path);
    if (!rd.ok()) throw std::runtime_error("cannot open calibration store: " + path);
    std::vector<std::string> f;
    if (!rd.next(f) || f.size() != 8 || f[0] != "symbol")
        throw std::runtime_error("bad calibration store header: " + path);
    std::map<std::string, ImpactParams> out;
    while (rd.next(f)) {
        if (f.size() != 8)
            throw std::runtime_error(path + ":" + std::to_string(rd.line_no()) +
                                     ": bad column count");
        ImpactParams p;
        p.form = form_from_name(f[1]);
        double beta;
        long retained;
        if (!csv_parse_double(f[2], p.gamma) || !csv_parse_double(f[3], beta) ||
            !csv_parse_double(f[4], p.g0) || !csv_parse_double(f[5], p.tau) ||
            !csv_parse_double(f[6], p.r2_bar) || !csv_parse_long(f[7], retained))
            throw std::runtime_error(path + ":" + std::to_string(rd.line_no()) +
                                     ": bad numeric field");
        p.retained = retained != 0;
        out[f[0]] = p;
    }
    return out;
}

}  // namespace geo
