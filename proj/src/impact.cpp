#include "geo/impact.hpp"

namespace geo {

ImpactForm form_from_name(const std::string& s) {
    if (s == "linear") return ImpactForm::linear;
    if (s == "sqrt") return ImpactForm::sqrt;
    throw std::invalid_argument("unknown impact form: " + s);
}

double instant_impact(double q, double V, const ImpactParams& p) {
    if (V <= 0.0) throw std::domain_error("instant_impact: market volume must be > 0");
    if (q < 0.0) throw std::domain_error("instant_impact: quantity must be >= 0");
    double part = q / V;
    return p.form == ImpactForm::linear ? p.gamma * part : p.gamma * std::sqrt(part);
}

double kernel_weight(double lag, const ImpactParams& p) {
    if (lag < 0.0) throw std::domain_error("kernel_weight: lag must be >= 0");
    return p.g0 * std::exp(-lag / p.tau);
}

ImpactState propagate_state(ImpactState s, double q, double V, double sign,
                            double advance, const ImpactParams& p) {
    s.advance(advance, p);
    if (q > 0.0) s.apply_trade(q, V, sign, p);
    return s;
}

double fill_price(double p_vwap, int side, double impact) {
    if (p_vwap <= 0.0) throw std::domain_error("fill_price: price must be > 0");
    if (side != 1 && side != -1) throw std::domain_error("fill_price: side must be +/-1");
    return p_vwap * (1.0 + double(side) * impact);
}

}  // namespace geo
