#include "pdf/pk.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace pdf {

namespace {

void require_finite(double x, const char* what) {
    if (!std::isfinite(x))
        throw std::invalid_argument(std::string(what) + " must be finite");
}

}  // namespace

PkParams::PkParams(double v, double k) : v_(v), k_(k) {
    require_finite(v, "volume of distribution");
    require_finite(k, "elimination rate");
    if (v <= 0.0 || k <= 0.0)
        throw std::invalid_argument("PK parameters must be positive");
}

DoseGrid::DoseGrid(std::vector<double> doses) : doses_(std::move(doses)) {
    if (doses_.size() < 2)
        throw std::invalid_argument("dose grid needs at least two levels");
    for (std::size_t i = 0; i < doses_.size(); ++i) {
        require_finite(doses_[i], "dose");
        if (doses_[i] <= 0.0)
            throw std::invalid_argument("doses must be positive");
        if (i > 0 && doses_[i] <= doses_[i - 1])
            throw std::invalid_argument("dose grid must be strictly increasing");
    }
}

DoseGrid DoseGrid::standard() { return DoseGrid({15, 30, 60, 90, 120}); }

ConcentrationObs::ConcentrationObs(double time_, double value_)
    : time(time_), value(value_) {
    require_finite(time_, "sampling time");
    require_finite(value_, "concentration");
    if (time_ <= 0.0)
        throw std::invalid_argument("sampling time must be positive");
    if (value_ <= 0.0)
        throw std::invalid_argument("observed concentration must be positive");
}

ObsNoise::ObsNoise(double sigma) : sigma_(sigma) {
    require_finite(sigma, "observation sigma");
    if (sigma <= 0.0)
        throw std::invalid_argument("observation sigma must be positive");
}

std::vector<double> standard_schedule() { return {1, 3, 5, 7, 12, 24}; }

double concentration(double dose, const PkParams& params, double t) {
    require_finite(dose, "dose");
    require_finite(t, "time");
    if (dose <= 0.0) throw std::invalid_argument("dose must be positive");
    if (t < 0.0) throw std::invalid_argument("time must be nonnegative");
    return dose / params.v() * std::exp(-params.k() * t);
}

double log_concentration(double dose, const PkParams& params, double t) {
    return std::log(dose) - std::log(params.v()) - params.k() * t;
}

double auc(double dose, const PkParams& params) {
    require_finite(dose, "dose");
    if (dose <= 0.0) throw std::invalid_argument("dose must be positive");
    return dose / (params.v() * params.k());
}

double log_concentration_loglik(std::span<const ConcentrationObs> obs,
                                double dose, const PkParams& params,
                                const ObsNoise& noise) {
    if (obs.empty()) throw NoDataError("no concentration observations");
    const double s = noise.sigma();
    const double norm = -std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
    double ll = 0.0;
    for (const auto& o : obs) {
        double r = std::log(o.value) - log_concentration(dose, params, o.time);
        ll += norm - 0.5 * (r * r) / (s * s);
    }
    return ll;
}

std::vector<ConcentrationObs> simulate_concentrations(
    double dose, const PkParams& params, const ObsNoise& noise,
    std::span<const double> schedule, Philox4x32& rng) {
    std::normal_distribution<double> eps(0.0, noise.sigma());
    std::vector<ConcentrationObs> out;
    out.reserve(schedule.size());
    for (double t : schedule) {
        double lc = log_concentration(dose, params, t);
        out.emplace_back(t, std::exp(lc + eps(rng)));
    }
    return out;
}

}  // namespace pdf
