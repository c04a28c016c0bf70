#include "pdf/crm.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pdf {

namespace {

double log_likelihood(double beta, std::span<const CrmObservation> history,
                      const std::vector<double>& skeleton) {
    const double scale = std::exp(-beta);
    double ll = 0.0;
    for (const auto& obs : history) {
        double log_p = scale * std::log(skeleton[obs.level]);
        ll += obs.dlt ? log_p : std::log(-std::expm1(log_p));
    }
    return ll;
}

std::size_t nearest_level(const std::vector<double>& means, std::size_t limit,
                          double p_target) {
    std::size_t best = 0;
    for (std::size_t d = 1; d < limit; ++d)
        if (std::abs(means[d] - p_target) < std::abs(means[best] - p_target)) best = d;
    return best;
}

}  // namespace

void CrmConfig::validate() const {
    if (skeleton.size() < 2) throw std::invalid_argument("skeleton needs two or more levels");
    for (std::size_t d = 0; d < skeleton.size(); ++d) {
        if (!(skeleton[d] > 0.0 && skeleton[d] < 1.0))
            throw std::invalid_argument("skeleton values must lie in (0, 1)");
        if (d > 0 && !(skeleton[d] > skeleton[d - 1]))
            throw std::invalid_argument("skeleton must be strictly increasing");
    }
    if (!(prior_sd > 0.0)) throw std::invalid_argument("CRM prior sd must be positive");
}

std::vector<double> crm_posterior_means(std::span<const CrmObservation> history,
                                        const CrmConfig& config) {
    config.validate();
    for (const auto& obs : history) {
        if (obs.level >= config.skeleton.size())
            throw std::invalid_argument("CRM observation off the skeleton");
        if (obs.dlt != 0 && obs.dlt != 1) throw std::invalid_argument("DLT must be 0 or 1");
    }
    using Quad = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double inf = std::numeric_limits<double>::infinity();
    const double var = config.prior_sd * config.prior_sd;

    // Center the log weight at the prior mode so the integrand stays O(1).
    const double shift = log_likelihood(0.0, history, config.skeleton);
    auto weight = [&](double beta) {
        double lw = log_likelihood(beta, history, config.skeleton) - shift -
                    0.5 * beta * beta / var;
        return std::exp(lw);
    };
    const double z = Quad::integrate(weight, -inf, inf, 15, 1e-13);

    std::vector<double> means(config.skeleton.size());
    for (std::size_t d = 0; d < means.size(); ++d) {
        const double log_phi = std::log(config.skeleton[d]);
        auto f = [&](double beta) {
            double w = weight(beta);
            return w == 0.0 ? 0.0 : w * std::exp(std::exp(-beta) * log_phi);
        };
        means[d] = Quad::integrate(f, -inf, inf, 15, 1e-13) / z;
    }
    return means;
}

DoseDecision crm_next_dose(std::span<const CrmObservation> history,
                           const DoseTally& tally, std::size_t current,
                           const CrmConfig& crm, const EscalationConfig& esc) {
    if (tally.size() != crm.skeleton.size())
        throw std::invalid_argument("tally and skeleton differ in length");
    const auto means = crm_posterior_means(history, crm);
    std::vector<RuleTag> why{RuleTag::ModelArgmin};
    std::size_t level = nearest_level(means, means.size(), esc.p_target);
    if (crm.no_skip && level > current + 1) {
        level = current + 1;
        why.push_back(RuleTag::NoSkip);
    }
    if (crm.safety_guard) {
        const std::size_t limit = safe_limit(tally, esc);
        if (limit == 0) return DoseDecision::terminate(std::move(why));
        if (level >= limit) {
            level = limit - 1;
            why.push_back(RuleTag::SafetyExclusion);
        }
    }
    return DoseDecision::assign(level, std::move(why));
}

std::optional<std::size_t> crm_select_mtd(std::span<const CrmObservation> history,
                                          const DoseTally& tally,
                                          const CrmConfig& crm,
                                          const EscalationConfig& esc) {
    const auto means = crm_posterior_means(history, crm);
    const std::size_t limit = crm.safety_guard ? safe_limit(tally, esc) : means.size();
    if (limit == 0) return std::nullopt;
    return nearest_level(means, limit, esc.p_target);
}

}  // namespace pdf
