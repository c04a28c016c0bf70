#include "pdf/inference.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace pdf {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

LogNormalParams gamma_to_lognormal(double alpha, double lambda) {
    if (!(alpha > 0.0) || !(lambda > 0.0))
        throw std::invalid_argument("gamma parameters must be positive");
    double m = alpha / lambda;
    double var = alpha / (lambda * lambda);
    double s2 = std::log1p(var / (m * m));
    return {std::log(m) - 0.5 * s2, s2};
}

void PriorSpec::validate() const {
    alpha_v.validate("alpha_v");
    lambda_v.validate("lambda_v");
    alpha_k.validate("alpha_k");
    lambda_k.validate("lambda_k");
    sigma.validate("sigma");
    beta0.validate("beta0");
    beta1.validate("beta1");
    const std::pair<const ScalarPrior*, const char*> positive[] = {
        {&alpha_v, "alpha_v"}, {&lambda_v, "lambda_v"}, {&alpha_k, "alpha_k"},
        {&lambda_k, "lambda_k"}, {&sigma, "sigma"},     {&beta1, "beta1"}};
    for (auto [p, name] : positive) {
        if (!p->positive_support())
            throw std::invalid_argument(std::string("prior ") + name +
                                        " must have positive support");
    }
}

double pk_population_logpdf(PkFamily family, double x, double alpha,
                            double lambda, const Conventions& conv) {
    double rate = gamma_rate(lambda, conv);
    if (family == PkFamily::Gamma) return gamma_logpdf(x, alpha, rate);
    auto ln = gamma_to_lognormal(alpha, rate);
    return lognormal_logpdf(x, ln.mu, std::sqrt(ln.sigma2));
}

double sample_pk_population(PkFamily family, double alpha, double lambda,
                            Philox4x32& rng, const Conventions& conv) {
    double rate = gamma_rate(lambda, conv);
    if (family == PkFamily::Gamma)
        return std::gamma_distribution<double>(alpha, 1.0 / rate)(rng);
    auto ln = gamma_to_lognormal(alpha, rate);
    return std::lognormal_distribution<double>(ln.mu, std::sqrt(ln.sigma2))(rng);
}

bool ThetaDraw::valid() const {
    if (v.size() != k.size()) return false;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0) || !(k[i] > 0.0)) return false;
    return alpha_v > 0.0 && lambda_v > 0.0 && alpha_k > 0.0 &&
           lambda_k > 0.0 && sigma > 0.0 && std::isfinite(beta0) &&
           std::isfinite(beta1);
}

void Dataset::validate() const {
    for (const auto& p : patients) {
        if (p.dose_level >= grid.size())
            throw std::invalid_argument("patient dose level outside the grid");
        if (p.dlt && *p.dlt != 0 && *p.dlt != 1)
            throw std::invalid_argument("DLT outcome must be 0 or 1");
    }
}

double log_posterior(const ThetaDraw& theta, const Dataset& data,
                     const PriorSpec& prior, bool include_likelihood) {
    if (theta.v.size() != data.patients.size() ||
        theta.k.size() != data.patients.size())
        throw std::invalid_argument("theta does not match the patient count");
    if (!theta.valid()) return kNegInf;
    const auto& conv = prior.conventions;

    double lp = 0.0;
    lp += log_density(prior.alpha_v, theta.alpha_v, conv);
    lp += log_density(prior.lambda_v, theta.lambda_v, conv);
    lp += log_density(prior.alpha_k, theta.alpha_k, conv);
    lp += log_density(prior.lambda_k, theta.lambda_k, conv);
    lp += log_density(prior.sigma, theta.sigma, conv);
    lp += log_density(prior.beta0, theta.beta0, conv);
    lp += log_density(prior.beta1, theta.beta1, conv);
    if (lp == kNegInf) return kNegInf;

    const ObsNoise noise(theta.sigma);
    const ToxCoefs coefs{theta.beta0, theta.beta1};
    for (std::size_t i = 0; i < data.patients.size(); ++i) {
        const auto& rec = data.patients[i];
        lp += pk_population_logpdf(prior.v_family, theta.v[i], theta.alpha_v,
                                   theta.lambda_v, conv);
        lp += pk_population_logpdf(prior.k_family, theta.k[i], theta.alpha_k,
                                   theta.lambda_k, conv);
        if (!include_likelihood) continue;
        const PkParams pk(theta.v[i], theta.k[i]);
        double dose = data.dose_of(i);
        if (!rec.obs.empty())
            lp += log_concentration_loglik(rec.obs, dose, pk, noise);
        if (rec.dlt) lp += dlt_loglik(DltOutcome(*rec.dlt), dose, pk, coefs);
    }
    return std::isnan(lp) ? kNegInf : lp;
}

std::vector<double> predictive_dose_tox(const PosteriorDraws& draws,
                                        const DoseGrid& grid) {
    if (draws.empty()) throw std::invalid_argument("no posterior draws");
    std::vector<double> p(grid.size(), 0.0);
    for (const auto& th : draws.draws) {
        if (th.v.empty())
            throw std::invalid_argument(
                "posterior draws carry no enrolled patients; use the prior "
                "predictive instead");
        double n = static_cast<double>(th.v.size());
        double v_new = std::accumulate(th.v.begin(), th.v.end(), 0.0) / n;
        double k_new = std::accumulate(th.k.begin(), th.k.end(), 0.0) / n;
        double log_vk = std::log(v_new * k_new);
        const ToxCoefs coefs{th.beta0, th.beta1};
        for (std::size_t d = 0; d < grid.size(); ++d)
            p[d] += tox_prob_log_auc(std::log(grid[d]) - log_vk, coefs);
    }
    for (auto& x : p) x /= static_cast<double>(draws.size());
    return p;
}

std::vector<double> sample_prior_predictive(const PriorSpec& prior,
                                            const DoseGrid& grid,
                                            std::size_t m, Philox4x32& rng) {
    if (m == 0) throw std::invalid_argument("need at least one prior draw");
    prior.validate();
    const auto& conv = prior.conventions;
    std::vector<double> p(grid.size(), 0.0);
    for (std::size_t s = 0; s < m; ++s) {
        double av = sample(prior.alpha_v, rng, conv);
        double lv = sample(prior.lambda_v, rng, conv);
        double ak = sample(prior.alpha_k, rng, conv);
        double lk = sample(prior.lambda_k, rng, conv);
        double v_new = sample_pk_population(prior.v_family, av, lv, rng, conv);
        double k_new = sample_pk_population(prior.k_family, ak, lk, rng, conv);
        const ToxCoefs coefs{sample(prior.beta0, rng, conv),
                             sample(prior.beta1, rng, conv)};
        double log_vk = std::log(v_new) + std::log(k_new);
        for (std::size_t d = 0; d < grid.size(); ++d)
            p[d] += tox_prob_log_auc(std::log(grid[d]) - log_vk, coefs);
    }
    for (auto& x : p) x /= static_cast<double>(m);
    return p;
}

PosteriorSummary posterior_means(const PosteriorDraws& draws) {
    if (draws.empty()) throw std::invalid_argument("no posterior draws");
    PosteriorSummary s;
    const std::size_t n = draws.draws.front().v.size();
    s.v.assign(n, 0.0);
    s.k.assign(n, 0.0);
    for (const auto& th : draws.draws) {
        s.beta0 += th.beta0;
        s.beta1 += th.beta1;
        s.sigma += th.sigma;
        s.alpha_v += th.alpha_v;
        s.lambda_v += th.lambda_v;
        s.alpha_k += th.alpha_k;
        s.lambda_k += th.lambda_k;
        for (std::size_t i = 0; i < n; ++i) {
            s.v[i] += th.v.at(i);
            s.k[i] += th.k.at(i);
        }
    }
    const double m = static_cast<double>(draws.size());
    for (double* x : {&s.beta0, &s.beta1, &s.sigma, &s.alpha_v, &s.lambda_v,
                      &s.alpha_k, &s.lambda_k})
        *x /= m;
    for (std::size_t i = 0; i < n; ++i) {
        s.v[i] /= m;
        s.k[i] /= m;
    }
    return s;
}

double split_rhat(const std::vector<double>& chain) {
    const std::size_t half = chain.size() / 2;
    if (half < 2) return std::numeric_limits<double>::quiet_NaN();
    double mean[2], var[2];
    for (int h = 0; h < 2; ++h) {
        auto first = chain.begin() + static_cast<std::ptrdiff_t>(h * half);
        auto last = first + static_cast<std::ptrdiff_t>(half);
        mean[h] = std::accumulate(first, last, 0.0) / static_cast<double>(half);
        double ss = 0.0;
        for (auto it = first; it != last; ++it)
            ss += (*it - mean[h]) * (*it - mean[h]);
        var[h] = ss / static_cast<double>(half - 1);
    }
    double n = static_cast<double>(half);
    double w = 0.5 * (var[0] + var[1]);
    double grand = 0.5 * (mean[0] + mean[1]);
    double b = n * ((mean[0] - grand) * (mean[0] - grand) +
                    (mean[1] - grand) * (mean[1] - grand));
    if (w <= 0.0) return b > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
    double var_plus = (n - 1.0) / n * w + b / n;
    return std::sqrt(var_plus / w);
}

}  // namespace pdf
