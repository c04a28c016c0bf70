#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pdf/distributions.hpp"
#include "pdf/pk.hpp"
#include "pdf/rng.hpp"
#include "pdf/tox.hpp"

namespace pdf {

/// Population family g(. | alpha, lambda) for V_i or k_i.
enum class PkFamily { Gamma, LogNormal };

struct LogNormalParams {
    double mu;
    double sigma2;
};

/// Log-normal with the same mean and variance as Gamma(alpha, rate lambda).
LogNormalParams gamma_to_lognormal(double alpha, double lambda);

/*
 * Priors and hyperpriors of the hierarchical PK/toxicity model.
 *
 * V_i ~ g(alpha_v, lambda_v) and k_i ~ g(alpha_k, lambda_k), where g is a
 * Gamma with shape alpha and rate lambda, or the moment-matched log-normal.
 * Defaults: alpha_v ~ Gamma(4,1), lambda_v ~ Gamma(1,1), alpha_k ~ Gamma(3,1),
 * lambda_k ~ Gamma(1,1), sigma ~ Gamma(3,3), beta0 ~ N(-3, var 100),
 * beta1 ~ LogNormal(-1, var 2).
 */
struct PriorSpec {
    PkFamily v_family = PkFamily::Gamma;
    PkFamily k_family = PkFamily::Gamma;
    ScalarPrior alpha_v = ScalarPrior::gamma(4, 1);
    ScalarPrior lambda_v = ScalarPrior::gamma(1, 1);
    ScalarPrior alpha_k = ScalarPrior::gamma(3, 1);
    ScalarPrior lambda_k = ScalarPrior::gamma(1, 1);
    ScalarPrior sigma = ScalarPrior::gamma(3, 3);
    ScalarPrior beta0 = ScalarPrior::normal(-3, 100);
    ScalarPrior beta1 = ScalarPrior::lognormal(-1, 2);
    Conventions conventions;

    void validate() const;
    bool operator==(const PriorSpec&) const = default;
};

/// Log density of one patient's PK parameter under its population law.
double pk_population_logpdf(PkFamily family, double x, double alpha,
                            double lambda, const Conventions& conv);
double sample_pk_population(PkFamily family, double alpha, double lambda,
                            Philox4x32& rng, const Conventions& conv);

/// One joint draw of every model parameter.
struct ThetaDraw {
    std::vector<double> v;
    std::vector<double> k;
    double alpha_v = 0, lambda_v = 0, alpha_k = 0, lambda_k = 0;
    double beta0 = 0, beta1 = 0;
    double sigma = 0;

    /// Positivity of every constrained component.
    bool valid() const;
    bool operator==(const ThetaDraw&) const = default;
};

struct PatientRecord {
    std::size_t dose_level = 0;
    std::vector<ConcentrationObs> obs;
    std::optional<int> dlt;

    bool operator==(const PatientRecord&) const = default;
};

struct Dataset {
    DoseGrid grid = DoseGrid::standard();
    std::vector<PatientRecord> patients;

    /// Dose levels in range and DLT values binary.
    void validate() const;
    double dose_of(std::size_t patient) const {
        return grid[patients.at(patient).dose_level];
    }
};

/*
 * Unnormalized joint log posterior: concentration likelihood, Bernoulli DLT
 * likelihood, population densities of each V_i, k_i, and the hyperprior and
 * coefficient priors. Patients without concentration samples or without a
 * DLT outcome simply omit that factor. Returns -inf outside the support.
 * With include_likelihood = false only the prior terms are summed.
 */
double log_posterior(const ThetaDraw& theta, const Dataset& data,
                     const PriorSpec& prior, bool include_likelihood = true);

struct McmcConfig {
    std::size_t burn_in = 2000;
    std::size_t draws = 2000;
    std::size_t thin = 1;
    double target_accept = 0.35;
    /// Post-adaptation acceptance outside [accept_low, accept_high] is reported.
    double accept_low = 0.1;
    double accept_high = 0.7;
    double rhat_threshold = 1.1;
    bool use_likelihood = true;
    /// Warm start; patients beyond init.v.size() get a data-driven start.
    std::optional<ThetaDraw> init;
};

struct PosteriorDraws {
    struct Metadata {
        std::size_t burn_in = 0;
        std::size_t thin = 1;
        std::uint64_t seed = 0;
        std::uint64_t stream = 0;
        std::map<std::string, double> acceptance;
        std::map<std::string, double> rhat;
        std::vector<std::string> warnings;

        bool operator==(const Metadata&) const = default;
    };

    std::vector<ThetaDraw> draws;
    Metadata meta;

    std::size_t size() const { return draws.size(); }
    bool empty() const { return draws.empty(); }
    bool operator==(const PosteriorDraws&) const = default;
};

/*
 * Adaptive random-walk Metropolis-within-Gibbs.
 *
 * Blocks: (log v_i, log k_i) per patient, (beta0, log beta1),
 * (log alpha_v, log lambda_v), (log alpha_k, log lambda_k), log sigma.
 * Each block adapts its proposal covariance and scale toward
 * config.target_accept during burn-in, then freezes. Parameters with a Point
 * prior stay fixed. Diagnostics land in meta.warnings; they never throw.
 */
PosteriorDraws sample_posterior(const Dataset& data, const PriorSpec& prior,
                                const McmcConfig& config, Philox4x32& rng);

/// Posterior predictive DLT probability per grid dose, averaging over draws
/// with the new patient's PK set to the per-draw mean over enrolled patients.
std::vector<double> predictive_dose_tox(const PosteriorDraws& draws,
                                        const DoseGrid& grid);

/// Same quantity with (V_new, k_new, beta) drawn through the prior hierarchy.
std::vector<double> sample_prior_predictive(const PriorSpec& prior,
                                            const DoseGrid& grid,
                                            std::size_t m, Philox4x32& rng);

struct PosteriorSummary {
    double beta0 = 0, beta1 = 0, sigma = 0;
    double alpha_v = 0, lambda_v = 0, alpha_k = 0, lambda_k = 0;
    std::vector<double> v;
    std::vector<double> k;
};

PosteriorSummary posterior_means(const PosteriorDraws& draws);

/// Split-chain potential scale reduction of a single chain.
double split_rhat(const std::vector<double>& chain);

}  // namespace pdf
