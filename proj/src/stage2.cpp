#include "pdf/stage2.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace pdf {

namespace {
constexpr double kTieEps = 1e-12;
}  // namespace

PkPrediction::PkPrediction(double v, double k, Source src)
    : v_hat(v), k_hat(k), source(src) {
    if (!std::isfinite(v) || !std::isfinite(k) || v <= 0.0 || k <= 0.0)
        throw std::invalid_argument("predicted PK parameters must be positive");
}

PredictionErrorModel PredictionErrorModel::from_population_variance(double var_v,
                                                                    double var_k) {
    return {std::sqrt(var_v) / 3.0, std::sqrt(var_k) / 3.0};
}

std::vector<double> patient_tox_curve(const PkPrediction& pred,
                                      const ToxCoefs& beta_hat,
                                      const DoseGrid& grid) {
    const double log_vk = std::log(pred.v_hat) + std::log(pred.k_hat);
    std::vector<double> curve(grid.size());
    for (std::size_t d = 0; d < grid.size(); ++d)
        curve[d] = tox_prob_log_auc(std::log(grid[d]) - log_vk, beta_hat);
    return curve;
}

DoseDecision assign_precision_dose(std::span<const double> curve,
                                   const DoseTally& tally,
                                   const EscalationConfig& config) {
    if (curve.size() != tally.size())
        throw std::invalid_argument("curve must have one entry per dose");
    std::vector<RuleTag> why{RuleTag::PrecisionArgmin};
    const std::size_t limit = safe_limit(tally, config);
    if (limit == 0) return DoseDecision::terminate(std::move(why));

    const double pt = config.p_target;
    std::size_t unrestricted = 0;
    for (std::size_t d = 1; d < curve.size(); ++d)
        if (std::abs(curve[d] - pt) < std::abs(curve[unrestricted] - pt) - kTieEps)
            unrestricted = d;

    std::size_t best = 0;
    for (std::size_t d = 1; d < limit; ++d) {
        double db = std::abs(curve[best] - pt);
        double dd = std::abs(curve[d] - pt);
        if (dd < db - kTieEps) {
            best = d;
        } else if (dd <= db + kTieEps) {
            // tie: lower level only when both exceed the target
            if (!(curve[best] > pt && curve[d] > pt)) best = d;
        }
    }
    if (unrestricted >= limit) why.push_back(RuleTag::SafetyExclusion);
    return DoseDecision::assign(best, std::move(why));
}

double sample_truncated_normal(double sd, double lower, Philox4x32& rng) {
    if (sd == 0.0) return 0.0;
    if (!(lower < 0.0)) throw std::invalid_argument("truncation bound must be negative");
    // Acceptance probability is at least one half because the bound is below the mean.
    std::normal_distribution<double> z(0.0, sd);
    for (;;) {
        double e = z(rng);
        if (e > lower) return e;
    }
}

PkPrediction perturb_pk(const PkParams& truth, const PredictionErrorModel& err,
                        Philox4x32& rng) {
    if (err.sd_v < 0.0 || err.sd_k < 0.0)
        throw std::invalid_argument("prediction error sd must be nonnegative");
    double v = truth.v() + sample_truncated_normal(err.sd_v, -truth.v(), rng);
    double k = truth.k() + sample_truncated_normal(err.sd_k, -truth.k(), rng);
    return PkPrediction(v, k, PkPrediction::Source::Predicted);
}

Stage2Step precision_decision(const PosteriorDraws& draws, const PkPrediction& pred,
                              const DoseTally& tally, const EscalationConfig& esc,
                              const DoseGrid& grid) {
    const auto means = posterior_means(draws);
    Stage2Step step;
    step.beta_hat = {means.beta0, means.beta1};
    step.curve = patient_tox_curve(pred, step.beta_hat, grid);
    step.decision = assign_precision_dose(step.curve, tally, esc);
    return step;
}

void refit(PrecisionState& state, const PriorSpec& prior,
           const Stage2Config& config, Philox4x32& rng) {
    McmcConfig mcmc = config.mcmc;
    if (config.warm_start && state.draws && !state.draws->empty())
        mcmc.init = state.draws->draws.back();
    state.draws = sample_posterior(state.data, prior, mcmc, rng);
    state.fitted_patients = state.data.patients.size();
}

Stage2Step run_stage2_step(PrecisionState& state, const PkPrediction& pred,
                           const PriorSpec& prior, const Stage2Config& config,
                           Philox4x32& rng) {
    if (state.terminated) throw std::logic_error("trial already terminated");
    if (!state.draws || state.fitted_patients != state.data.patients.size())
        refit(state, prior, config, rng);
    auto step = precision_decision(*state.draws, pred, state.tally, state.escalation,
                                   state.data.grid);
    if (step.decision.terminated()) state.terminated = true;
    return step;
}

void record_outcome(PrecisionState& state, PatientRecord record) {
    if (!record.dlt) throw std::invalid_argument("outcome record needs a DLT value");
    state.tally.add(record.dose_level, *record.dlt);
    state.data.patients.push_back(std::move(record));
}

}  // namespace pdf
