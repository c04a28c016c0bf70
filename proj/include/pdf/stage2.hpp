#pragma once

#include <optional>
#include <vector>

#include "pdf/inference.hpp"
#include "pdf/stage1.hpp"

namespace pdf {

/// A new patient's measured or predicted PK parameters.
struct PkPrediction {
    enum class Source { Measured, Predicted };

    PkPrediction(double v_hat, double k_hat, Source source = Source::Measured);

    double v_hat;
    double k_hat;
    Source source;

    bool operator==(const PkPrediction&) const = default;
};

/// Standard deviations of the additive PK prediction errors.
struct PredictionErrorModel {
    double sd_v = 0.0;
    double sd_k = 0.0;

    /// One third of the population standard deviation of each parameter.
    static PredictionErrorModel from_population_variance(double var_v, double var_k);
};

/// inv_logit(beta0 + beta1 log(d / (v_hat k_hat))) for each grid dose.
std::vector<double> patient_tox_curve(const PkPrediction& pred,
                                      const ToxCoefs& beta_hat,
                                      const DoseGrid& grid);

/*
 * Individual dose: argmin |p_hat_d - p_target| over the admissible levels.
 * Exact ties take the lower level when both estimates exceed p_target, the
 * higher level otherwise. Terminates when no level is admissible.
 */
DoseDecision assign_precision_dose(std::span<const double> curve,
                                   const DoseTally& tally,
                                   const EscalationConfig& config);

/// Zero-mean normal with standard deviation sd, truncated to (lower, inf).
/// Requires lower < 0.
double sample_truncated_normal(double sd, double lower, Philox4x32& rng);

/// Adds truncated-normal errors to the true PK so the prediction stays positive.
PkPrediction perturb_pk(const PkParams& truth, const PredictionErrorModel& err,
                        Philox4x32& rng);

/// Data and bookkeeping the precision stage works on.
struct PrecisionState {
    Dataset data;
    DoseTally tally;
    EscalationConfig escalation;
    std::optional<PosteriorDraws> draws;
    /// Number of patients the current draws were fitted on.
    std::size_t fitted_patients = 0;
    bool terminated = false;

    PrecisionState(DoseGrid grid, EscalationConfig esc)
        : data{std::move(grid), {}}, tally(data.grid.size()), escalation(esc) {}
};

struct Stage2Config {
    McmcConfig mcmc;
    /// Start each refit from the last draw of the previous chain.
    bool warm_start = true;
};

struct Stage2Step {
    DoseDecision decision;
    ToxCoefs beta_hat{};
    std::vector<double> curve;
};

/// Decision from fixed posterior draws; no state is touched.
Stage2Step precision_decision(const PosteriorDraws& draws, const PkPrediction& pred,
                              const DoseTally& tally, const EscalationConfig& esc,
                              const DoseGrid& grid);

/// Refit the posterior when new outcomes arrived since the last fit, then
/// decide the dose for the incoming patient.
Stage2Step run_stage2_step(PrecisionState& state, const PkPrediction& pred,
                           const PriorSpec& prior, const Stage2Config& config,
                           Philox4x32& rng);

/// Append the treated patient's data; the next step's refit includes it.
void record_outcome(PrecisionState& state, PatientRecord record);

/// Fit (or warm-refit) the posterior on everything recorded so far.
void refit(PrecisionState& state, const PriorSpec& prior,
           const Stage2Config& config, Philox4x32& rng);

}  // namespace pdf
