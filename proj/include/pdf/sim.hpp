#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdf/crm.hpp"
#include "pdf/inference.hpp"
#include "pdf/stage1.hpp"
#include "pdf/stage2.hpp"

namespace pdf {

/// Generating law of (V, k) for virtual patients.
struct PkPopulation {
    PkFamily family = PkFamily::Gamma;
    double alpha_v = 4.0, lambda_v = 1.0;
    double alpha_k = 3.0, lambda_k = 1.0;

    double variance_v() const { return alpha_v / (lambda_v * lambda_v); }
    double variance_k() const { return alpha_k / (lambda_k * lambda_k); }
    PkParams sample(Philox4x32& rng) const;
    void validate() const;
    bool operator==(const PkPopulation&) const = default;
};

struct Scenario {
    std::string label;
    ToxCoefs true_coefs{-3.0, 1.5};
    PkPopulation pk;
    /// Observation noise on log concentrations; the default 0.5 is an assumption.
    double obs_sigma = 0.5;
    DoseGrid grid = DoseGrid::standard();
    std::vector<double> schedule = standard_schedule();

    void validate() const;
};

/// Built-in scenarios 1..5.
Scenario builtin_scenario(int index);
Scenario scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const Scenario& s);

/// Average over n_virtual population draws of the true toxicity at each dose.
std::vector<double> true_avg_pd(const Scenario& scenario, std::size_t n_virtual,
                                Philox4x32& rng);

/*
 * A virtual patient fixed before any dose is chosen: PK truth, the uniform
 * that decides the DLT (DLT iff u < p), and the generator state used for the
 * concentration noise. Two designs treating the same patient at the same dose
 * see the same outcome.
 */
struct VirtualPatient {
    PkParams truth{1.0, 1.0};
    double u = 0.0;
    Philox4x32 obs_rng;
};

VirtualPatient draw_virtual_patient(const Scenario& scenario, Philox4x32& rng);
PatientRecord simulate_outcome(const Scenario& scenario, const VirtualPatient& patient,
                               std::size_t level);

struct SimulatedPatient {
    PatientRecord record;
    PkParams truth;
};

SimulatedPatient simulate_patient(const Scenario& scenario, std::size_t level,
                                  Philox4x32& rng);

enum class Design { PDF, CRM };
std::string to_string(Design d);
Design parse_design(const std::string& s);

struct TrialConfig {
    EscalationConfig escalation;
    std::size_t n_stage2 = 9;
    PriorSpec prior;
    McmcConfig mcmc;
    bool warm_start = true;
    bool stage2_error = false;
    CrmConfig crm;
};

struct TrajectoryPoint {
    std::size_t patient;
    std::size_t level;
    int dlt;
    int stage;
    double v;
    double k;
};

struct TrialResult {
    DoseTally stage1;
    DoseTally stage2;
    std::optional<std::size_t> mtd;
    bool terminated = false;
    std::vector<TrajectoryPoint> trajectory;
    /// Posterior-mean coefficients behind the last Stage-II decision.
    std::optional<ToxCoefs> final_beta;
    /// Assignments to a level outside the admissible set at that moment.
    std::size_t excluded_assignments = 0;

    explicit TrialResult(std::size_t levels) : stage1(levels), stage2(levels) {}
};

/// One trial; replication selects the random streams so designs can be paired.
TrialResult run_trial(const Scenario& scenario, Design design, const TrialConfig& config,
                      std::uint64_t seed, std::uint32_t replication);

struct OperatingCharacteristics {
    std::string label;
    Design design = Design::PDF;
    std::size_t n_trials = 0;
    std::vector<double> true_avg;
    std::vector<double> sel;
    double no_selection = 0.0;
    double termination_rate = 0.0;
    std::vector<double> mean_n;
    std::vector<double> tox_rate;
    std::vector<double> stage2_mean_n;
    std::vector<double> stage2_tox_rate;
    /// Pooled DLT rate over every Stage-II patient.
    double stage2_pooled_rate = 0.0;
    /// Share of all Stage-I patients treated at each level.
    std::vector<double> stage1_share;
    /// Dose level and DLT counts of the last enrolled patient of full-size trials.
    std::vector<int> final_patient_n;
    std::vector<int> final_patient_y;
    /// Trajectory of the first replication.
    std::vector<TrajectoryPoint> example_trajectory;
    /// Summed over trials; any nonzero value is a rule-engine defect.
    std::size_t excluded_assignments = 0;
    std::optional<ToxCoefs> mean_final_beta;
};

/// Deterministic for a given seed regardless of the number of threads.
OperatingCharacteristics replicate(const Scenario& scenario, Design design,
                                   std::size_t n_trials, const TrialConfig& config,
                                   std::uint64_t seed, unsigned threads = 1);

/// Continuous predicted MTD v k exp((logit(p_target) - beta0) / beta1).
double predicted_mtd(double vk, const ToxCoefs& beta, double p_target);
/// The smallest grid dose at or above predicted_mtd; the top dose when none is.
std::size_t predicted_mtd_level(double vk, const ToxCoefs& beta, double p_target,
                                const DoseGrid& grid);

}  // namespace pdf
