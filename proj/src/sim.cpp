#include "pdf/sim.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace pdf {

using nlohmann::json;

namespace {

constexpr ToxCoefs kBuiltinCoefs[] = {
    {-3.0, 1.5}, {-4.0, 1.5}, {-4.5, 1.5}, {-2.5, 0.6}, {-1.0, 1.2},
};

std::string family_label(PkFamily f) { return f == PkFamily::Gamma ? "gamma" : "lognormal"; }

PkFamily family_from_label(const std::string& s) {
    if (s == "gamma") return PkFamily::Gamma;
    if (s == "lognormal") return PkFamily::LogNormal;
    throw std::invalid_argument("unknown PK population family: " + s);
}

// Simulation always reads population parameters as shape and rate.
const Conventions kShapeRate{};

struct TrialRunner {
    const Scenario& scenario;
    const TrialConfig& config;
    std::uint64_t seed;
    std::uint32_t rep;
    TrialResult result;
    std::size_t next_patient = 0;

    TrialRunner(const Scenario& s, const TrialConfig& c, std::uint64_t sd, std::uint32_t r)
        : scenario(s), config(c), seed(sd), rep(r), result(s.grid.size()) {}

    Philox4x32 stream(StreamPurpose purpose, std::size_t sub) const {
        return Philox4x32(seed, stream_id(rep, purpose, static_cast<std::uint32_t>(sub)));
    }

    VirtualPatient next_virtual() {
        auto rng = stream(StreamPurpose::Patient, next_patient);
        return draw_virtual_patient(scenario, rng);
    }

    // The admissible set is judged on the tally at decision time.
    void audit(std::size_t level, const DoseTally& at_decision) {
        if (level >= safe_limit(at_decision, config.escalation)) ++result.excluded_assignments;
    }

    PatientRecord treat(const VirtualPatient& vp, std::size_t level, int stage) {
        PatientRecord rec = simulate_outcome(scenario, vp, level);
        result.trajectory.push_back(
            {next_patient, level, *rec.dlt, stage, vp.truth.v(), vp.truth.k()});
        (stage == 1 ? result.stage1 : result.stage2).add(level, *rec.dlt);
        ++next_patient;
        return rec;
    }

    void run_pdf() {
        const auto& esc = config.escalation;
        PrecisionState state(scenario.grid, esc);
        Stage2Config s2{config.mcmc, config.warm_start};
        std::size_t fits = 0;
        std::size_t current = 0;

        for (std::size_t c = 0; c < esc.n_cohorts_stage1; ++c) {
            DoseDecision dec = first_cohort_dose();
            if (c > 0) {
                auto rng = stream(StreamPurpose::Mcmc, fits++);
                refit(state, config.prior, s2, rng);
                auto p_tilde = predictive_dose_tox(*state.draws, scenario.grid);
                dec = next_cohort_dose(state.tally, current, p_tilde, esc);
            }
            if (dec.terminated()) {
                result.terminated = true;
                return;
            }
            current = dec.level;
            audit(current, state.tally);
            for (std::size_t j = 0; j < esc.cohort_size; ++j) {
                auto vp = next_virtual();
                record_outcome(state, treat(vp, current, 1));
            }
        }
        if (safe_limit(state.tally, esc) == 0) {
            result.terminated = true;
            return;
        }
        result.mtd = select_mtd(state.tally, esc);

        const auto err = PredictionErrorModel::from_population_variance(
            scenario.pk.variance_v(), scenario.pk.variance_k());
        for (std::size_t j = 0; j < config.n_stage2; ++j) {
            auto vp = next_virtual();
            PkPrediction pred(vp.truth.v(), vp.truth.k());
            if (config.stage2_error) {
                auto erng = stream(StreamPurpose::PredictionError, j);
                pred = perturb_pk(vp.truth, err, erng);
            }
            auto rng = stream(StreamPurpose::Mcmc, fits++);
            auto step = run_stage2_step(state, pred, config.prior, s2, rng);
            if (step.decision.terminated()) {
                result.terminated = true;
                return;
            }
            result.final_beta = step.beta_hat;
            audit(step.decision.level, state.tally);
            record_outcome(state, treat(vp, step.decision.level, 2));
        }
    }

    void run_crm() {
        const auto& esc = config.escalation;
        std::vector<CrmObservation> history;
        DoseTally tally(scenario.grid.size());
        std::size_t current = 0;
        for (std::size_t c = 0; c < esc.n_cohorts_stage1; ++c) {
            DoseDecision dec = first_cohort_dose();
            if (c > 0) dec = crm_next_dose(history, tally, current, config.crm, esc);
            if (dec.terminated()) {
                result.terminated = true;
                return;
            }
            current = dec.level;
            if (config.crm.safety_guard) audit(current, tally);
            for (std::size_t j = 0; j < esc.cohort_size; ++j) {
                auto vp = next_virtual();
                auto rec = treat(vp, current, 1);
                tally.add(current, *rec.dlt);
                history.push_back({current, *rec.dlt});
            }
        }
        if (config.crm.safety_guard && safe_limit(tally, esc) == 0) {
            result.terminated = true;
            return;
        }
        result.mtd = crm_select_mtd(history, tally, config.crm, esc);
    }
};

}  // namespace

PkParams PkPopulation::sample(Philox4x32& rng) const {
    double v = sample_pk_population(family, alpha_v, lambda_v, rng, kShapeRate);
    double k = sample_pk_population(family, alpha_k, lambda_k, rng, kShapeRate);
    return PkParams(v, k);
}

void PkPopulation::validate() const {
    for (double x : {alpha_v, lambda_v, alpha_k, lambda_k})
        if (!(x > 0.0) || !std::isfinite(x))
            throw std::invalid_argument("PK population parameters must be positive");
}

void Scenario::validate() const {
    pk.validate();
    if (!(true_coefs.beta1 >= 0.0) || !std::isfinite(true_coefs.beta0))
        throw std::invalid_argument("scenario coefficients must be finite with beta1 >= 0");
    if (!(obs_sigma > 0.0)) throw std::invalid_argument("observation sigma must be positive");
    for (double t : schedule)
        if (!(t > 0.0)) throw std::invalid_argument("sampling times must be positive");
}

Scenario builtin_scenario(int index) {
    if (index < 1 || index > 5) throw std::invalid_argument("built-in scenarios are 1..5");
    Scenario s;
    s.label = "SC " + std::to_string(index);
    s.true_coefs = kBuiltinCoefs[index - 1];
    return s;
}

json scenario_to_json(const Scenario& s) {
    return json{
        {"label", s.label},
        {"beta0", s.true_coefs.beta0},
        {"beta1", s.true_coefs.beta1},
        {"pk_population",
         {{"family", family_label(s.pk.family)},
          {"alpha_v", s.pk.alpha_v},
          {"lambda_v", s.pk.lambda_v},
          {"alpha_k", s.pk.alpha_k},
          {"lambda_k", s.pk.lambda_k}}},
        {"obs_sigma", s.obs_sigma},
        {"grid", s.grid.doses()},
        {"schedule", s.schedule},
    };
}

Scenario scenario_from_json(const json& doc) {
    Scenario s;
    s.label = doc.value("label", std::string("custom"));
    s.true_coefs = {doc.at("beta0").get<double>(), doc.at("beta1").get<double>()};
    if (doc.contains("pk_population")) {
        const auto& p = doc["pk_population"];
        s.pk.family = family_from_label(p.value("family", std::string("gamma")));
        s.pk.alpha_v = p.value("alpha_v", s.pk.alpha_v);
        s.pk.lambda_v = p.value("lambda_v", s.pk.lambda_v);
        s.pk.alpha_k = p.value("alpha_k", s.pk.alpha_k);
        s.pk.lambda_k = p.value("lambda_k", s.pk.lambda_k);
    }
    s.obs_sigma = doc.value("obs_sigma", s.obs_sigma);
    if (doc.contains("grid")) s.grid = DoseGrid(doc["grid"].get<std::vector<double>>());
    if (doc.contains("schedule")) s.schedule = doc["schedule"].get<std::vector<double>>();
    s.validate();
    return s;
}

std::vector<double> true_avg_pd(const Scenario& scenario, std::size_t n_virtual,
                                Philox4x32& rng) {
    if (n_virtual == 0) throw std::invalid_argument("need at least one virtual patient");
    std::vector<double> sum(scenario.grid.size(), 0.0);
    for (std::size_t i = 0; i < n_virtual; ++i) {
        PkParams p = scenario.pk.sample(rng);
        for (std::size_t d = 0; d < sum.size(); ++d)
            sum[d] += tox_prob(scenario.grid[d], p, scenario.true_coefs);
    }
    for (double& x : sum) x /= static_cast<double>(n_virtual);
    return sum;
}

VirtualPatient draw_virtual_patient(const Scenario& scenario, Philox4x32& rng) {
    VirtualPatient vp;
    vp.truth = scenario.pk.sample(rng);
    vp.u = uniform01(rng);
    vp.obs_rng = rng;
    return vp;
}

PatientRecord simulate_outcome(const Scenario& scenario, const VirtualPatient& vp,
                               std::size_t level) {
    const double dose = scenario.grid[level];
    Philox4x32 rng = vp.obs_rng;
    PatientRecord rec;
    rec.dose_level = level;
    rec.obs = simulate_concentrations(dose, vp.truth, ObsNoise(scenario.obs_sigma),
                                      scenario.schedule, rng);
    rec.dlt = vp.u < tox_prob(dose, vp.truth, scenario.true_coefs) ? 1 : 0;
    return rec;
}

SimulatedPatient simulate_patient(const Scenario& scenario, std::size_t level,
                                  Philox4x32& rng) {
    auto vp = draw_virtual_patient(scenario, rng);
    return {simulate_outcome(scenario, vp, level), vp.truth};
}

std::string to_string(Design d) { return d == Design::PDF ? "pdf" : "crm"; }

Design parse_design(const std::string& s) {
    if (s == "pdf") return Design::PDF;
    if (s == "crm") return Design::CRM;
    throw std::invalid_argument("unknown design: " + s);
}

TrialResult run_trial(const Scenario& scenario, Design design, const TrialConfig& config,
                      std::uint64_t seed, std::uint32_t replication) {
    scenario.validate();
    config.escalation.validate();
    if (design == Design::CRM && config.crm.skeleton.size() != scenario.grid.size())
        throw std::invalid_argument("CRM skeleton must match the dose grid");
    TrialRunner runner(scenario, config, seed, replication);
    if (design == Design::PDF)
        runner.run_pdf();
    else
        runner.run_crm();
    return std::move(runner.result);
}

OperatingCharacteristics replicate(const Scenario& scenario, Design design,
                                   std::size_t n_trials, const TrialConfig& config,
                                   std::uint64_t seed, unsigned threads) {
    if (n_trials == 0) throw std::invalid_argument("need at least one trial");
    std::vector<std::optional<TrialResult>> results(n_trials);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r; (r = next++) < n_trials;)
            results[r] = run_trial(scenario, design, config, seed,
                                   static_cast<std::uint32_t>(r));
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_trials)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    const std::size_t D = scenario.grid.size();
    const double n = static_cast<double>(n_trials);
    OperatingCharacteristics oc;
    oc.label = scenario.label;
    oc.design = design;
    oc.n_trials = n_trials;
    {
        Philox4x32 rng(seed, stream_id(0, StreamPurpose::Misc, 0));
        oc.true_avg = true_avg_pd(scenario, 2000, rng);
    }
    oc.sel.assign(D, 0.0);
    oc.mean_n.assign(D, 0.0);
    oc.stage2_mean_n.assign(D, 0.0);
    oc.final_patient_n.assign(D, 0);
    oc.final_patient_y.assign(D, 0);
    std::vector<double> y1(D, 0.0), y2(D, 0.0);
    double b0 = 0.0, b1 = 0.0;
    std::size_t n_beta = 0;
    for (const auto& res : results) {
        if (res->mtd) oc.sel[*res->mtd] += 1.0 / n;
        else oc.no_selection += 1.0 / n;
        if (res->terminated) oc.termination_rate += 1.0 / n;
        for (std::size_t d = 0; d < D; ++d) {
            oc.mean_n[d] += res->stage1.n(d);
            y1[d] += res->stage1.y(d);
            oc.stage2_mean_n[d] += res->stage2.n(d);
            y2[d] += res->stage2.y(d);
        }
        if (!res->terminated && !res->trajectory.empty()) {
            const auto& last = res->trajectory.back();
            oc.final_patient_n[last.level] += 1;
            oc.final_patient_y[last.level] += last.dlt;
        }
        oc.excluded_assignments += res->excluded_assignments;
        if (res->final_beta) {
            b0 += res->final_beta->beta0;
            b1 += res->final_beta->beta1;
            ++n_beta;
        }
    }
    oc.tox_rate.assign(D, 0.0);
    oc.stage2_tox_rate.assign(D, 0.0);
    oc.stage1_share.assign(D, 0.0);
    double tot1 = 0.0, tot2 = 0.0, dlt2 = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
        if (oc.mean_n[d] > 0) oc.tox_rate[d] = y1[d] / oc.mean_n[d];
        if (oc.stage2_mean_n[d] > 0) oc.stage2_tox_rate[d] = y2[d] / oc.stage2_mean_n[d];
        tot1 += oc.mean_n[d];
        tot2 += oc.stage2_mean_n[d];
        dlt2 += y2[d];
    }
    for (std::size_t d = 0; d < D; ++d) {
        if (tot1 > 0) oc.stage1_share[d] = oc.mean_n[d] / tot1;
        oc.mean_n[d] /= n;
        oc.stage2_mean_n[d] /= n;
    }
    oc.stage2_pooled_rate = tot2 > 0 ? dlt2 / tot2 : 0.0;
    oc.example_trajectory = results.front()->trajectory;
    if (n_beta > 0) oc.mean_final_beta = ToxCoefs{b0 / n_beta, b1 / n_beta};
    return oc;
}

double predicted_mtd(double vk, const ToxCoefs& beta, double p_target) {
    if (!(vk > 0.0) || !(beta.beta1 > 0.0))
        throw std::invalid_argument("predicted MTD needs v k > 0 and beta1 > 0");
    return vk * std::exp((logit(p_target) - beta.beta0) / beta.beta1);
}

std::size_t predicted_mtd_level(double vk, const ToxCoefs& beta, double p_target,
                                const DoseGrid& grid) {
    const double dose = predicted_mtd(vk, beta, p_target);
    for (std::size_t d = 0; d < grid.size(); ++d)
        if (grid[d] >= dose) return d;
    return grid.size() - 1;
}

}  // namespace pdf
