#include "pdf/service.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "pdf/sim.hpp"

namespace pdf {

using nlohmann::json;

namespace {

void check_id(const std::string& id) {
    if (id.empty() || id.size() > 64)
        throw ValidationError("trial id must have 1 to 64 characters");
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'))
            throw ValidationError("trial id may only contain letters, digits, '-' and '_'");
}

std::uint64_t seed_from_text(const std::string& text) {
    const std::string h = sha256_hex(text);
    return std::stoull(h.substr(0, 16), nullptr, 16);
}

void check_patient(const PatientInput& p) {
    if (p.dlt != 0 && p.dlt != 1) throw ValidationError("DLT outcome must be 0 or 1");
}

PatientRecord to_record(const PatientInput& p, std::size_t level) {
    return PatientRecord{level, p.obs, p.dlt};
}

const AuditEntry* find_key(const TrialState& s, AuditEvent ev, const std::string& key) {
    if (key.empty()) return nullptr;
    for (const auto& a : s.audit)
        if (a.event == ev && a.idempotency_key == key) return &a;
    return nullptr;
}

AuditEntry& append_audit(TrialState& s, AuditEvent ev) {
    AuditEntry a;
    a.seq = s.audit.size();
    a.event = ev;
    s.audit.push_back(std::move(a));
    return s.audit.back();
}

}  // namespace

SeedMode parse_seed_mode(const std::string& s) {
    if (s == "fixed") return SeedMode::Fixed;
    if (s == "entropy") return SeedMode::Entropy;
    throw std::invalid_argument("seed mode must be fixed or entropy");
}

TrialService::TrialService(ServiceConfig config)
    : config_(std::move(config)), store_(config_.data_dir) {
    for (const auto& id : store_.list()) {
        auto e = std::make_shared<Entry>();
        e->current = std::make_shared<const TrialState>(store_.load(id));
        trials_[id] = std::move(e);
    }
}

TrialService::~TrialService() { wait_idle(); }

void TrialService::wait_idle() {
    for (;;) {
        std::vector<std::jthread> pending;
        {
            std::lock_guard lk(refine_mutex_);
            pending.swap(refiners_);
        }
        if (pending.empty()) return;
        for (auto& t : pending) t.join();
    }
}

std::shared_ptr<TrialService::Entry> TrialService::entry(const std::string& id) const {
    std::lock_guard lk(map_mutex_);
    auto it = trials_.find(id);
    if (it == trials_.end()) throw NotFoundError("unknown trial " + id);
    return it->second;
}

void TrialService::fit(TrialState& s) const {
    if (s.patients.empty()) return;
    Dataset data{s.grid, {}};
    for (const auto& p : s.patients) data.patients.push_back(p.record);
    McmcConfig cfg = config_.mcmc;
    if (s.draws && !s.draws->empty()) cfg.init = s.draws->draws.back();
    Philox4x32 rng(s.seed, stream_id(0, StreamPurpose::Mcmc,
                                     static_cast<std::uint32_t>(s.fits & 0xFFFFFF)));
    s.draws = sample_posterior(data, s.prior, cfg, rng);
    s.fitted_patients = s.patients.size();
    ++s.fits;
}

void TrialService::commit(Entry& e, TrialState s) {
    ++s.revision;
    store_.save(s);
    const auto rev = s.revision;
    const auto id = s.id;
    e.set(std::make_shared<const TrialState>(std::move(s)));
    if (config_.refine_draws > 0) schedule_refine(id, rev);
}

void TrialService::schedule_refine(const std::string& id, std::uint64_t revision) {
    auto e = entry(id);
    std::lock_guard lk(refine_mutex_);
    refiners_.emplace_back([this, e, revision] {
        TrialState work = *e->get();
        if (work.revision != revision || work.patients.empty()) return;
        Dataset data{work.grid, {}};
        for (const auto& p : work.patients) data.patients.push_back(p.record);
        McmcConfig cfg = config_.mcmc;
        cfg.draws = config_.refine_draws;
        if (work.draws && !work.draws->empty()) cfg.init = work.draws->draws.back();
        Philox4x32 rng(work.seed, stream_id(1, StreamPurpose::Mcmc,
                                            static_cast<std::uint32_t>(work.fits & 0xFFFFFF)));
        auto draws = sample_posterior(data, work.prior, cfg, rng);

        std::lock_guard wl(e->write);
        TrialState latest = *e->get();
        if (latest.revision != revision) return;  // superseded by a newer write
        latest.draws = std::move(draws);
        ++latest.fits;
        append_audit(latest, AuditEvent::Refine);
        ++latest.revision;
        store_.save(latest);
        e->set(std::make_shared<const TrialState>(std::move(latest)));
    });
}

Snapshot TrialService::create_trial(const CreateRequest& req) {
    TrialState s;
    try {
        req.escalation.validate();
        req.prior.validate();
    } catch (const std::invalid_argument& ex) {
        throw ValidationError(ex.what());
    }
    if (req.id) check_id(*req.id);

    std::unique_lock lk(map_mutex_);
    std::string id = req.id.value_or("");
    if (id.empty()) {
        for (std::size_t n = trials_.size() + 1;; ++n) {
            id = "trial-" + std::to_string(n);
            if (!trials_.count(id) && !store_.exists(id)) break;
        }
    }
    if (trials_.count(id) || store_.exists(id))
        throw ConflictError("trial " + id + " already exists");

    s.id = id;
    s.escalation = req.escalation;
    s.grid = req.grid;
    s.prior = req.prior;
    s.n_stage2 = req.n_stage2;
    s.tally = DoseTally(s.grid.size());
    if (config_.seed_mode == SeedMode::Fixed) {
        s.seed = mix_seed(config_.fixed_seed ^ seed_from_text(id));
    } else {
        std::random_device rd;
        s.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }
    auto first = first_cohort_dose();
    s.stage1_recommendation = first.level;
    append_audit(s, AuditEvent::Create).decision = first;

    auto e = std::make_shared<Entry>();
    trials_[id] = e;
    lk.unlock();
    std::lock_guard wl(e->write);
    commit(*e, std::move(s));
    return e->get();
}

std::pair<Snapshot, std::optional<DoseDecision>> TrialService::record_cohort(
    const std::string& id, const CohortRequest& req) {
    auto e = entry(id);
    std::lock_guard wl(e->write);
    TrialState s = *e->get();
    if (const auto* prior = find_key(s, AuditEvent::Cohort, req.idempotency_key))
        return {e->get(), prior->decision};
    if (s.stage != TrialStage::Stage1)
        throw ConflictError("trial is in " + to_string(s.stage) + ", not stage1");
    if (!s.stage1_recommendation)
        throw ConflictError("stage I enrollment is complete; advance the trial");
    if (req.patients.size() != s.escalation.cohort_size)
        throw ValidationError("cohort must have " + std::to_string(s.escalation.cohort_size) +
                              " patients");
    const std::size_t level = *s.stage1_recommendation;
    if (req.dose_level && *req.dose_level != level)
        throw ValidationError("cohort must be dosed at the recommended level " +
                              std::to_string(level));
    for (const auto& p : req.patients) check_patient(p);

    auto& a = append_audit(s, AuditEvent::Cohort);
    a.level = level;
    a.idempotency_key = req.idempotency_key;
    for (const auto& p : req.patients) {
        s.patients.push_back({to_record(p, level), 1, std::nullopt, false});
        s.tally.add(level, p.dlt);
        a.dlts.push_back(p.dlt);
    }
    fit(s);

    std::optional<DoseDecision> dec;
    if (s.patients.size() < s.escalation.stage1_patients()) {
        auto p_tilde = predictive_dose_tox(*s.draws, s.grid);
        dec = next_cohort_dose(s.tally, level, p_tilde, s.escalation);
    } else if (safe_limit(s.tally, s.escalation) == 0) {
        dec = DoseDecision::terminate({RuleTag::SafetyExclusion});
    }
    s.stage1_recommendation.reset();
    if (dec && dec->terminated()) {
        s.stage = TrialStage::Terminated;
        s.termination = dec;
    } else if (dec) {
        s.stage1_recommendation = dec->level;
    }
    s.audit.back().decision = dec;
    commit(*e, std::move(s));
    return {e->get(), dec};
}

Snapshot TrialService::advance_to_stage2(const std::string& id) {
    auto e = entry(id);
    std::lock_guard wl(e->write);
    TrialState s = *e->get();
    if (s.stage != TrialStage::Stage1)
        throw ConflictError("trial is in " + to_string(s.stage) + ", not stage1");
    if (s.patients.size() < s.escalation.stage1_patients())
        throw ConflictError("stage I needs " + std::to_string(s.escalation.stage1_patients()) +
                            " patients, have " + std::to_string(s.patients.size()));
    s.stage1_mtd = select_mtd(s.tally, s.escalation);
    s.stage = s.n_stage2 == 0 ? TrialStage::Completed : TrialStage::Stage2;
    append_audit(s, AuditEvent::Advance);
    commit(*e, std::move(s));
    return e->get();
}

Preview TrialService::recommend_for_patient(const std::string& id,
                                            const PkPrediction& pred) const {
    auto snap = entry(id)->get();
    if (snap->stage != TrialStage::Stage2)
        throw ConflictError("trial is in " + to_string(snap->stage) + ", not stage2");
    auto step = precision_decision(*snap->draws, pred, snap->tally, snap->escalation, snap->grid);
    return {step.decision, step.beta_hat, step.curve};
}

Snapshot TrialService::record_stage2_patient(const std::string& id, const Stage2Request& req) {
    auto e = entry(id);
    std::lock_guard wl(e->write);
    TrialState s = *e->get();
    if (find_key(s, AuditEvent::Stage2Patient, req.idempotency_key)) return e->get();
    if (s.stage != TrialStage::Stage2)
        throw ConflictError("trial is in " + to_string(s.stage) + ", not stage2");
    if (req.dose_level >= s.grid.size()) throw ValidationError("dose level off the grid");
    check_patient(req.patient);

    auto step =
        precision_decision(*s.draws, req.prediction, s.tally, s.escalation, s.grid);
    DoseDecision recorded = step.decision;
    if (recorded.terminated()) throw ConflictError("no admissible dose remains");
    if (req.dose_level != recorded.level) {
        if (!req.override_dose)
            throw ConflictError("dose level " + std::to_string(req.dose_level) +
                                " differs from the recommendation " +
                                std::to_string(recorded.level) + "; set override to proceed");
        recorded.level = req.dose_level;
        recorded.rationale.push_back(RuleTag::Override);
    }

    auto& a = append_audit(s, AuditEvent::Stage2Patient);
    a.decision = recorded;
    a.level = req.dose_level;
    a.dlts = {req.patient.dlt};
    a.override_dose = req.override_dose && req.dose_level != step.decision.level;
    a.prediction = req.prediction;
    a.idempotency_key = req.idempotency_key;
    s.patients.push_back({to_record(req.patient, req.dose_level), 2, req.prediction,
                          a.override_dose});
    s.tally.add(req.dose_level, req.patient.dlt);
    fit(s);

    if (s.stage2_count() >= s.n_stage2) {
        s.stage = TrialStage::Completed;
    } else if (safe_limit(s.tally, s.escalation) == 0) {
        s.stage = TrialStage::Terminated;
        s.termination = DoseDecision::terminate({RuleTag::SafetyExclusion});
    }
    commit(*e, std::move(s));
    return e->get();
}

Snapshot TrialService::snapshot(const std::string& id) const { return entry(id)->get(); }

std::vector<std::string> TrialService::list() const {
    std::lock_guard lk(map_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, e] : trials_) ids.push_back(id);
    return ids;
}

json snapshot_json(const TrialState& s) {
    json doc = state_to_json(s);
    doc.erase("draws");
    doc.erase("seed");
    doc.erase("fits");
    std::vector<double> unsafe(s.grid.size());
    for (std::size_t d = 0; d < s.grid.size(); ++d)
        unsafe[d] = unsafe_probability(s.tally.y(d), s.tally.n(d), s.escalation.p_target);
    doc["unsafe_probability"] = unsafe;
    doc["admissible_levels"] = safe_limit(s.tally, s.escalation);
    doc["stage2_patients"] = s.stage2_count();
    doc["stage1_recommendation"] =
        s.stage1_recommendation ? json(*s.stage1_recommendation) : json(nullptr);

    if (!s.draws || s.draws->empty()) {
        doc["posterior"] = nullptr;
        doc["predictive_curve"] = nullptr;
        doc["mtd_curve"] = json::array();
        return doc;
    }
    const auto m = posterior_means(*s.draws);
    doc["posterior"] = {{"n_draws", s.draws->size()},
                        {"beta0", m.beta0},
                        {"beta1", m.beta1},
                        {"sigma", m.sigma},
                        {"alpha_v", m.alpha_v},
                        {"lambda_v", m.lambda_v},
                        {"alpha_k", m.alpha_k},
                        {"lambda_k", m.lambda_k},
                        {"v", m.v},
                        {"k", m.k},
                        {"acceptance", s.draws->meta.acceptance},
                        {"warnings", s.draws->meta.warnings}};
    json rhat = json::object();
    for (const auto& [k, v] : s.draws->meta.rhat)
        rhat[k] = std::isfinite(v) ? json(v) : json(nullptr);
    doc["posterior"]["rhat"] = rhat;
    doc["predictive_curve"] = predictive_dose_tox(*s.draws, s.grid);

    json curve = json::array();
    const ToxCoefs beta{m.beta0, m.beta1};
    if (m.beta1 > 0.0)
        for (double vk = 1.0; vk <= 30.0; vk += 1.0)
            curve.push_back(
                {{"vk", vk},
                 {"dose", predicted_mtd(vk, beta, s.escalation.p_target)},
                 {"dose_level", predicted_mtd_level(vk, beta, s.escalation.p_target, s.grid)}});
    doc["mtd_curve"] = curve;
    return doc;
}

}  // namespace pdf
