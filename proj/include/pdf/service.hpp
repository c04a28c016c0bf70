#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pdf/inference.hpp"
#include "pdf/stage1.hpp"
#include "pdf/stage2.hpp"

namespace pdf {

/// Request rejected for malformed or inconsistent input (HTTP 400).
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
/// Unknown trial id (HTTP 404).
struct NotFoundError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
/// Valid request the trial's current state cannot accept (HTTP 409).
struct ConflictError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
/// Stored document fails its hash or schema check.
struct CorruptDocumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TrialStage { Stage1, Stage2, Terminated, Completed };
std::string to_string(TrialStage s);
TrialStage parse_trial_stage(const std::string& s);

enum class AuditEvent { Create, Cohort, Advance, Stage2Patient, Refine };
std::string to_string(AuditEvent e);
AuditEvent parse_audit_event(const std::string& s);

/*
 * One audit-log entry. Entries that enroll patients carry the dose level and
 * DLT outcomes, so replaying the log reproduces the tally.
 */
struct AuditEntry {
    std::size_t seq = 0;
    AuditEvent event = AuditEvent::Create;
    std::optional<DoseDecision> decision;
    std::size_t level = 0;
    std::vector<int> dlts;
    bool override_dose = false;
    std::optional<PkPrediction> prediction;
    std::string idempotency_key;

    bool operator==(const AuditEntry&) const = default;
};

struct StagedPatient {
    PatientRecord record;
    int stage = 1;
    std::optional<PkPrediction> prediction;
    bool override_dose = false;

    bool operator==(const StagedPatient&) const = default;
};

struct TrialState {
    std::string id;
    EscalationConfig escalation;
    DoseGrid grid = DoseGrid::standard();
    PriorSpec prior;
    std::size_t n_stage2 = 9;
    TrialStage stage = TrialStage::Stage1;
    std::vector<StagedPatient> patients;
    DoseTally tally{5};
    std::optional<PosteriorDraws> draws;
    std::size_t fitted_patients = 0;
    std::vector<AuditEntry> audit;
    /// Level the next Stage-I cohort must receive.
    std::optional<std::size_t> stage1_recommendation;
    std::optional<std::size_t> stage1_mtd;
    /// Set when the trial stops early.
    std::optional<DoseDecision> termination;
    std::uint64_t seed = 0;
    std::uint64_t fits = 0;
    /// Bumped by every mutation; background refinement checks it before publishing.
    std::uint64_t revision = 0;

    std::size_t stage2_count() const;
    bool operator==(const TrialState&) const = default;
};

nlohmann::json state_to_json(const TrialState& s);
TrialState state_from_json(const nlohmann::json& doc);

/// Tally rebuilt from the enrollment entries of an audit log.
DoseTally replay_tally(const std::vector<AuditEntry>& audit, std::size_t levels);

constexpr int kStoredSchema = 1;

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& data);

/// Directory of per-trial documents {"schema", "hash", "state"}, replaced atomically.
class TrialStore {
   public:
    explicit TrialStore(std::filesystem::path dir);

    void save(const TrialState& state) const;
    TrialState load(const std::string& id) const;
    bool exists(const std::string& id) const;
    std::vector<std::string> list() const;
    std::filesystem::path path_of(const std::string& id) const;

    static nlohmann::json to_document(const TrialState& state);
    /// Checks schema, hash, and that the tally matches the patient records.
    static TrialState from_document(const nlohmann::json& doc);

   private:
    std::filesystem::path dir_;
};

enum class SeedMode { Fixed, Entropy };
SeedMode parse_seed_mode(const std::string& s);

struct ServiceConfig {
    std::filesystem::path data_dir = "trial-data";
    McmcConfig mcmc;
    SeedMode seed_mode = SeedMode::Fixed;
    std::uint64_t fixed_seed = 20240501;
    /// Draw budget of the asynchronous refinement; 0 disables it.
    std::size_t refine_draws = 0;
};

struct CreateRequest {
    std::optional<std::string> id;
    EscalationConfig escalation;
    DoseGrid grid = DoseGrid::standard();
    PriorSpec prior;
    std::size_t n_stage2 = 9;
};

struct PatientInput {
    std::vector<ConcentrationObs> obs;
    int dlt = 0;
};

struct CohortRequest {
    std::optional<std::size_t> dose_level;
    std::vector<PatientInput> patients;
    std::string idempotency_key;
};

struct Stage2Request {
    PkPrediction prediction{1.0, 1.0};
    std::size_t dose_level = 0;
    PatientInput patient;
    bool override_dose = false;
    std::string idempotency_key;
};

struct Preview {
    DoseDecision decision;
    ToxCoefs beta_hat{};
    std::vector<double> curve;
};

using Snapshot = std::shared_ptr<const TrialState>;

/*
 * Trial-conduct service. Mutations of one trial are serialized by a per-trial
 * mutex and publish a fresh immutable snapshot; readers only copy a pointer.
 */
class TrialService {
   public:
    explicit TrialService(ServiceConfig config);
    ~TrialService();
    TrialService(const TrialService&) = delete;
    TrialService& operator=(const TrialService&) = delete;

    Snapshot create_trial(const CreateRequest& req);
    std::pair<Snapshot, std::optional<DoseDecision>> record_cohort(const std::string& id,
                                                                   const CohortRequest& req);
    Snapshot advance_to_stage2(const std::string& id);
    Preview recommend_for_patient(const std::string& id, const PkPrediction& pred) const;
    Snapshot record_stage2_patient(const std::string& id, const Stage2Request& req);
    Snapshot snapshot(const std::string& id) const;
    std::vector<std::string> list() const;

    /// Blocks until queued background refinements finish.
    void wait_idle();

    const ServiceConfig& config() const { return config_; }

   private:
    struct Entry {
        std::mutex write;
        mutable std::mutex publish;
        Snapshot current;
        Snapshot get() const {
            std::lock_guard lk(publish);
            return current;
        }
        void set(Snapshot s) {
            std::lock_guard lk(publish);
            current = std::move(s);
        }
    };

    std::shared_ptr<Entry> entry(const std::string& id) const;
    void fit(TrialState& s) const;
    void commit(Entry& e, TrialState s);
    void schedule_refine(const std::string& id, std::uint64_t revision);

    ServiceConfig config_;
    TrialStore store_;
    mutable std::mutex map_mutex_;
    mutable std::map<std::string, std::shared_ptr<Entry>> trials_;
    std::mutex refine_mutex_;
    std::vector<std::jthread> refiners_;
};

/// Read-only view served by GET: tallies, posterior summary, predictive
/// curve, predicted-MTD curve, audit log.
nlohmann::json snapshot_json(const TrialState& s);
nlohmann::json decision_json(const DoseDecision& d);

}  // namespace pdf
