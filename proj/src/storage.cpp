#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "pdf/draws_json.hpp"
#include "pdf/service.hpp"

namespace pdf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json prediction_json(const PkPrediction& p) {
    return {{"v_hat", p.v_hat},
            {"k_hat", p.k_hat},
            {"source", p.source == PkPrediction::Source::Measured ? "measured" : "predicted"}};
}

PkPrediction prediction_from(const json& j) {
    auto src = j.value("source", std::string("measured"));
    if (src != "measured" && src != "predicted")
        throw ValidationError("prediction source must be measured or predicted");
    return PkPrediction(j.at("v_hat").get<double>(), j.at("k_hat").get<double>(),
                        src == "measured" ? PkPrediction::Source::Measured
                                          : PkPrediction::Source::Predicted);
}

json decision_to(const DoseDecision& d) {
    json tags = json::array();
    for (auto t : d.rationale) tags.push_back(to_string(t));
    json out{{"action", d.terminated() ? "terminate" : "assign"}, {"rationale", tags}};
    out["dose_level"] = d.terminated() ? json(nullptr) : json(d.level);
    return out;
}

DoseDecision decision_from(const json& j) {
    DoseDecision d;
    auto action = j.at("action").get<std::string>();
    if (action == "terminate") d.action = DoseDecision::Action::Terminate;
    else if (action == "assign") d.action = DoseDecision::Action::Assign;
    else throw std::invalid_argument("unknown decision action: " + action);
    if (!d.terminated()) d.level = j.at("dose_level").get<std::size_t>();
    for (const auto& t : j.at("rationale")) d.rationale.push_back(parse_rule_tag(t));
    return d;
}

json escalation_json(const EscalationConfig& e) {
    return {{"p_target", e.p_target},
            {"s_star", e.s_star},
            {"cohort_size", e.cohort_size},
            {"n_cohorts_stage1", e.n_cohorts_stage1}};
}

EscalationConfig escalation_from(const json& j) {
    EscalationConfig e;
    e.p_target = j.value("p_target", e.p_target);
    e.s_star = j.value("s_star", e.s_star);
    e.cohort_size = j.value("cohort_size", e.cohort_size);
    e.n_cohorts_stage1 = j.value("n_cohorts_stage1", e.n_cohorts_stage1);
    return e;
}

template <class T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> optional_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<T>();
}

DoseTally tally_of(const TrialState& s) {
    DoseTally t(s.grid.size());
    for (const auto& p : s.patients) t.add(p.record.dose_level, p.record.dlt.value_or(0));
    return t;
}

}  // namespace

nlohmann::json decision_json(const DoseDecision& d) { return decision_to(d); }

std::string to_string(TrialStage s) {
    switch (s) {
        case TrialStage::Stage1: return "stage1";
        case TrialStage::Stage2: return "stage2";
        case TrialStage::Terminated: return "terminated";
        case TrialStage::Completed: return "completed";
    }
    return "unknown";
}

TrialStage parse_trial_stage(const std::string& s) {
    for (auto t : {TrialStage::Stage1, TrialStage::Stage2, TrialStage::Terminated,
                   TrialStage::Completed})
        if (to_string(t) == s) return t;
    throw std::invalid_argument("unknown trial stage: " + s);
}

std::string to_string(AuditEvent e) {
    switch (e) {
        case AuditEvent::Create: return "create";
        case AuditEvent::Cohort: return "cohort";
        case AuditEvent::Advance: return "advance";
        case AuditEvent::Stage2Patient: return "stage2-patient";
        case AuditEvent::Refine: return "refine";
    }
    return "unknown";
}

AuditEvent parse_audit_event(const std::string& s) {
    for (auto e : {AuditEvent::Create, AuditEvent::Cohort, AuditEvent::Advance,
                   AuditEvent::Stage2Patient, AuditEvent::Refine})
        if (to_string(e) == s) return e;
    throw std::invalid_argument("unknown audit event: " + s);
}

std::size_t TrialState::stage2_count() const {
    std::size_t n = 0;
    for (const auto& p : patients) n += p.stage == 2;
    return n;
}

json state_to_json(const TrialState& s) {
    json patients = json::array();
    for (const auto& p : s.patients) {
        json j{{"dose_level", p.record.dose_level},
               {"obs", obs_to_json(p.record.obs)},
               {"dlt", optional_json(p.record.dlt)},
               {"stage", p.stage},
               {"override", p.override_dose}};
        j["prediction"] = p.prediction ? prediction_json(*p.prediction) : json(nullptr);
        patients.push_back(std::move(j));
    }
    json audit = json::array();
    for (const auto& a : s.audit) {
        json j{{"seq", a.seq},
               {"event", to_string(a.event)},
               {"dose_level", a.level},
               {"dlts", a.dlts},
               {"override", a.override_dose},
               {"idempotency_key", a.idempotency_key}};
        j["decision"] = a.decision ? decision_to(*a.decision) : json(nullptr);
        j["prediction"] = a.prediction ? prediction_json(*a.prediction) : json(nullptr);
        audit.push_back(std::move(j));
    }
    return json{
        {"id", s.id},
        {"escalation", escalation_json(s.escalation)},
        {"grid", s.grid.doses()},
        {"prior", prior_to_json(s.prior)},
        {"n_stage2", s.n_stage2},
        {"stage", to_string(s.stage)},
        {"patients", patients},
        {"tally", {{"n", s.tally.n()}, {"y", s.tally.y()}}},
        {"draws", s.draws ? draws_to_json(*s.draws) : json(nullptr)},
        {"fitted_patients", s.fitted_patients},
        {"audit", audit},
        {"stage1_recommendation", optional_json(s.stage1_recommendation)},
        {"stage1_mtd", optional_json(s.stage1_mtd)},
        {"termination", s.termination ? decision_to(*s.termination) : json(nullptr)},
        {"seed", s.seed},
        {"fits", s.fits},
        {"revision", s.revision},
    };
}

TrialState state_from_json(const json& doc) {
    TrialState s;
    s.id = doc.at("id").get<std::string>();
    s.escalation = escalation_from(doc.at("escalation"));
    s.grid = DoseGrid(doc.at("grid").get<std::vector<double>>());
    s.prior = prior_from_json(doc.at("prior"));
    s.n_stage2 = doc.at("n_stage2").get<std::size_t>();
    s.stage = parse_trial_stage(doc.at("stage").get<std::string>());
    for (const auto& j : doc.at("patients")) {
        StagedPatient p;
        p.record.dose_level = j.at("dose_level").get<std::size_t>();
        p.record.obs = obs_from_json(j.at("obs"));
        p.record.dlt = optional_from<int>(j.at("dlt"));
        p.stage = j.at("stage").get<int>();
        p.override_dose = j.at("override").get<bool>();
        if (!j.at("prediction").is_null()) p.prediction = prediction_from(j["prediction"]);
        s.patients.push_back(std::move(p));
    }
    s.tally = DoseTally(doc.at("tally").at("n").get<std::vector<int>>(),
                        doc.at("tally").at("y").get<std::vector<int>>());
    if (!doc.at("draws").is_null()) s.draws = draws_from_json(doc["draws"]);
    s.fitted_patients = doc.at("fitted_patients").get<std::size_t>();
    for (const auto& j : doc.at("audit")) {
        AuditEntry a;
        a.seq = j.at("seq").get<std::size_t>();
        a.event = parse_audit_event(j.at("event").get<std::string>());
        a.level = j.at("dose_level").get<std::size_t>();
        a.dlts = j.at("dlts").get<std::vector<int>>();
        a.override_dose = j.at("override").get<bool>();
        a.idempotency_key = j.at("idempotency_key").get<std::string>();
        if (!j.at("decision").is_null()) a.decision = decision_from(j["decision"]);
        if (!j.at("prediction").is_null()) a.prediction = prediction_from(j["prediction"]);
        s.audit.push_back(std::move(a));
    }
    s.stage1_recommendation = optional_from<std::size_t>(doc.at("stage1_recommendation"));
    s.stage1_mtd = optional_from<std::size_t>(doc.at("stage1_mtd"));
    if (!doc.at("termination").is_null()) s.termination = decision_from(doc["termination"]);
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.fits = doc.at("fits").get<std::uint64_t>();
    s.revision = doc.at("revision").get<std::uint64_t>();
    return s;
}

DoseTally replay_tally(const std::vector<AuditEntry>& audit, std::size_t levels) {
    DoseTally t(levels);
    for (const auto& a : audit)
        if (a.event == AuditEvent::Cohort || a.event == AuditEvent::Stage2Patient)
            for (int y : a.dlts) t.add(a.level, y);
    return t;
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("SHA-256 digest failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i)
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

TrialStore::TrialStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path TrialStore::path_of(const std::string& id) const { return dir_ / (id + ".json"); }

bool TrialStore::exists(const std::string& id) const { return fs::exists(path_of(id)); }

json TrialStore::to_document(const TrialState& state) {
    json body = state_to_json(state);
    return json{{"schema", kStoredSchema}, {"hash", sha256_hex(body.dump())}, {"state", body}};
}

TrialState TrialStore::from_document(const json& doc) {
    if (!doc.contains("schema") || doc["schema"] != kStoredSchema)
        throw CorruptDocumentError("unsupported stored schema");
    const auto& body = doc.at("state");
    if (sha256_hex(body.dump()) != doc.at("hash").get<std::string>())
        throw CorruptDocumentError("stored trial hash mismatch");
    TrialState s = state_from_json(body);
    if (tally_of(s) != s.tally)
        throw CorruptDocumentError("stored tally disagrees with patient records");
    if (replay_tally(s.audit, s.grid.size()) != s.tally)
        throw CorruptDocumentError("stored tally disagrees with audit log");
    return s;
}

void TrialStore::save(const TrialState& state) const {
    const fs::path target = path_of(state.id);
    std::ostringstream suffix;
    suffix << ".tmp." << std::this_thread::get_id();
    const fs::path tmp = target.string() + suffix.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << to_document(state).dump();
        out.flush();
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, target);
}

TrialState TrialStore::load(const std::string& id) const {
    std::ifstream in(path_of(id), std::ios::binary);
    if (!in) throw NotFoundError("no stored trial " + id);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw CorruptDocumentError(std::string("unreadable trial document: ") + e.what());
    }
    return from_document(doc);
}

std::vector<std::string> TrialStore::list() const {
    std::vector<std::string> ids;
    for (const auto& ent : fs::directory_iterator(dir_))
        if (ent.is_regular_file() && ent.path().extension() == ".json")
            ids.push_back(ent.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace pdf
