#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "pdf/service.hpp"

using namespace pdf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("pdf-service-" + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ServiceConfig small_config(const fs::path& dir) {
    ServiceConfig c;
    c.data_dir = dir;
    c.mcmc.burn_in = 200;
    c.mcmc.draws = 200;
    return c;
}

PatientInput patient(int dlt, double level_dose = 15) {
    PatientInput p;
    for (double t : standard_schedule())
        p.obs.push_back({t, level_dose / 4 * std::exp(-0.5 * t)});
    p.dlt = dlt;
    return p;
}

CohortRequest cohort(std::vector<int> dlts, std::string key = "") {
    CohortRequest r;
    for (int y : dlts) r.patients.push_back(patient(y));
    r.idempotency_key = std::move(key);
    return r;
}

Snapshot run_stage1_clean(TrialService& svc, const std::string& id) {
    Snapshot s;
    for (int c = 0; c < 7; ++c) s = svc.record_cohort(id, cohort({0, 0, 0})).first;
    return s;
}

}  // namespace

TEST_SUITE("service") {
    TEST_CASE("create trial") {
        TempDir dir;
        TrialService svc(small_config(dir.path));
        CreateRequest req;
        req.id = "alpha";
        auto s = svc.create_trial(req);
        CHECK(s->id == "alpha");
        CHECK(s->stage == TrialStage::Stage1);
        CHECK(s->stage1_recommendation == 0u);
        CHECK(s->audit.size() == 1);
        CHECK(s->audit[0].event == AuditEvent::Create);

        CHECK_THROWS_AS(svc.create_trial(req), ConflictError);
        CreateRequest bad;
        bad.escalation.p_target = 1.2;
        CHECK_THROWS_AS(svc.create_trial(bad), ValidationError);
        CreateRequest odd;
        odd.id = "../etc";
        CHECK_THROWS_AS(svc.create_trial(odd), ValidationError);

        auto anon = svc.create_trial(CreateRequest{});
        CHECK(anon->id.rfind("trial-", 0) == 0);
        CHECK(svc.list().size() == 2);
        CHECK_THROWS_AS(svc.snapshot("nope"), NotFoundError);
    }

    TEST_CASE("speed-up while no DLT is seen") {
        TempDir dir;
        TrialService svc(small_config(dir.path));
        CreateRequest req;
        req.id = "t";
        svc.create_trial(req);
        auto [s, dec] = svc.record_cohort("t", cohort({0, 0, 0}));
        REQUIRE(dec);
        CHECK(dec->level == 1);
        CHECK(s->stage1_recommendation == 1u);
        CHECK(s->tally.n(0) == 3);
        CHECK(s->draws);

        CohortRequest wrong = cohort({0, 0, 0});
        wrong.dose_level = 3;
        CHECK_THROWS_AS(svc.record_cohort("t", wrong), ValidationError);
        CHECK_THROWS_AS(svc.record_cohort("t", cohort({0, 0})), ValidationError);
        CHECK_THROWS_AS(svc.record_cohort("t", cohort({0, 2, 0})), ValidationError);
    }

    TEST_CASE("three DLTs at the lowest dose stop the trial") {
        TempDir dir;
        TrialService svc(small_config(dir.path));
        CreateRequest req;
        req.id = "t";
        svc.create_trial(req);
        auto [s, dec] = svc.record_cohort("t", cohort({1, 1, 1}));
        REQUIRE(dec);
        CHECK(dec->terminated());
        CHECK(s->stage == TrialStage::Terminated);
        CHECK_THROWS_AS(svc.record_cohort("t", cohort({0, 0, 0})), ConflictError);
        CHECK_THROWS_AS(svc.advance_to_stage2("t"), ConflictError);
    }

    TEST_CASE("idempotent cohort submission") {
        TempDir dir;
        TrialService svc(small_config(dir.path));
        CreateRequest req;
        req.id = "t";
        svc.create_trial(req);
        auto first = svc.record_cohort("t", cohort({0, 1, 0}, "k1"));
        auto again = svc.record_cohort("t", cohort({0, 1, 0}, "k1"));
        CHECK(first.first == again.first);
        CHECK(first.second == again.second);
        CHECK(again.first->patients.size() == 3);
    }

    TEST_CASE("full trial through stage two") {
        TempDir dir;
        TrialService svc(small_config(dir.path));
        CreateRequest req;
        req.id = "full";
        svc.create_trial(req);
        for (int c = 0; c < 6; ++c) svc.record_cohort("full", cohort({0, 0, 0}));
        CHECK_THROWS_AS(svc.advance_to_stage2("full"), ConflictError);
        auto [s1, last] = svc.record_cohort("full", cohort({0, 0, 0}));
        CHECK_FALSE(last);
        CHECK_FALSE(s1->stage1_recommendation);
        CHECK_THROWS_AS(svc.record_cohort("full", cohort({0, 0, 0})), ConflictError);

        PkPrediction pred(4, 3, PkPrediction::Source::Predicted);
        CHECK_THROWS_AS(svc.recommend_for_patient("full", pred), ConflictError);
        auto s2 = svc.advance_to_stage2("full");
        CHECK(s2->stage == TrialStage::Stage2);
        CHECK(s2->stage1_mtd);

        auto before = svc.snapshot("full");
        auto p1 = svc.recommend_for_patient("full", pred);
        auto p2 = svc.recommend_for_patient("full", pred);
        CHECK(p1.decision == p2.decision);
        CHECK(svc.snapshot("full") == before);

        Stage2Request bad;
        bad.prediction = pred;
        bad.dose_level = (p1.decision.level + 1) % 5;
        bad.patient = patient(0);
        CHECK_THROWS_AS(svc.record_stage2_patient("full", bad), ConflictError);
        bad.override_dose = true;
        auto s = svc.record_stage2_patient("full", bad);
        CHECK(s->patients.back().override_dose);
        CHECK(s->audit.back().decision->rationale.back() == RuleTag::Override);

        for (int i = 1; i < 9; ++i) {
            auto pv = svc.recommend_for_patient("full", pred);
            Stage2Request r;
            r.prediction = pred;
            r.dose_level = pv.decision.level;
            r.patient = patient(i % 4 == 0);
            r.idempotency_key = "p" + std::to_string(i);
            s = svc.record_stage2_patient("full", r);
            CHECK(s->audit.back().decision == pv.decision);
            if (s->stage == TrialStage::Terminated) break;
        }
        if (s->stage != TrialStage::Terminated) {
            CHECK(s->stage == TrialStage::Completed);
            CHECK(s->stage2_count() == 9);
            CHECK_THROWS_AS(svc.recommend_for_patient("full", pred), ConflictError);
        }
        CHECK(replay_tally(s->audit, 5) == s->tally);
    }

    TEST_CASE("state survives a restart") {
        TempDir dir;
        Snapshot saved;
        {
            TrialService svc(small_config(dir.path));
            CreateRequest req;
            req.id = "keep";
            svc.create_trial(req);
            svc.record_cohort("keep", cohort({0, 0, 1}));
            saved = svc.snapshot("keep");
        }
        TrialService again(small_config(dir.path));
        CHECK(*again.snapshot("keep") == *saved);
        auto [s, dec] = again.record_cohort("keep", cohort({0, 0, 0}));
        CHECK(s->patients.size() == 6);
    }

    TEST_CASE("same seed, same posterior") {
        TempDir a, b;
        TrialService x(small_config(a.path)), y(small_config(b.path));
        CreateRequest req;
        req.id = "same";
        x.create_trial(req);
        y.create_trial(req);
        auto sx = x.record_cohort("same", cohort({0, 1, 0})).first;
        auto sy = y.record_cohort("same", cohort({0, 1, 0})).first;
        CHECK(*sx->draws == *sy->draws);
    }

    TEST_CASE("corrupt and partial documents") {
        TempDir dir;
        {
            TrialService svc(small_config(dir.path));
            CreateRequest req;
            req.id = "c";
            svc.create_trial(req);
            svc.record_cohort("c", cohort({0, 0, 0}));
        }
        TrialStore store(dir.path);
        auto doc = nlohmann::json::parse(std::ifstream(store.path_of("c")));
        // a leftover temp file from an interrupted write is ignored
        std::ofstream(dir.path / "c.json.tmp.123") << "{ half";
        CHECK(store.list() == std::vector<std::string>{"c"});
        CHECK_NOTHROW(TrialService(small_config(dir.path)));

        auto tampered = doc;
        tampered["state"]["tally"]["y"][0] = 2;
        CHECK_THROWS_AS(TrialStore::from_document(tampered), CorruptDocumentError);
        tampered["hash"] = sha256_hex(tampered["state"].dump());
        CHECK_THROWS_AS(TrialStore::from_document(tampered), CorruptDocumentError);
        auto old = doc;
        old["schema"] = 99;
        CHECK_THROWS_AS(TrialStore::from_document(old), CorruptDocumentError);
        CHECK_NOTHROW(TrialStore::from_document(doc));
    }

    TEST_CASE("state JSON round trip") {
        TempDir dir;
        TrialService svc(small_config(dir.path));
        CreateRequest req;
        req.id = "rt";
        svc.create_trial(req);
        auto s = svc.record_cohort("rt", cohort({1, 0, 0})).first;
        CHECK(state_from_json(nlohmann::json::parse(state_to_json(*s).dump())) == *s);
    }

    TEST_CASE("snapshot view") {
        TempDir dir;
        TrialService svc(small_config(dir.path));
        CreateRequest req;
        req.id = "v";
        svc.create_trial(req);
        auto s = svc.record_cohort("v", cohort({0, 1, 0})).first;
        auto j = snapshot_json(*s);
        CHECK_FALSE(j.contains("draws"));
        CHECK_FALSE(j.contains("seed"));
        auto curve = predictive_dose_tox(*s->draws, s->grid);
        for (int d = 0; d < 5; ++d) CHECK(j["predictive_curve"][d] == curve[d]);
        CHECK(j["admissible_levels"] == 5);
        CHECK(j["unsafe_probability"][0].get<double>() ==
              doctest::Approx(unsafe_probability(1, 3, 0.3)));
        CHECK(j["mtd_curve"].size() == 30);
        CHECK(j["posterior"]["rhat"].contains("beta0"));
    }

    TEST_CASE("background refinement publishes a new fit") {
        TempDir dir;
        auto cfg = small_config(dir.path);
        cfg.refine_draws = 300;
        TrialService svc(cfg);
        CreateRequest req;
        req.id = "r";
        svc.create_trial(req);
        svc.record_cohort("r", cohort({0, 0, 0}));
        svc.wait_idle();
        auto s = svc.snapshot("r");
        CHECK(s->audit.back().event == AuditEvent::Refine);
        CHECK(s->draws->size() == 300);
        CHECK(replay_tally(s->audit, 5) == s->tally);
        TrialService reload(small_config(dir.path));
        CHECK(*reload.snapshot("r") == *s);
    }

    TEST_CASE("seed modes") {
        CHECK(parse_seed_mode("fixed") == SeedMode::Fixed);
        CHECK(parse_seed_mode("entropy") == SeedMode::Entropy);
        CHECK_THROWS(parse_seed_mode("lucky"));
    }
}
