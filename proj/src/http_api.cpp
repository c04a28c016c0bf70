#include "pdf/http_api.hpp"

#include "pdf/draws_json.hpp"

namespace pdf {

using nlohmann::json;

namespace {

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
    send(res, status, json{{"error", {{"code", code}, {"message", message}}}});
}

json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body);
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
}

std::string idempotency_key(const httplib::Request& req, const json& body) {
    if (body.contains("idempotency_key")) return body["idempotency_key"].get<std::string>();
    return req.get_header_value("Idempotency-Key");
}

// Maps service and parsing failures onto HTTP statuses.
template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const NotFoundError& e) {
            send_error(res, 404, "not_found", e.what());
        } catch (const ConflictError& e) {
            send_error(res, 409, "conflict", e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "invalid_json", e.what());
        } catch (const std::invalid_argument& e) {
            send_error(res, 400, "validation", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

std::vector<ConcentrationObs> parse_obs(const json& j) {
    if (!j.is_array()) throw ValidationError("obs must be an array");
    return obs_from_json(j);
}

PatientInput parse_patient(const json& j) {
    PatientInput p;
    if (j.contains("obs")) p.obs = parse_obs(j["obs"]);
    p.dlt = j.at("dlt").get<int>();
    return p;
}

}  // namespace

PkPrediction parse_prediction(const json& j) {
    auto src = j.value("source", std::string("predicted"));
    PkPrediction::Source s;
    if (src == "measured") s = PkPrediction::Source::Measured;
    else if (src == "predicted") s = PkPrediction::Source::Predicted;
    else throw ValidationError("prediction source must be measured or predicted");
    return PkPrediction(j.at("v_hat").get<double>(), j.at("k_hat").get<double>(), s);
}

CreateRequest parse_create_request(const json& body) {
    CreateRequest r;
    if (body.contains("id")) r.id = body["id"].get<std::string>();
    if (body.contains("escalation")) {
        const auto& e = body["escalation"];
        r.escalation.p_target = e.value("p_target", r.escalation.p_target);
        r.escalation.s_star = e.value("s_star", r.escalation.s_star);
        r.escalation.cohort_size = e.value("cohort_size", r.escalation.cohort_size);
        r.escalation.n_cohorts_stage1 =
            e.value("n_cohorts_stage1", r.escalation.n_cohorts_stage1);
    }
    if (body.contains("grid")) r.grid = DoseGrid(body["grid"].get<std::vector<double>>());
    if (body.contains("prior")) r.prior = prior_from_json(body["prior"]);
    r.n_stage2 = body.value("n_stage2", r.n_stage2);
    return r;
}

CohortRequest parse_cohort_request(const json& body) {
    CohortRequest r;
    if (body.contains("dose_level") && !body["dose_level"].is_null())
        r.dose_level = body["dose_level"].get<std::size_t>();
    for (const auto& p : body.at("patients")) r.patients.push_back(parse_patient(p));
    r.idempotency_key = body.value("idempotency_key", std::string());
    return r;
}

Stage2Request parse_stage2_request(const json& body) {
    Stage2Request r;
    r.prediction = parse_prediction(body.at("prediction"));
    r.dose_level = body.at("dose_level").get<std::size_t>();
    r.patient = parse_patient(body);
    r.override_dose = body.value("override", false);
    r.idempotency_key = body.value("idempotency_key", std::string());
    return r;
}

void mount_routes(httplib::Server& server, TrialService& service) {
    server.Post("/trials", guarded([&](const httplib::Request& req, httplib::Response& res) {
        auto snap = service.create_trial(parse_create_request(body_of(req)));
        json out = snapshot_json(*snap);
        out["recommendation"] = decision_json(*snap->audit.front().decision);
        send(res, 201, out);
    }));

    server.Get("/trials", guarded([&](const httplib::Request&, httplib::Response& res) {
        send(res, 200, json{{"trials", service.list()}});
    }));

    server.Get(R"(/trials/([A-Za-z0-9_-]+))",
               guarded([&](const httplib::Request& req, httplib::Response& res) {
                   send(res, 200, snapshot_json(*service.snapshot(req.matches[1])));
               }));

    server.Post(R"(/trials/([A-Za-z0-9_-]+)/cohorts)",
                guarded([&](const httplib::Request& req, httplib::Response& res) {
                    json body = body_of(req);
                    auto cohort = parse_cohort_request(body);
                    cohort.idempotency_key = idempotency_key(req, body);
                    auto [snap, dec] = service.record_cohort(req.matches[1], cohort);
                    send(res, 200,
                         json{{"decision", dec ? decision_json(*dec) : json(nullptr)},
                              {"trial", snapshot_json(*snap)}});
                }));

    server.Post(R"(/trials/([A-Za-z0-9_-]+)/advance)",
                guarded([&](const httplib::Request& req, httplib::Response& res) {
                    auto snap = service.advance_to_stage2(req.matches[1]);
                    send(res, 200,
                         json{{"stage1_mtd", snap->stage1_mtd ? json(*snap->stage1_mtd)
                                                              : json(nullptr)},
                              {"trial", snapshot_json(*snap)}});
                }));

    server.Post(R"(/trials/([A-Za-z0-9_-]+)/stage2/preview)",
                guarded([&](const httplib::Request& req, httplib::Response& res) {
                    json body = body_of(req);
                    const json& pj = body.contains("prediction") ? body["prediction"] : body;
                    auto p = service.recommend_for_patient(req.matches[1], parse_prediction(pj));
                    send(res, 200,
                         json{{"decision", decision_json(p.decision)},
                              {"beta_hat", {p.beta_hat.beta0, p.beta_hat.beta1}},
                              {"curve", p.curve},
                              {"binding", false}});
                }));

    server.Post(R"(/trials/([A-Za-z0-9_-]+)/stage2/patients)",
                guarded([&](const httplib::Request& req, httplib::Response& res) {
                    json body = body_of(req);
                    auto r = parse_stage2_request(body);
                    r.idempotency_key = idempotency_key(req, body);
                    auto snap = service.record_stage2_patient(req.matches[1], r);
                    send(res, 200, json{{"trial", snapshot_json(*snap)}});
                }));
}

}  // namespace pdf
