#include "pdf/draws_json.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pdf {

using nlohmann::json;

namespace {

// JSON has no infinity; a diverged split-Rhat is stored as null.
double number_or_inf(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

struct ScalarField {
    const char* name;
    double ThetaDraw::*member;
};

constexpr ScalarField kScalars[] = {
    {"beta0", &ThetaDraw::beta0},     {"beta1", &ThetaDraw::beta1},
    {"sigma", &ThetaDraw::sigma},     {"alpha_v", &ThetaDraw::alpha_v},
    {"lambda_v", &ThetaDraw::lambda_v}, {"alpha_k", &ThetaDraw::alpha_k},
    {"lambda_k", &ThetaDraw::lambda_k},
};

std::string pk_family_name(PkFamily f) {
    return f == PkFamily::Gamma ? "gamma" : "lognormal";
}

PkFamily parse_pk_family(const std::string& s) {
    if (s == "gamma") return PkFamily::Gamma;
    if (s == "lognormal") return PkFamily::LogNormal;
    throw std::invalid_argument("unknown PK family: " + s);
}

}  // namespace

json draws_to_json(const PosteriorDraws& draws) {
    json meta;
    meta["burn_in"] = draws.meta.burn_in;
    meta["thin"] = draws.meta.thin;
    meta["seed"] = draws.meta.seed;
    meta["stream"] = draws.meta.stream;
    meta["acceptance"] = json::object();
    for (const auto& [k, v] : draws.meta.acceptance) meta["acceptance"][k] = v;
    meta["rhat"] = json::object();
    for (const auto& [k, v] : draws.meta.rhat)
        meta["rhat"][k] = std::isfinite(v) ? json(v) : json(nullptr);
    meta["warnings"] = draws.meta.warnings;

    json body = json::object();
    for (const auto& f : kScalars) {
        json arr = json::array();
        for (const auto& th : draws.draws) arr.push_back(th.*(f.member));
        body[f.name] = std::move(arr);
    }
    json v = json::array(), k = json::array();
    for (const auto& th : draws.draws) {
        v.push_back(th.v);
        k.push_back(th.k);
    }
    body["v"] = std::move(v);
    body["k"] = std::move(k);
    return json{{"version", kDrawsSchemaVersion}, {"metadata", meta}, {"draws", body}};
}

PosteriorDraws draws_from_json(const json& doc) {
    if (doc.at("version").get<int>() != kDrawsSchemaVersion)
        throw std::invalid_argument("unsupported posterior draws version");
    PosteriorDraws out;
    const auto& meta = doc.at("metadata");
    out.meta.burn_in = meta.at("burn_in").get<std::size_t>();
    out.meta.thin = meta.at("thin").get<std::size_t>();
    out.meta.seed = meta.at("seed").get<std::uint64_t>();
    out.meta.stream = meta.at("stream").get<std::uint64_t>();
    for (const auto& [k, v] : meta.at("acceptance").items())
        out.meta.acceptance[k] = number_or_inf(v);
    for (const auto& [k, v] : meta.at("rhat").items())
        out.meta.rhat[k] = number_or_inf(v);
    out.meta.warnings = meta.at("warnings").get<std::vector<std::string>>();

    const auto& body = doc.at("draws");
    const std::size_t m = body.at("beta0").size();
    out.draws.resize(m);
    for (const auto& f : kScalars) {
        const auto& arr = body.at(f.name);
        if (arr.size() != m) throw std::invalid_argument("ragged draws document");
        for (std::size_t i = 0; i < m; ++i) out.draws[i].*(f.member) = arr[i].get<double>();
    }
    const auto& v = body.at("v");
    const auto& k = body.at("k");
    if (v.size() != m || k.size() != m)
        throw std::invalid_argument("ragged draws document");
    for (std::size_t i = 0; i < m; ++i) {
        out.draws[i].v = v[i].get<std::vector<double>>();
        out.draws[i].k = k[i].get<std::vector<double>>();
        if (!out.draws[i].valid())
            throw std::invalid_argument("stored draw violates positivity");
    }
    return out;
}

json scalar_prior_to_json(const ScalarPrior& p) {
    return json{{"family", family_name(p.family)}, {"a", p.a}, {"b", p.b}};
}

ScalarPrior scalar_prior_from_json(const json& doc) {
    ScalarPrior p;
    p.family = parse_family(doc.at("family").get<std::string>());
    p.a = doc.at("a").get<double>();
    p.b = doc.value("b", 0.0);
    return p;
}

json prior_to_json(const PriorSpec& prior) {
    return json{
        {"v_family", pk_family_name(prior.v_family)},
        {"k_family", pk_family_name(prior.k_family)},
        {"alpha_v", scalar_prior_to_json(prior.alpha_v)},
        {"lambda_v", scalar_prior_to_json(prior.lambda_v)},
        {"alpha_k", scalar_prior_to_json(prior.alpha_k)},
        {"lambda_k", scalar_prior_to_json(prior.lambda_k)},
        {"sigma", scalar_prior_to_json(prior.sigma)},
        {"beta0", scalar_prior_to_json(prior.beta0)},
        {"beta1", scalar_prior_to_json(prior.beta1)},
        {"gamma_convention",
         prior.conventions.gamma == GammaConvention::ShapeRate ? "shape_rate"
                                                               : "shape_scale"},
        {"lognormal_spread",
         prior.conventions.lognormal == LogNormalSpread::Variance ? "variance" : "sd"},
    };
}

PriorSpec prior_from_json(const json& doc) {
    PriorSpec p;
    if (doc.contains("v_family")) p.v_family = parse_pk_family(doc["v_family"]);
    if (doc.contains("k_family")) p.k_family = parse_pk_family(doc["k_family"]);
    auto field = [&](const char* name, ScalarPrior& dst) {
        if (doc.contains(name)) dst = scalar_prior_from_json(doc[name]);
    };
    field("alpha_v", p.alpha_v);
    field("lambda_v", p.lambda_v);
    field("alpha_k", p.alpha_k);
    field("lambda_k", p.lambda_k);
    field("sigma", p.sigma);
    field("beta0", p.beta0);
    field("beta1", p.beta1);
    if (doc.contains("gamma_convention")) {
        auto s = doc["gamma_convention"].get<std::string>();
        if (s == "shape_rate") p.conventions.gamma = GammaConvention::ShapeRate;
        else if (s == "shape_scale") p.conventions.gamma = GammaConvention::ShapeScale;
        else throw std::invalid_argument("unknown gamma_convention: " + s);
    }
    if (doc.contains("lognormal_spread")) {
        auto s = doc["lognormal_spread"].get<std::string>();
        if (s == "variance") p.conventions.lognormal = LogNormalSpread::Variance;
        else if (s == "sd") p.conventions.lognormal = LogNormalSpread::StdDev;
        else throw std::invalid_argument("unknown lognormal_spread: " + s);
    }
    p.validate();
    return p;
}

json obs_to_json(const std::vector<ConcentrationObs>& obs) {
    json arr = json::array();
    for (const auto& o : obs) arr.push_back(json{{"time", o.time}, {"value", o.value}});
    return arr;
}

std::vector<ConcentrationObs> obs_from_json(const json& doc) {
    std::vector<ConcentrationObs> out;
    for (const auto& o : doc)
        out.emplace_back(o.at("time").get<double>(), o.at("value").get<double>());
    return out;
}

}  // namespace pdf
