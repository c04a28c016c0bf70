// Acceptance run: one PASS/FAIL line per criterion. The exit status is zero
// whenever every check ran to completion, so failures are reported, not hidden.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include <boost/math/distributions/chi_squared.hpp>

#include "oracles.hpp"
#include "pdf/crm.hpp"
#include "pdf/inference.hpp"
#include "pdf/service.hpp"
#include "pdf/sim.hpp"
#include "pdf/stage1.hpp"
#include "pdf/stage2.hpp"
#include "pdf/tox.hpp"

using namespace pdf;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240501;

int g_failed = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    if (!pass) ++g_failed;
    std::cout << (pass ? "PASS " : "FAIL ") << name << " : " << detail << std::endl;
}

std::string fmt(double x, int prec = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << x;
    return os.str();
}

std::string vec(const std::vector<double>& v, int prec = 3) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i], prec);
    return s + ")";
}

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

const double kTrueAvg[5][5] = {{.151, .287, .470, .586, .665},
                               {.073, .156, .293, .397, .478},
                               {.049, .110, .220, .310, .385},
                               {.111, .158, .218, .260, .293},
                               {.422, .593, .747, .819, .860}};

const double kSelPdf[3][5] = {{.147, .515, .250, .031, .001},
                              {.012, .178, .428, .284, .071},
                              {.003, .054, .294, .398, .228}};

void true_average() {
    double worst = 0;
    std::string detail;
    for (int s = 1; s <= 5; ++s) {
        Philox4x32 rng(kSeed, stream_id(0, StreamPurpose::Misc, 100 + s));
        auto p = true_avg_pd(builtin_scenario(s), 100000, rng);
        for (int d = 0; d < 5; ++d) worst = std::max(worst, std::abs(p[d] - kTrueAvg[s - 1][d]));
        detail += " SC" + std::to_string(s) + vec(p);
    }
    report("true-average toxicity", worst <= 0.01, "max |diff| " + fmt(worst, 4) + detail);
}

TrialConfig desk_config(bool errors) {
    TrialConfig c;
    c.mcmc.burn_in = 500;
    c.mcmc.draws = 500;
    c.stage2_error = errors;
    return c;
}

struct Runs {
    std::vector<OperatingCharacteristics> off, on;
    OperatingCharacteristics sc5;
};

Runs simulate_all() {
    Runs r;
    for (int s = 1; s <= 4; ++s) {
        r.off.push_back(replicate(builtin_scenario(s), Design::PDF, 200, desk_config(false),
                                  kSeed + s, threads()));
        r.on.push_back(replicate(builtin_scenario(s), Design::PDF, 200, desk_config(true),
                                 kSeed + s, threads()));
    }
    r.sc5 = replicate(builtin_scenario(5), Design::PDF, 200, desk_config(false), kSeed + 5,
                      threads());
    return r;
}

void stage1_selection(const Runs& r) {
    bool pass = true;
    std::string detail;
    for (int s = 0; s < 3; ++s) {
        const auto& sel = r.off[s].sel;
        std::size_t mode = std::max_element(sel.begin(), sel.end()) - sel.begin();
        double worst = 0;
        for (int d = 0; d < 5; ++d) worst = std::max(worst, std::abs(sel[d] - kSelPdf[s][d]));
        bool ok = mode == static_cast<std::size_t>(s + 1) && worst <= 0.10;
        pass = pass && ok;
        detail += " SC" + std::to_string(s + 1) + " sel" + vec(sel) + " mode=" +
                  std::to_string(mode + 1) + " max|diff|=" + fmt(worst);
    }
    report("stage-I selection (200 reps)", pass, detail);
}

void stage2_safety(const Runs& r) {
    bool pass = true;
    std::string detail;
    for (int s = 0; s < 4; ++s) {
        double a = r.off[s].stage2_pooled_rate, b = r.on[s].stage2_pooled_rate;
        bool ok = a >= 0.18 && a <= 0.40 && b - a < 0.06;
        pass = pass && ok;
        detail += " SC" + std::to_string(s + 1) + " " + fmt(a) + "->" + fmt(b);
    }
    report("stage-II pooled DLT rate", pass, detail);
}

void sc5_guardrail(const Runs& r) {
    std::size_t excluded = r.sc5.excluded_assignments;
    for (const auto& oc : r.off) excluded += oc.excluded_assignments;
    for (const auto& oc : r.on) excluded += oc.excluded_assignments;
    double share = r.sc5.stage1_share[0];
    report("SC5 guardrail", share >= 0.90 && excluded == 0,
           "dose-1 share " + fmt(share) + " mean_n" + vec(r.sc5.mean_n) +
               " excluded assignments " + std::to_string(excluded));
}

void oracle_equivalences() {
    std::mt19937_64 gen(kSeed);
    std::uniform_real_distribution<double> u(0, 1);

    double pava_err = 0;
    for (int it = 0; it < 500; ++it) {
        std::size_t n = 1 + gen() % 12;
        std::vector<double> v(n), w(n);
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = u(gen);
            w[i] = 0.1 + 20 * u(gen);
        }
        auto a = pava(v, w);
        auto b = oracle::isotonic_qp(v, w);
        for (std::size_t i = 0; i < n; ++i) pava_err = std::max(pava_err, std::abs(a[i] - b[i]));
    }

    double tail_err = 0;
    for (int it = 0; it < 1000; ++it) {
        int n = static_cast<int>(gen() % 31);
        int y = n ? static_cast<int>(gen() % (n + 1)) : 0;
        double pt = 0.05 + 0.9 * u(gen);
        tail_err = std::max(tail_err, std::abs(unsafe_probability(y, n, pt) -
                                               oracle::beta_upper_tail(y + 0.05, n - y + 0.05, pt)));
    }

    double pred_err = 0;
    DoseGrid grid = DoseGrid::standard();
    for (int rep = 0; rep < 20; ++rep) {
        PosteriorDraws pd;
        std::size_t n = 1 + gen() % 10;
        for (int s = 0; s < 200; ++s) {
            ThetaDraw t;
            for (std::size_t i = 0; i < n; ++i) {
                t.v.push_back(0.5 + 8 * u(gen));
                t.k.push_back(0.2 + 5 * u(gen));
            }
            t.alpha_v = t.lambda_v = t.alpha_k = t.lambda_k = 1;
            t.sigma = 0.5;
            t.beta0 = -6 + 6 * u(gen);
            t.beta1 = 0.1 + 3 * u(gen);
            pd.draws.push_back(t);
        }
        auto got = predictive_dose_tox(pd, grid);
        for (std::size_t d = 0; d < grid.size(); ++d) {
            double sum = 0;
            for (const auto& t : pd.draws) {
                double vbar = 0, kbar = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    vbar += t.v[i];
                    kbar += t.k[i];
                }
                vbar /= n;
                kbar /= n;
                sum += oracle::logistic(t.beta0 + t.beta1 * std::log(grid[d] / (vbar * kbar)));
            }
            double ref = sum / pd.size();
            pred_err = std::max(pred_err, std::abs(got[d] - ref) / ref);
        }
    }

    double crm_err = 0;
    CrmConfig crm;
    for (int rep = 0; rep < 12; ++rep) {
        std::vector<CrmObservation> h;
        std::vector<std::pair<std::size_t, int>> hp;
        std::size_t len = gen() % 22;
        for (std::size_t i = 0; i < len; ++i) {
            std::size_t lv = gen() % 5;
            int y = u(gen) < crm.skeleton[lv] ? 1 : 0;
            h.push_back({lv, y});
            hp.emplace_back(lv, y);
        }
        auto a = crm_posterior_means(h, crm);
        auto b = oracle::crm_trapezoid(crm.skeleton, crm.prior_sd, hp);
        for (int d = 0; d < 5; ++d) crm_err = std::max(crm_err, std::abs(a[d] - b[d]));
    }

    bool pass = pava_err <= 1e-8 && tail_err <= 1e-8 && pred_err <= 1e-12 && crm_err <= 1e-6;
    std::ostringstream os;
    os << "pava " << pava_err << ", unsafe_probability " << tail_err << ", predictive (rel) "
       << pred_err << ", crm " << crm_err;
    report("oracle equivalences", pass, os.str());
}

// Calibration: the rank of the true value among posterior draws is uniform
// when data are generated from the prior the sampler conditions on.
void sampler_validation() {
    PriorSpec prior;
    prior.alpha_v = ScalarPrior::point(4);
    prior.lambda_v = ScalarPrior::point(1);
    prior.alpha_k = ScalarPrior::point(3);
    prior.lambda_k = ScalarPrior::point(1);
    const DoseGrid grid = DoseGrid::standard();
    const std::vector<double> times{1, 3, 5, 7};
    const std::size_t levels[3] = {0, 2, 4};

    McmcConfig cfg;
    cfg.burn_in = 2000;
    cfg.draws = 99;
    cfg.thin = 50;
    const int reps = 200, bins = 10;
    std::vector<std::array<int, bins>> hist(3);
    for (auto& h : hist) h.fill(0);

    for (int rep = 0; rep < reps; ++rep) {
        Philox4x32 truth_rng(kSeed, stream_id(rep, StreamPurpose::Patient, 0));
        double beta0 = sample(prior.beta0, truth_rng, prior.conventions);
        double beta1 = sample(prior.beta1, truth_rng, prior.conventions);
        double sigma = sample(prior.sigma, truth_rng, prior.conventions);
        Dataset data{grid, {}};
        std::normal_distribution<double> z;
        std::uniform_real_distribution<double> u;
        for (std::size_t i = 0; i < 3; ++i) {
            double v = sample_pk_population(PkFamily::Gamma, 4, 1, truth_rng, prior.conventions);
            double k = sample_pk_population(PkFamily::Gamma, 3, 1, truth_rng, prior.conventions);
            PatientRecord r;
            r.dose_level = levels[i];
            double dose = grid[levels[i]];
            for (double t : times)
                r.obs.push_back({t, std::exp(std::log(dose / v) - k * t + sigma * z(truth_rng))});
            double p = inv_logit(beta0 + beta1 * std::log(dose / (v * k)));
            r.dlt = u(truth_rng) < p ? 1 : 0;
            data.patients.push_back(std::move(r));
        }
        Philox4x32 rng(kSeed, stream_id(rep, StreamPurpose::Mcmc, 0));
        auto pd = sample_posterior(data, prior, cfg, rng);
        const double truth[3] = {beta0, beta1, sigma};
        for (int j = 0; j < 3; ++j) {
            int rank = 0;
            for (const auto& t : pd.draws) {
                double x = j == 0 ? t.beta0 : j == 1 ? t.beta1 : t.sigma;
                rank += x < truth[j];
            }
            int bin = rank * bins / static_cast<int>(pd.size() + 1);
            ++hist[j][bin];
        }
    }
    boost::math::chi_squared chi(bins - 1);
    bool sbc_ok = true;
    std::string detail = "SBC p-values";
    const char* names[3] = {"beta0", "beta1", "sigma"};
    for (int j = 0; j < 3; ++j) {
        double expected = static_cast<double>(reps) / bins, stat = 0;
        for (int c : hist[j]) stat += (c - expected) * (c - expected) / expected;
        double p = boost::math::cdf(boost::math::complement(chi, stat));
        sbc_ok = sbc_ok && p > 0.01;
        detail += std::string(" ") + names[j] + "=" + fmt(p);
    }

    // Recovery at fixed true coefficients. With 30 patients the prior on beta1
    // still pulls coverage to about 90% even for very long chains, so the
    // data set is large enough for the likelihood to dominate.
    Scenario sc = builtin_scenario(1);
    McmcConfig rc;
    rc.burn_in = 2000;
    rc.draws = 4000;
    rc.thin = 2;
    int cover0 = 0, cover1 = 0;
    for (int rep = 0; rep < 100; ++rep) {
        Philox4x32 prng(kSeed + 1, stream_id(rep, StreamPurpose::Patient, 0));
        Dataset data{grid, {}};
        for (int i = 0; i < 100; ++i) data.patients.push_back(simulate_patient(sc, i % 5, prng).record);
        Philox4x32 rng(kSeed + 1, stream_id(rep, StreamPurpose::Mcmc, 0));
        auto pd = sample_posterior(data, PriorSpec{}, rc, rng);
        std::vector<double> b0, b1;
        for (const auto& t : pd.draws) {
            b0.push_back(t.beta0);
            b1.push_back(t.beta1);
        }
        auto inside = [](std::vector<double> x, double truth) {
            std::sort(x.begin(), x.end());
            double lo = x[static_cast<std::size_t>(0.025 * (x.size() - 1))];
            double hi = x[static_cast<std::size_t>(0.975 * (x.size() - 1))];
            return lo <= truth && truth <= hi;
        };
        cover0 += inside(b0, sc.true_coefs.beta0);
        cover1 += inside(b1, sc.true_coefs.beta1);
    }
    detail += "; 95% coverage beta0 " + std::to_string(cover0) + "/100, beta1 " +
              std::to_string(cover1) + "/100";
    report("sampler calibration and recovery", sbc_ok && cover0 >= 90 && cover1 >= 90, detail);
}

DoseTally random_tally(std::mt19937_64& gen) {
    std::vector<int> n(5), y(5);
    for (int d = 0; d < 5; ++d) {
        n[d] = static_cast<int>(gen() % 10);
        y[d] = n[d] ? static_cast<int>(gen() % (n[d] + 1)) : 0;
    }
    return DoseTally(n, y);
}

void rule_properties() {
    std::mt19937_64 gen(kSeed + 7);
    std::uniform_real_distribution<double> u(0, 1);
    EscalationConfig esc;
    const int N = 10000;
    int skip = 0, coherence = 0, termination = 0, monotone = 0;
    for (int it = 0; it < N; ++it) {
        DoseTally t = random_tally(gen);
        std::size_t cur = gen() % 5;
        std::vector<double> p(5);
        for (auto& x : p) x = u(gen);
        std::sort(p.begin(), p.end());
        auto d = next_cohort_dose(t, cur, p, esc);
        std::size_t limit = safe_limit(t, esc);
        if (d.terminated() != (limit == 0)) ++termination;
        if (d.terminated()) continue;
        if (d.level > cur + 1 || d.level >= limit) ++skip;
        if (t.n(cur) > 0) {
            double rate = static_cast<double>(t.y(cur)) / t.n(cur);
            if (rate > esc.p_target && d.level > cur) ++coherence;
            if (rate < esc.p_target && cur < limit && d.level < cur) ++coherence;
        }
    }
    // Stage-II termination and argmin monotonicity in the predicted exposure v k.
    DoseGrid grid = DoseGrid::standard();
    for (int it = 0; it < N; ++it) {
        DoseTally t = random_tally(gen);
        ToxCoefs b{-6 + 6 * u(gen), 0.2 + 3 * u(gen)};
        double vk1 = 0.2 + 40 * u(gen), vk2 = 0.2 + 40 * u(gen);
        if (vk1 > vk2) std::swap(vk1, vk2);
        auto d1 = assign_precision_dose(patient_tox_curve(PkPrediction(vk1, 1), b, grid), t, esc);
        auto d2 = assign_precision_dose(patient_tox_curve(PkPrediction(vk2, 1), b, grid), t, esc);
        bool empty = safe_limit(t, esc) == 0;
        if (d1.terminated() != empty || d2.terminated() != empty) ++termination;
        if (!empty && d2.level < d1.level) ++monotone;
    }
    report("rule-engine properties", skip + coherence + termination + monotone == 0,
           std::to_string(N) + " states each; violations no-skip/safety " + std::to_string(skip) +
               ", coherence " + std::to_string(coherence) + ", termination " +
               std::to_string(termination) + ", stage-II monotonicity " +
               std::to_string(monotone));
}

void service_replay() {
    std::random_device rd;
    fs::path dir = fs::temp_directory_path() / ("pdf-acceptance-" + std::to_string(rd()));
    ServiceConfig cfg;
    cfg.data_dir = dir;
    cfg.mcmc.burn_in = 20;
    cfg.mcmc.draws = 20;
    std::mt19937_64 gen(kSeed + 11);
    std::uniform_real_distribution<double> u(0, 1);
    const int N = 1000;
    int mismatched = 0, replay_bad = 0;
    std::vector<Snapshot> finals;
    {
        TrialService svc(cfg);
        TrialStore store(dir);
        for (int c = 0; c < N; ++c) {
            CreateRequest req;
            req.id = "h" + std::to_string(c);
            svc.create_trial(req);
            int cohorts = 1 + static_cast<int>(gen() % 7);
            double tox = 0.05 + 0.4 * u(gen);
            Snapshot s;
            for (int k = 0; k < cohorts; ++k) {
                CohortRequest cr;
                for (int i = 0; i < 3; ++i) {
                    PatientInput p;
                    p.obs.push_back({1.0, 1 + 5 * u(gen)});
                    p.obs.push_back({5.0, 0.1 + u(gen)});
                    p.dlt = u(gen) < tox;
                    cr.patients.push_back(p);
                }
                if (u(gen) < 0.3) cr.idempotency_key = "k" + std::to_string(k);
                s = svc.record_cohort(*req.id, cr).first;
                if (cr.idempotency_key.size() && u(gen) < 0.5)
                    s = svc.record_cohort(*req.id, cr).first;
                if (s->stage != TrialStage::Stage1 || !s->stage1_recommendation) break;
            }
            if (s->stage == TrialStage::Stage1 && !s->stage1_recommendation) {
                s = svc.advance_to_stage2(*req.id);
                int n2 = static_cast<int>(gen() % 10);
                for (int i = 0; i < n2 && s->stage == TrialStage::Stage2; ++i) {
                    Stage2Request r;
                    r.prediction = PkPrediction(0.5 + 6 * u(gen), 0.3 + 4 * u(gen));
                    auto pv = svc.recommend_for_patient(*req.id, r.prediction);
                    r.dose_level = pv.decision.level;
                    if (u(gen) < 0.2) {
                        r.dose_level = gen() % 5;
                        r.override_dose = true;
                    }
                    r.patient.dlt = u(gen) < tox;
                    s = svc.record_stage2_patient(*req.id, r);
                }
            }
            TrialState loaded = store.load(*req.id);
            if (!(loaded == *s)) ++mismatched;
            if (!(state_from_json(nlohmann::json::parse(state_to_json(*s).dump())) == *s))
                ++mismatched;
            if (replay_tally(s->audit, s->grid.size()) != s->tally) ++replay_bad;
            finals.push_back(s);
        }
    }
    {
        TrialService reloaded(cfg);
        for (const auto& s : finals)
            if (!(*reloaded.snapshot(s->id) == *s)) ++mismatched;
    }
    fs::remove_all(dir);
    report("service store/load and audit replay", mismatched == 0 && replay_bad == 0,
           std::to_string(N) + " histories; store/load mismatches " + std::to_string(mismatched) +
               ", replay mismatches " + std::to_string(replay_bad));
}

}  // namespace

int main(int argc, char** argv) {
    // Optional arguments pick sections: true-avg sim oracles sampler rules service.
    std::vector<std::string> only(argv + 1, argv + argc);
    auto want = [&](const char* name) {
        return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
    };
    auto start = std::chrono::steady_clock::now();
    try {
        if (want("true-avg")) true_average();
        if (want("sim")) {
            auto runs = simulate_all();
            stage1_selection(runs);
            stage2_safety(runs);
            sc5_guardrail(runs);
        }
        if (want("oracles")) oracle_equivalences();
        if (want("sampler")) sampler_validation();
        if (want("rules")) rule_properties();
        if (want("service")) service_replay();
    } catch (const std::exception& e) {
        std::cout << "ERROR " << e.what() << std::endl;
        return 1;
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << g_failed << " criteria failed; " << fmt(secs, 1) << " s" << std::endl;
    return 0;
}
