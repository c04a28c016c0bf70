#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pdf/inference.hpp"

namespace pdf {

namespace {


// Flat state layout; every coordinate except beta0 lives on the log scale.
enum Coord : std::size_t {
    kBeta0 = 0,
    kLogBeta1,
    kLogAlphaV,
    kLogLambdaV,
    kLogAlphaK,
    kLogLambdaK,
    kLogSigma,
    kFirstPatient
};

inline std::size_t log_v_index(std::size_t i) { return kFirstPatient + 2 * i; }
inline std::size_t log_k_index(std::size_t i) { return kFirstPatient + 2 * i + 1; }

struct PatientData {
    double log_dose = 0.0;
    std::vector<double> t;
    std::vector<double> log_x;
    int dlt = -1;
};

// Population law g(. | alpha, lambda) with per-sweep constants cached.
struct PopLaw {
    PkFamily family;
    double alpha = 1, rate = 1, mu = 0, sd = 1;

    void set(PkFamily fam, double a, double lambda, const Conventions& conv) {
        family = fam;
        alpha = a;
        rate = gamma_rate(lambda, conv);
        if (family == PkFamily::LogNormal) {
            auto ln = gamma_to_lognormal(alpha, rate);
            mu = ln.mu;
            sd = std::sqrt(ln.sigma2);
        }
    }

    // Terms of log g(x) that vary with x.
    double kernel(double x, double lx) const {
        if (family == PkFamily::Gamma) return (alpha - 1.0) * lx - rate * x;
        double z = (lx - mu) / sd;
        return -0.5 * z * z - lx;
    }
};

// Full log g summed over patients, as a function of (alpha, lambda).
double population_sum(PkFamily family, double alpha, double lambda,
                      const std::vector<double>& lx, const Conventions& conv) {
    const double n = static_cast<double>(lx.size());
    const double rate = gamma_rate(lambda, conv);
    if (family == PkFamily::Gamma) {
        double sum_lx = 0.0, sum_x = 0.0;
        for (double l : lx) {
            sum_lx += l;
            sum_x += std::exp(l);
        }
        return n * (alpha * std::log(rate) - std::lgamma(alpha)) +
               (alpha - 1.0) * sum_lx - rate * sum_x;
    }
    auto ln = gamma_to_lognormal(alpha, rate);
    double sd = std::sqrt(ln.sigma2);
    double s = -n * std::log(sd);
    for (double l : lx) {
        double z = (l - ln.mu) / sd;
        s += -0.5 * z * z - l;
    }
    return s;
}

enum class BlockKind { Patient, Beta, HyperV, HyperK, Sigma };

const char* block_name(BlockKind kind) {
    switch (kind) {
        case BlockKind::Patient: return "patients";
        case BlockKind::Beta: return "beta";
        case BlockKind::HyperV: return "hyper_v";
        case BlockKind::HyperK: return "hyper_k";
        case BlockKind::Sigma: return "sigma";
    }
    return "?";
}

// Random-walk proposal over up to two coordinates with adaptive scale and
// shape. Only iterations recorded with adapting = true move the proposal.
class BlockProposal {
   public:
    BlockProposal(BlockKind kind, std::vector<std::size_t> coords,
                  std::vector<double> init_sd)
        : kind_(kind), coords_(std::move(coords)) {
        if (coords_.empty() || coords_.size() > 2)
            throw std::logic_error("block dimension must be 1 or 2");
        for (std::size_t j = 0; j < coords_.size(); ++j) chol_[j][j] = init_sd[j];
    }

    BlockKind kind() const { return kind_; }
    const std::vector<std::size_t>& coords() const { return coords_; }
    std::size_t dim() const { return coords_.size(); }

    void propose(const std::vector<double>& x, std::array<double, 2>& out,
                 Philox4x32& rng) {
        std::array<double, 2> z{};
        for (std::size_t j = 0; j < dim(); ++j) z[j] = normal_(rng);
        double s = std::exp(log_scale_);
        out[0] = x[coords_[0]] + s * chol_[0][0] * z[0];
        if (dim() == 2)
            out[1] = x[coords_[1]] + s * (chol_[1][0] * z[0] + chol_[1][1] * z[1]);
    }

    void record(bool accepted, const std::vector<double>& x, bool adapting,
                std::size_t burn_in) {
        ++tries_;
        if (accepted) ++accepts_;
        if (!adapting) return;
        ++t_;
        double gain = std::pow(static_cast<double>(t_), -0.6);
        log_scale_ += gain * ((accepted ? 1.0 : 0.0) - target_);
        log_scale_ = std::clamp(log_scale_, -12.0, 6.0);

        if (t_ < burn_in / 5) return;
        // Welford update of the block's empirical covariance.
        ++n_cov_;
        std::array<double, 2> delta{};
        for (std::size_t j = 0; j < dim(); ++j) {
            delta[j] = x[coords_[j]] - mean_[j];
            mean_[j] += delta[j] / static_cast<double>(n_cov_);
        }
        for (std::size_t a = 0; a < dim(); ++a)
            for (std::size_t b = 0; b < dim(); ++b)
                m2_[a][b] += delta[a] * (x[coords_[b]] - mean_[b]);
        if (n_cov_ >= 50 && n_cov_ % 25 == 0) reshape();
    }

    void set_target(double t) { target_ = t; }
    void reset_counts() { tries_ = accepts_ = 0; }
    double acceptance() const {
        return tries_ == 0 ? std::numeric_limits<double>::quiet_NaN()
                           : static_cast<double>(accepts_) /
                                 static_cast<double>(tries_);
    }

   private:
    void reshape() {
        double n1 = static_cast<double>(n_cov_ - 1);
        double c00 = m2_[0][0] / n1 + 1e-10;
        if (dim() == 1) {
            chol_[0][0] = std::sqrt(c00);
        } else {
            double c11 = m2_[1][1] / n1 + 1e-10;
            double c10 = m2_[1][0] / n1;
            double l00 = std::sqrt(c00);
            double l10 = c10 / l00;
            double r = c11 - l10 * l10;
            if (!(r > 0.0)) return;
            chol_[0][0] = l00;
            chol_[1][0] = l10;
            chol_[1][1] = std::sqrt(r);
        }
        if (!shaped_) {
            log_scale_ = std::log(2.38 / std::sqrt(static_cast<double>(dim())));
            shaped_ = true;
        }
    }

    BlockKind kind_;
    std::vector<std::size_t> coords_;
    std::array<std::array<double, 2>, 2> chol_{};
    double log_scale_ = 0.0;
    double target_ = 0.35;
    bool shaped_ = false;
    std::size_t t_ = 0;
    std::size_t n_cov_ = 0;
    std::array<double, 2> mean_{};
    std::array<std::array<double, 2>, 2> m2_{};
    std::size_t tries_ = 0, accepts_ = 0;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

class Sampler {
   public:
    Sampler(const Dataset& data, const PriorSpec& prior, const McmcConfig& cfg)
        : prior_(prior), cfg_(cfg), conv_(prior.conventions) {
        data.validate();
        prior.validate();
        n_ = data.patients.size();
        patients_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const auto& rec = data.patients[i];
            auto& p = patients_[i];
            p.log_dose = std::log(data.dose_of(i));
            for (const auto& o : rec.obs) {
                p.t.push_back(o.time);
                p.log_x.push_back(std::log(o.value));
            }
            p.dlt = rec.dlt ? *rec.dlt : -1;
            n_obs_ += p.t.size();
        }
        x_.assign(kFirstPatient + 2 * n_, 0.0);
        ssr_.assign(n_, 0.0);
        initialize();
        build_blocks();
    }

    PosteriorDraws run(Philox4x32& rng) {
        PosteriorDraws out;
        out.meta.burn_in = cfg_.burn_in;
        out.meta.thin = cfg_.thin;
        out.meta.seed = rng.seed();
        out.meta.stream = rng.stream();
        const std::size_t thin = std::max<std::size_t>(1, cfg_.thin);
        const std::size_t total = cfg_.burn_in + cfg_.draws * thin;
        out.draws.reserve(cfg_.draws);

        for (std::size_t it = 0; it < total; ++it) {
            const bool adapting = it < cfg_.burn_in;
            if (it == cfg_.burn_in)
                for (auto& b : blocks_) b.reset_counts();
            for (auto& b : blocks_) step(b, rng, adapting);
            if (!adapting && (it - cfg_.burn_in + 1) % thin == 0)
                out.draws.push_back(current_draw());
        }
        diagnostics(out);
        return out;
    }

   private:
    double value(std::size_t c) const {
        return c == kBeta0 ? x_[c] : std::exp(x_[c]);
    }

    void initialize() {
        auto start = [&](std::size_t c, const ScalarPrior& p) {
            double v = prior_mean(p, conv_);
            x_[c] = c == kBeta0 ? v : std::log(v);
        };
        start(kBeta0, prior_.beta0);
        start(kLogBeta1, prior_.beta1);
        start(kLogAlphaV, prior_.alpha_v);
        start(kLogLambdaV, prior_.lambda_v);
        start(kLogAlphaK, prior_.alpha_k);
        start(kLogLambdaK, prior_.lambda_k);
        start(kLogSigma, prior_.sigma);

        std::size_t warm = 0;
        if (cfg_.init) {
            const auto& th = *cfg_.init;
            if (!th.valid())
                throw std::invalid_argument("initial draw violates positivity");
            auto take = [&](std::size_t c, const ScalarPrior& p, double v) {
                if (!p.fixed()) x_[c] = c == kBeta0 ? v : std::log(v);
            };
            take(kBeta0, prior_.beta0, th.beta0);
            take(kLogBeta1, prior_.beta1, th.beta1);
            take(kLogAlphaV, prior_.alpha_v, th.alpha_v);
            take(kLogLambdaV, prior_.lambda_v, th.lambda_v);
            take(kLogAlphaK, prior_.alpha_k, th.alpha_k);
            take(kLogLambdaK, prior_.lambda_k, th.lambda_k);
            take(kLogSigma, prior_.sigma, th.sigma);
            warm = std::min(th.v.size(), n_);
            for (std::size_t i = 0; i < warm; ++i) {
                x_[log_v_index(i)] = std::log(th.v[i]);
                x_[log_k_index(i)] = std::log(th.k[i]);
            }
        }
        const double v_mean = value(kLogAlphaV) / gamma_rate(value(kLogLambdaV), conv_);
        const double k_mean = value(kLogAlphaK) / gamma_rate(value(kLogLambdaK), conv_);
        for (std::size_t i = warm; i < n_; ++i) data_driven_start(i, v_mean, k_mean);
        refresh_caches();
    }

    // Least-squares fit of log X = log d - log v - k t for a starting point.
    void data_driven_start(std::size_t i, double v_mean, double k_mean) {
        const auto& p = patients_[i];
        double v = v_mean, k = k_mean;
        const std::size_t m = p.t.size();
        if (m >= 1) {
            double tbar = 0, ybar = 0;
            for (std::size_t j = 0; j < m; ++j) {
                tbar += p.t[j];
                ybar += p.log_x[j];
            }
            tbar /= static_cast<double>(m);
            ybar /= static_cast<double>(m);
            double stt = 0, sty = 0;
            for (std::size_t j = 0; j < m; ++j) {
                stt += (p.t[j] - tbar) * (p.t[j] - tbar);
                sty += (p.t[j] - tbar) * (p.log_x[j] - ybar);
            }
            if (stt > 0.0 && -sty / stt > 0.0) k = -sty / stt;
            double intercept = ybar + k * tbar;  // log d - log v
            v = std::exp(p.log_dose - intercept);
        }
        v = std::clamp(v, 1e-3, 1e6);
        k = std::clamp(k, 1e-3, 1e3);
        x_[log_v_index(i)] = std::log(v);
        x_[log_k_index(i)] = std::log(k);
    }

    void build_blocks() {
        for (std::size_t i = 0; i < n_; ++i)
            blocks_.emplace_back(BlockKind::Patient,
                                 std::vector<std::size_t>{log_v_index(i), log_k_index(i)},
                                 std::vector<double>{0.1, 0.1});
        auto add = [&](BlockKind kind,
                       std::initializer_list<std::pair<std::size_t, const ScalarPrior*>> cs,
                       std::initializer_list<double> sds) {
            std::vector<std::size_t> coords;
            std::vector<double> init;
            auto sd = sds.begin();
            for (auto [c, p] : cs) {
                if (!p->fixed()) {
                    coords.push_back(c);
                    init.push_back(*sd);
                }
                ++sd;
            }
            if (!coords.empty()) blocks_.emplace_back(kind, coords, init);
        };
        add(BlockKind::Beta, {{kBeta0, &prior_.beta0}, {kLogBeta1, &prior_.beta1}}, {0.5, 0.3});
        add(BlockKind::HyperV, {{kLogAlphaV, &prior_.alpha_v}, {kLogLambdaV, &prior_.lambda_v}},
            {0.3, 0.3});
        add(BlockKind::HyperK, {{kLogAlphaK, &prior_.alpha_k}, {kLogLambdaK, &prior_.lambda_k}},
            {0.3, 0.3});
        add(BlockKind::Sigma, {{kLogSigma, &prior_.sigma}}, {0.1});
        for (auto& b : blocks_) b.set_target(cfg_.target_accept);
    }

    void refresh_caches() {
        for (std::size_t i = 0; i < n_; ++i) ssr_[i] = patient_ssr(i);
    }

    double patient_ssr(std::size_t i) const {
        const auto& p = patients_[i];
        const double lv = x_[log_v_index(i)];
        const double k = std::exp(x_[log_k_index(i)]);
        double s = 0.0;
        for (std::size_t j = 0; j < p.t.size(); ++j) {
            double r = p.log_x[j] - (p.log_dose - lv - k * p.t[j]);
            s += r * r;
        }
        return s;
    }

    double dlt_term(std::size_t i, double beta0, double beta1) const {
        const auto& p = patients_[i];
        if (p.dlt < 0) return 0.0;
        double log_auc = p.log_dose - x_[log_v_index(i)] - x_[log_k_index(i)];
        return dlt_loglik_log_auc(p.dlt, log_auc, {beta0, beta1});
    }

    double prior_term(std::size_t c, const ScalarPrior& p) const {
        if (p.fixed()) return 0.0;
        double lp = log_density(p, value(c), conv_);
        return c == kBeta0 ? lp : lp + x_[c];  // log-scale Jacobian
    }

    // Block log target up to terms constant within the block.
    double target(BlockKind kind, std::size_t first_coord,
                  double* ssr_out) const {
        const bool lik = cfg_.use_likelihood;
        if (kind == BlockKind::Patient) {
            const std::size_t i = (first_coord - kFirstPatient) / 2;
            const double lv = x_[log_v_index(i)], lk = x_[log_k_index(i)];
            double val = pop_v_.kernel(std::exp(lv), lv) +
                         pop_k_.kernel(std::exp(lk), lk) + lv + lk;
            if (lik) {
                double ssr = patient_ssr(i);
                double sig = value(kLogSigma);
                val += -0.5 * ssr / (sig * sig);
                val += dlt_term(i, x_[kBeta0], value(kLogBeta1));
                *ssr_out = ssr;
            }
            return val;
        }
        if (kind == BlockKind::Beta) {
            double val = prior_term(kBeta0, prior_.beta0) +
                         prior_term(kLogBeta1, prior_.beta1);
            if (lik) {
                double b0 = x_[kBeta0], b1 = value(kLogBeta1);
                for (std::size_t i = 0; i < n_; ++i) val += dlt_term(i, b0, b1);
            }
            return val;
        }
        if (kind == BlockKind::HyperV || kind == BlockKind::HyperK) {
            const bool is_v = kind == BlockKind::HyperV;
            const std::size_t ca = is_v ? kLogAlphaV : kLogAlphaK;
            const std::size_t cl = is_v ? kLogLambdaV : kLogLambdaK;
            std::vector<double>& lx = scratch_;
            lx.resize(n_);
            for (std::size_t i = 0; i < n_; ++i)
                lx[i] = x_[is_v ? log_v_index(i) : log_k_index(i)];
            double val = population_sum(is_v ? prior_.v_family : prior_.k_family,
                                        value(ca), value(cl), lx, conv_);
            val += prior_term(ca, is_v ? prior_.alpha_v : prior_.alpha_k);
            val += prior_term(cl, is_v ? prior_.lambda_v : prior_.lambda_k);
            return val;
        }
        // sigma
        double val = prior_term(kLogSigma, prior_.sigma);
        if (lik) {
            double total = 0.0;
            for (double s : ssr_) total += s;
            double sig = value(kLogSigma);
            val += -static_cast<double>(n_obs_) * x_[kLogSigma] -
                   0.5 * total / (sig * sig);
        }
        return val;
    }

    void step(BlockProposal& b, Philox4x32& rng, bool adapting) {
        if (b.kind() == BlockKind::Patient && b.coords()[0] == kFirstPatient) {
            pop_v_.set(prior_.v_family, value(kLogAlphaV), value(kLogLambdaV), conv_);
            pop_k_.set(prior_.k_family, value(kLogAlphaK), value(kLogLambdaK), conv_);
        }
        const auto& cs = b.coords();
        double ssr_old = 0.0, ssr_new = 0.0;
        const double cur = target(b.kind(), cs[0], &ssr_old);
        std::array<double, 2> saved{}, prop{};
        for (std::size_t j = 0; j < cs.size(); ++j) saved[j] = x_[cs[j]];
        b.propose(x_, prop, rng);
        for (std::size_t j = 0; j < cs.size(); ++j) x_[cs[j]] = prop[j];
        double next = target(b.kind(), cs[0], &ssr_new);
        bool accept = false;
        if (std::isfinite(next)) {
            double log_u = std::log(uniform01(rng));
            accept = log_u < next - cur;
        } else {
            (void)uniform01(rng);
        }
        if (accept) {
            if (b.kind() == BlockKind::Patient) ssr_[(cs[0] - kFirstPatient) / 2] = ssr_new;
        } else {
            for (std::size_t j = 0; j < cs.size(); ++j) x_[cs[j]] = saved[j];
        }
        b.record(accept, x_, adapting, cfg_.burn_in);
    }

    ThetaDraw current_draw() const {
        ThetaDraw th;
        th.beta0 = x_[kBeta0];
        th.beta1 = value(kLogBeta1);
        th.alpha_v = value(kLogAlphaV);
        th.lambda_v = value(kLogLambdaV);
        th.alpha_k = value(kLogAlphaK);
        th.lambda_k = value(kLogLambdaK);
        th.sigma = value(kLogSigma);
        th.v.resize(n_);
        th.k.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            th.v[i] = std::exp(x_[log_v_index(i)]);
            th.k[i] = std::exp(x_[log_k_index(i)]);
        }
        return th;
    }

    void diagnostics(PosteriorDraws& out) const {
        std::map<std::string, std::pair<double, std::size_t>> acc;
        for (const auto& b : blocks_) {
            double a = b.acceptance();
            if (std::isnan(a)) continue;
            auto& slot = acc[block_name(b.kind())];
            slot.first += a;
            slot.second += 1;
        }
        auto fmt = [](double x) {
            std::ostringstream os;
            os.precision(3);
            os << x;
            return os.str();
        };
        for (auto& [name, s] : acc) {
            double rate = s.first / static_cast<double>(s.second);
            out.meta.acceptance[name] = rate;
            if (rate < cfg_.accept_low || rate > cfg_.accept_high)
                out.meta.warnings.push_back("acceptance(" + name + ")=" + fmt(rate) +
                                            " outside [" + fmt(cfg_.accept_low) +
                                            ", " + fmt(cfg_.accept_high) + "]");
        }
        auto check = [&](const char* name, const ScalarPrior& p, auto get) {
            if (p.fixed() || out.draws.size() < 4) return;
            std::vector<double> chain;
            chain.reserve(out.draws.size());
            for (const auto& th : out.draws) chain.push_back(get(th));
            double r = split_rhat(chain);
            out.meta.rhat[name] = r;
            if (!(r <= cfg_.rhat_threshold))
                out.meta.warnings.push_back(std::string("rhat(") + name + ")=" + fmt(r) +
                                            " exceeds " + fmt(cfg_.rhat_threshold));
        };
        check("beta0", prior_.beta0, [](const ThetaDraw& t) { return t.beta0; });
        check("beta1", prior_.beta1, [](const ThetaDraw& t) { return t.beta1; });
        check("sigma", prior_.sigma, [](const ThetaDraw& t) { return t.sigma; });
    }

    const PriorSpec& prior_;
    const McmcConfig& cfg_;
    const Conventions& conv_;
    std::size_t n_ = 0;
    std::size_t n_obs_ = 0;
    std::vector<PatientData> patients_;
    std::vector<double> x_;
    std::vector<double> ssr_;
    std::vector<BlockProposal> blocks_;
    PopLaw pop_v_{}, pop_k_{};
    mutable std::vector<double> scratch_;
};

}  // namespace

PosteriorDraws sample_posterior(const Dataset& data, const PriorSpec& prior,
                                const McmcConfig& config, Philox4x32& rng) {
    if (data.patients.empty())
        throw std::invalid_argument(
            "sample_posterior needs at least one patient; use "
            "sample_prior_predictive for an empty trial");
    if (config.draws == 0) throw std::invalid_argument("need at least one draw");
    Sampler sampler(data, prior, config);
    return sampler.run(rng);
}

}  // namespace pdf
