#include "pdf/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace pdf {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}  // namespace

double normal_logpdf(double x, double mean, double sd) {
    double z = (x - mean) / sd;
    return -kHalfLog2Pi - std::log(sd) - 0.5 * z * z;
}

double gamma_logpdf(double x, double shape, double rate) {
    if (!(x > 0.0)) return kNegInf;
    return shape * std::log(rate) - std::lgamma(shape) +
           (shape - 1.0) * std::log(x) - rate * x;
}

double lognormal_logpdf(double x, double mu, double sd) {
    if (!(x > 0.0)) return kNegInf;
    double lx = std::log(x);
    return normal_logpdf(lx, mu, sd) - lx;
}

bool ScalarPrior::positive_support() const {
    switch (family) {
        case Family::Gamma:
        case Family::LogNormal:
            return true;
        case Family::Point:
            return a > 0.0;
        case Family::Normal:
            return false;
    }
    return false;
}

void ScalarPrior::validate(const char* name) const {
    auto fail = [&](const char* why) {
        throw std::invalid_argument(std::string("prior ") + name + ": " + why);
    };
    if (!std::isfinite(a) || !std::isfinite(b)) fail("parameters must be finite");
    switch (family) {
        case Family::Gamma:
            if (a <= 0.0 || b <= 0.0) fail("gamma parameters must be positive");
            break;
        case Family::Normal:
        case Family::LogNormal:
            if (b <= 0.0) fail("spread must be positive");
            break;
        case Family::Point:
            break;
    }
}

double gamma_rate(double second, const Conventions& conv) {
    return conv.gamma == GammaConvention::ShapeRate ? second : 1.0 / second;
}

double lognormal_sd(double spread, const Conventions& conv) {
    return conv.lognormal == LogNormalSpread::Variance ? std::sqrt(spread)
                                                       : spread;
}

double log_density(const ScalarPrior& prior, double x, const Conventions& conv) {
    switch (prior.family) {
        case ScalarPrior::Family::Gamma:
            return gamma_logpdf(x, prior.a, gamma_rate(prior.b, conv));
        case ScalarPrior::Family::Normal:
            return normal_logpdf(x, prior.a, std::sqrt(prior.b));
        case ScalarPrior::Family::LogNormal:
            return lognormal_logpdf(x, prior.a, lognormal_sd(prior.b, conv));
        case ScalarPrior::Family::Point:
            return x == prior.a ? 0.0 : kNegInf;
    }
    return kNegInf;
}

double sample(const ScalarPrior& prior, Philox4x32& rng, const Conventions& conv) {
    switch (prior.family) {
        case ScalarPrior::Family::Gamma:
            return std::gamma_distribution<double>(
                prior.a, 1.0 / gamma_rate(prior.b, conv))(rng);
        case ScalarPrior::Family::Normal:
            return std::normal_distribution<double>(prior.a,
                                                    std::sqrt(prior.b))(rng);
        case ScalarPrior::Family::LogNormal:
            return std::lognormal_distribution<double>(
                prior.a, lognormal_sd(prior.b, conv))(rng);
        case ScalarPrior::Family::Point:
            return prior.a;
    }
    return 0.0;
}

double prior_mean(const ScalarPrior& prior, const Conventions& conv) {
    switch (prior.family) {
        case ScalarPrior::Family::Gamma:
            return prior.a / gamma_rate(prior.b, conv);
        case ScalarPrior::Family::Normal:
        case ScalarPrior::Family::Point:
            return prior.a;
        case ScalarPrior::Family::LogNormal: {
            double sd = lognormal_sd(prior.b, conv);
            return std::exp(prior.a + 0.5 * sd * sd);
        }
    }
    return 0.0;
}

std::string family_name(ScalarPrior::Family family) {
    switch (family) {
        case ScalarPrior::Family::Gamma: return "gamma";
        case ScalarPrior::Family::Normal: return "normal";
        case ScalarPrior::Family::LogNormal: return "lognormal";
        case ScalarPrior::Family::Point: return "point";
    }
    return "unknown";
}

ScalarPrior::Family parse_family(const std::string& name) {
    if (name == "gamma") return ScalarPrior::Family::Gamma;
    if (name == "normal") return ScalarPrior::Family::Normal;
    if (name == "lognormal") return ScalarPrior::Family::LogNormal;
    if (name == "point") return ScalarPrior::Family::Point;
    throw std::invalid_argument("unknown distribution family: " + name);
}

}  // namespace pdf
