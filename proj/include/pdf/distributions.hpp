#pragma once

#include <string>

#include "pdf/rng.hpp"

namespace pdf {

double normal_logpdf(double x, double mean, double sd);
/// Gamma density with shape and rate (mean shape / rate).
double gamma_logpdf(double x, double shape, double rate);
double lognormal_logpdf(double x, double mu, double sd);

/// How the second Gamma parameter is read.
enum class GammaConvention { ShapeRate, ShapeScale };
/// How the second LogNormal parameter is read.
enum class LogNormalSpread { Variance, StdDev };

struct Conventions {
    GammaConvention gamma = GammaConvention::ShapeRate;
    LogNormalSpread lognormal = LogNormalSpread::Variance;

    bool operator==(const Conventions&) const = default;
};

/*
 * A univariate prior on one scalar parameter.
 *
 *   Gamma:     a = shape, b = rate (or scale, per Conventions)
 *   Normal:    a = mean,  b = variance
 *   LogNormal: a = mu,    b = variance of log x (or its sd, per Conventions)
 *   Point:     a = fixed value; the sampler holds the parameter constant
 */
struct ScalarPrior {
    enum class Family { Gamma, Normal, LogNormal, Point };

    Family family = Family::Point;
    double a = 0.0;
    double b = 0.0;

    static ScalarPrior gamma(double shape, double second) {
        return {Family::Gamma, shape, second};
    }
    static ScalarPrior normal(double mean, double variance) {
        return {Family::Normal, mean, variance};
    }
    static ScalarPrior lognormal(double mu, double spread) {
        return {Family::LogNormal, mu, spread};
    }
    static ScalarPrior point(double value) { return {Family::Point, value, 0.0}; }

    bool fixed() const { return family == Family::Point; }
    /// Support is (0, inf) for Gamma and LogNormal, and for a positive Point.
    bool positive_support() const;

    void validate(const char* name) const;

    bool operator==(const ScalarPrior&) const = default;
};

double gamma_rate(double second, const Conventions& conv);
double lognormal_sd(double spread, const Conventions& conv);

/// Log density; -inf outside the support. A Point prior contributes 0 at its
/// value and -inf elsewhere.
double log_density(const ScalarPrior& prior, double x, const Conventions& conv);
double sample(const ScalarPrior& prior, Philox4x32& rng, const Conventions& conv);
double prior_mean(const ScalarPrior& prior, const Conventions& conv);

std::string family_name(ScalarPrior::Family family);
ScalarPrior::Family parse_family(const std::string& name);

}  // namespace pdf
