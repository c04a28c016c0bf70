#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "pdf/rng.hpp"

namespace pdf {

/// Thrown when a likelihood is requested over an empty observation list.
/// Callers that allow patients without PK samples catch it and skip the term.
struct NoDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Individual one-compartment parameters: volume of distribution and
/// first-order elimination rate. Both strictly positive.
class PkParams {
   public:
    PkParams(double v, double k);

    double v() const { return v_; }
    double k() const { return k_; }
    double clearance() const { return v_ * k_; }

    bool operator==(const PkParams&) const = default;

   private:
    double v_;
    double k_;
};

/// Strictly increasing list of dose amounts, at least two levels.
class DoseGrid {
   public:
    explicit DoseGrid(std::vector<double> doses);

    /// 15, 30, 60, 90, 120
    static DoseGrid standard();

    std::size_t size() const { return doses_.size(); }
    double operator[](std::size_t level) const { return doses_.at(level); }
    const std::vector<double>& doses() const { return doses_; }

    bool operator==(const DoseGrid&) const = default;

   private:
    std::vector<double> doses_;
};

struct ConcentrationObs {
    ConcentrationObs(double time, double value);

    double time;
    double value;

    bool operator==(const ConcentrationObs&) const = default;
};

class ObsNoise {
   public:
    explicit ObsNoise(double sigma);
    double sigma() const { return sigma_; }

   private:
    double sigma_;
};

/// 1, 3, 5, 7, 12, 24 hours after injection.
std::vector<double> standard_schedule();

/// (dose / v) exp(-k t)
double concentration(double dose, const PkParams& params, double t);

/// Log of concentration(), computed directly on the log scale.
double log_concentration(double dose, const PkParams& params, double t);

/// Area under the curve from zero to infinity: dose / (v k).
double auc(double dose, const PkParams& params);

/// Sum of normal log-densities of log X_j around the log concentration curve.
/// Throws NoDataError on an empty list.
double log_concentration_loglik(std::span<const ConcentrationObs> obs,
                                double dose, const PkParams& params,
                                const ObsNoise& noise);

/// Draws log-normal concentrations around the curve at each schedule time.
std::vector<ConcentrationObs> simulate_concentrations(
    double dose, const PkParams& params, const ObsNoise& noise,
    std::span<const double> schedule, Philox4x32& rng);

}  // namespace pdf
