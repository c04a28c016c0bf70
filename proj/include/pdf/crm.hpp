#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pdf/stage1.hpp"

namespace pdf {

/// One-parameter power model p_d = skeleton_d ^ exp(-beta), beta ~ N(0, prior_sd^2).
struct CrmConfig {
    std::vector<double> skeleton{0.10, 0.20, 0.30, 0.42, 0.53};
    double prior_sd = 2.0;
    /// Apply the beta-binomial exclusion rule used by the PDF design.
    bool safety_guard = true;
    bool no_skip = true;

    void validate() const;
    bool operator==(const CrmConfig&) const = default;
};

struct CrmObservation {
    std::size_t level;
    int dlt;
};

/// Posterior mean of each p_d given the observed (level, DLT) history.
std::vector<double> crm_posterior_means(std::span<const CrmObservation> history,
                                        const CrmConfig& config);

/*
 * Next cohort under the power model: argmin |E p_d - p_target| (lowest level
 * on exact ties), capped at current + 1 and at the admissible levels when the
 * guards are on.
 */
DoseDecision crm_next_dose(std::span<const CrmObservation> history,
                           const DoseTally& tally, std::size_t current,
                           const CrmConfig& crm, const EscalationConfig& esc);

/// Final MTD: the same argmin over admissible levels. Empty when nothing is admissible.
std::optional<std::size_t> crm_select_mtd(std::span<const CrmObservation> history,
                                          const DoseTally& tally,
                                          const CrmConfig& crm,
                                          const EscalationConfig& esc);

}  // namespace pdf
