#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pdf {

/// Patients treated (n) and DLTs observed (y) per dose level.
class DoseTally {
   public:
    explicit DoseTally(std::size_t levels);
    DoseTally(std::vector<int> n, std::vector<int> y);

    std::size_t size() const { return n_.size(); }
    int n(std::size_t level) const { return n_.at(level); }
    int y(std::size_t level) const { return y_.at(level); }
    const std::vector<int>& n() const { return n_; }
    const std::vector<int>& y() const { return y_; }

    void add(std::size_t level, int dlt);
    int total_patients() const;
    int total_dlts() const;

    bool operator==(const DoseTally&) const = default;

   private:
    std::vector<int> n_;
    std::vector<int> y_;
};

struct EscalationConfig {
    double p_target = 0.3;
    double s_star = 0.95;
    std::size_t cohort_size = 3;
    std::size_t n_cohorts_stage1 = 7;

    void validate() const;
    std::size_t stage1_patients() const { return cohort_size * n_cohorts_stage1; }
    bool operator==(const EscalationConfig&) const = default;
};

/// Audit tags naming the rules that shaped a decision, in firing order.
enum class RuleTag {
    StartLowest,
    SpeedUp,
    ModelArgmin,
    NoSkip,
    SafetyExclusion,
    Coherence,
    PrecisionArgmin,
    Override,
    Terminate,
};

std::string to_string(RuleTag tag);
RuleTag parse_rule_tag(const std::string& s);

struct DoseDecision {
    enum class Action { Assign, Terminate };

    Action action = Action::Assign;
    std::size_t level = 0;
    std::vector<RuleTag> rationale;

    static DoseDecision assign(std::size_t level, std::vector<RuleTag> why) {
        return {Action::Assign, level, std::move(why)};
    }
    static DoseDecision terminate(std::vector<RuleTag> why) {
        why.push_back(RuleTag::Terminate);
        return {Action::Terminate, 0, std::move(why)};
    }
    bool terminated() const { return action == Action::Terminate; }
    bool operator==(const DoseDecision&) const = default;
};

/// Pr(p > p_target) under the Beta(y + 0.05, n - y + 0.05) posterior.
double unsafe_probability(int y, int n, double p_target);

/*
 * Number of admissible dose levels under the exclusion rule. A level whose
 * unsafe_probability reaches s_star is excluded together with every level
 * above it, so the admissible levels are always 0 .. limit - 1. A limit of
 * zero means the trial must stop.
 */
std::size_t safe_limit(const DoseTally& tally, const EscalationConfig& config);

/// Decision for the first cohort of an empty trial.
DoseDecision first_cohort_dose();

/*
 * Next-cohort dose. Rules apply in fixed order:
 *   speed-up (no DLT anywhere yet) or argmin |p_tilde - p_target|,
 *   no-skip cap at current + 1,
 *   safety exclusion (fall back to the highest admissible level, or stop),
 *   coherence against the cumulative DLT rate at the current level.
 * Exact argmin ties go to the highest tied level.
 */
DoseDecision next_cohort_dose(const DoseTally& tally, std::size_t current,
                              std::span<const double> p_tilde,
                              const EscalationConfig& config);

/// Weighted isotonic (nondecreasing) least-squares fit by pooling adjacent
/// violators.
std::vector<double> pava(std::span<const double> values,
                         std::span<const double> weights);

/// Beta-binomial posterior means (y + 0.05) / (n + 0.1) per level.
std::vector<double> posterior_mean_rates(const DoseTally& tally);

/*
 * Stage-I MTD among tested, admissible levels: isotonized posterior means
 * (weights n + 0.1), nearest to p_target. Among tied levels, the lowest when
 * the tied estimate exceeds p_target, else the highest.
 */
std::optional<std::size_t> select_mtd(const DoseTally& tally,
                                      const EscalationConfig& config);

}  // namespace pdf
