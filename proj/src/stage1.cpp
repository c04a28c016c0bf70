#include "pdf/stage1.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pdf {

namespace {

constexpr double kPriorA = 0.05;
constexpr double kPriorB = 0.05;
constexpr double kTieEps = 1e-12;

}  // namespace

DoseTally::DoseTally(std::size_t levels) : n_(levels, 0), y_(levels, 0) {}

DoseTally::DoseTally(std::vector<int> n, std::vector<int> y)
    : n_(std::move(n)), y_(std::move(y)) {
    if (n_.size() != y_.size())
        throw std::invalid_argument("tally vectors differ in length");
    for (std::size_t d = 0; d < n_.size(); ++d) {
        if (n_[d] < 0 || y_[d] < 0 || y_[d] > n_[d])
            throw std::invalid_argument("inconsistent tally: need 0 <= y <= n");
    }
}

void DoseTally::add(std::size_t level, int dlt) {
    if (dlt != 0 && dlt != 1) throw std::invalid_argument("DLT must be 0 or 1");
    n_.at(level) += 1;
    y_.at(level) += dlt;
}

int DoseTally::total_patients() const {
    int s = 0;
    for (int x : n_) s += x;
    return s;
}

int DoseTally::total_dlts() const {
    int s = 0;
    for (int x : y_) s += x;
    return s;
}

void EscalationConfig::validate() const {
    if (!(p_target > 0.0 && p_target < 1.0))
        throw std::invalid_argument("target toxicity rate must lie in (0, 1)");
    if (!(s_star > 0.0 && s_star < 1.0))
        throw std::invalid_argument("safety threshold must lie in (0, 1)");
    if (cohort_size == 0) throw std::invalid_argument("cohort size must be positive");
    if (n_cohorts_stage1 == 0)
        throw std::invalid_argument("stage I needs at least one cohort");
}

std::string to_string(RuleTag tag) {
    switch (tag) {
        case RuleTag::StartLowest: return "start-lowest";
        case RuleTag::SpeedUp: return "speed-up";
        case RuleTag::ModelArgmin: return "model-argmin";
        case RuleTag::NoSkip: return "no-skip";
        case RuleTag::SafetyExclusion: return "safety-exclusion";
        case RuleTag::Coherence: return "coherence";
        case RuleTag::PrecisionArgmin: return "precision-argmin";
        case RuleTag::Override: return "override";
        case RuleTag::Terminate: return "terminate";
    }
    return "unknown";
}

RuleTag parse_rule_tag(const std::string& s) {
    for (auto t : {RuleTag::StartLowest, RuleTag::SpeedUp, RuleTag::ModelArgmin,
                   RuleTag::NoSkip, RuleTag::SafetyExclusion, RuleTag::Coherence,
                   RuleTag::PrecisionArgmin, RuleTag::Override, RuleTag::Terminate})
        if (to_string(t) == s) return t;
    throw std::invalid_argument("unknown rule tag: " + s);
}

double unsafe_probability(int y, int n, double p_target) {
    if (n < 0 || y < 0 || y > n)
        throw std::invalid_argument("inconsistent tally: need 0 <= y <= n");
    return boost::math::ibetac(y + kPriorA, n - y + kPriorB, p_target);
}

std::size_t safe_limit(const DoseTally& tally, const EscalationConfig& config) {
    for (std::size_t d = 0; d < tally.size(); ++d) {
        if (unsafe_probability(tally.y(d), tally.n(d), config.p_target) >= config.s_star)
            return d;
    }
    return tally.size();
}

DoseDecision first_cohort_dose() {
    return DoseDecision::assign(0, {RuleTag::StartLowest});
}

DoseDecision next_cohort_dose(const DoseTally& tally, std::size_t current,
                              std::span<const double> p_tilde,
                              const EscalationConfig& config) {
    if (p_tilde.size() != tally.size())
        throw std::invalid_argument("p_tilde must have one entry per dose");
    if (current >= tally.size()) throw std::invalid_argument("current level off grid");
    const std::size_t top = tally.size() - 1;
    std::vector<RuleTag> why;

    std::size_t proposal;
    if (tally.total_dlts() == 0 && current < top) {
        proposal = current + 1;
        why.push_back(RuleTag::SpeedUp);
    } else {
        proposal = 0;
        double best = std::abs(p_tilde[0] - config.p_target);
        for (std::size_t d = 1; d < p_tilde.size(); ++d) {
            double dist = std::abs(p_tilde[d] - config.p_target);
            if (dist <= best + kTieEps) {
                proposal = d;
                best = std::min(best, dist);
            }
        }
        why.push_back(RuleTag::ModelArgmin);
    }

    if (proposal > current + 1) {
        proposal = current + 1;
        why.push_back(RuleTag::NoSkip);
    }

    const std::size_t limit = safe_limit(tally, config);
    if (limit == 0) return DoseDecision::terminate(std::move(why));
    if (proposal >= limit) {
        proposal = limit - 1;
        why.push_back(RuleTag::SafetyExclusion);
    }

    if (tally.n(current) > 0) {
        double rate = static_cast<double>(tally.y(current)) / tally.n(current);
        if (rate > config.p_target && proposal > current) {
            proposal = current;
            why.push_back(RuleTag::Coherence);
        } else if (rate < config.p_target && proposal < current && current < limit) {
            proposal = current;
            why.push_back(RuleTag::Coherence);
        }
    }
    return DoseDecision::assign(proposal, std::move(why));
}

std::vector<double> pava(std::span<const double> values,
                         std::span<const double> weights) {
    if (values.size() != weights.size())
        throw std::invalid_argument("pava: values and weights differ in length");
    for (double w : weights)
        if (!(w > 0.0)) throw std::invalid_argument("pava: weights must be positive");

    struct Block {
        double mean;
        double weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    blocks.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        blocks.push_back({values[i], weights[i], 1});
        while (blocks.size() > 1 &&
               blocks[blocks.size() - 2].mean > blocks.back().mean) {
            Block hi = blocks.back();
            blocks.pop_back();
            Block& lo = blocks.back();
            double w = lo.weight + hi.weight;
            lo.mean = (lo.mean * lo.weight + hi.mean * hi.weight) / w;
            lo.weight = w;
            lo.count += hi.count;
        }
    }
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& b : blocks) out.insert(out.end(), b.count, b.mean);
    return out;
}

std::vector<double> posterior_mean_rates(const DoseTally& tally) {
    std::vector<double> p(tally.size());
    for (std::size_t d = 0; d < tally.size(); ++d)
        p[d] = (tally.y(d) + kPriorA) / (tally.n(d) + kPriorA + kPriorB);
    return p;
}

std::optional<std::size_t> select_mtd(const DoseTally& tally,
                                      const EscalationConfig& config) {
    std::vector<std::size_t> tested;
    std::vector<double> rates, weights;
    const auto raw = posterior_mean_rates(tally);
    for (std::size_t d = 0; d < tally.size(); ++d) {
        if (tally.n(d) == 0) continue;
        tested.push_back(d);
        rates.push_back(raw[d]);
        weights.push_back(tally.n(d) + kPriorA + kPriorB);
    }
    if (tested.empty()) return std::nullopt;
    const auto iso = pava(rates, weights);
    const std::size_t limit = safe_limit(tally, config);

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < tested.size(); ++j)
        if (tested[j] < limit) best = std::min(best, std::abs(iso[j] - config.p_target));
    if (!std::isfinite(best)) return std::nullopt;

    std::vector<std::size_t> tied;
    for (std::size_t j = 0; j < tested.size(); ++j)
        if (tested[j] < limit && std::abs(iso[j] - config.p_target) <= best + kTieEps)
            tied.push_back(j);
    // Ties straddling the target (one above, one below) resolve toward the
    // estimate at or below it.
    bool all_above = true;
    for (std::size_t j : tied) all_above = all_above && iso[j] > config.p_target;
    if (all_above) return tested[tied.front()];
    std::size_t pick = tied.front();
    for (std::size_t j : tied)
        if (iso[j] <= config.p_target) pick = j;
    return tested[pick];
}

}  // namespace pdf
