#pragma once

#include "pdf/pk.hpp"

namespace pdf {

/// Logistic coefficients linking log-AUC to toxicity.
struct ToxCoefs {
    double beta0;
    double beta1;
};

class DltOutcome {
   public:
    explicit DltOutcome(int value);
    int value() const { return value_; }
    bool operator==(const DltOutcome&) const = default;

   private:
    int value_;
};

/// 1 / (1 + exp(-x)), branch-stable for large |x|.
double inv_logit(double x);
double logit(double p);

/// log(inv_logit(x)) and log(1 - inv_logit(x)) without cancellation.
double log_inv_logit(double x);
double log1m_inv_logit(double x);

/// inv_logit(beta0 + beta1 * log(dose / (v k)))
double tox_prob(double dose, const PkParams& params, const ToxCoefs& coefs);

/// Same link evaluated on a precomputed log-AUC.
double tox_prob_log_auc(double log_auc, const ToxCoefs& coefs);

/// Bernoulli log-mass of y under tox_prob.
double dlt_loglik(DltOutcome y, double dose, const PkParams& params,
                  const ToxCoefs& coefs);

double dlt_loglik_log_auc(int y, double log_auc, const ToxCoefs& coefs);

}  // namespace pdf
