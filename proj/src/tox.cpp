#include "pdf/tox.hpp"

#include <cmath>
#include <stdexcept>

namespace pdf {

DltOutcome::DltOutcome(int value) : value_(value) {
    if (value != 0 && value != 1)
        throw std::invalid_argument("DLT outcome must be 0 or 1");
}

double inv_logit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double log_inv_logit(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double log1m_inv_logit(double x) { return log_inv_logit(-x); }

double tox_prob_log_auc(double log_auc, const ToxCoefs& coefs) {
    return inv_logit(coefs.beta0 + coefs.beta1 * log_auc);
}

double tox_prob(double dose, const PkParams& params, const ToxCoefs& coefs) {
    return tox_prob_log_auc(std::log(auc(dose, params)), coefs);
}

double dlt_loglik_log_auc(int y, double log_auc, const ToxCoefs& coefs) {
    double eta = coefs.beta0 + coefs.beta1 * log_auc;
    return y == 1 ? log_inv_logit(eta) : log1m_inv_logit(eta);
}

double dlt_loglik(DltOutcome y, double dose, const PkParams& params,
                  const ToxCoefs& coefs) {
    return dlt_loglik_log_auc(y.value(), std::log(auc(dose, params)), coefs);
}

}  // namespace pdf
