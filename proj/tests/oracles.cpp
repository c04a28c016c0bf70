#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

namespace {

double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                   double fm, double fb, double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol ||
        std::abs(delta) <= 1e-15 * std::abs(left + right))
        return left + right + delta / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

}  // namespace

double simpson(const std::function<double(double)>& f, double a, double b, double tol) {
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50);
}

double beta_upper_tail(double a, double b, double t) {
    // p = 1 - u^(1/b); dp = -(1/b) u^(1/b - 1) du, and (1-p)^(b-1) = u^((b-1)/b),
    // so the density times |dp| is p^(a-1) / (b B(a, b)) du.
    const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double upper = std::pow(1.0 - t, b);
    auto g = [&](double u) {
        double p = 1.0 - std::pow(u, 1.0 / b);
        if (p <= 0.0) return 0.0;
        return std::exp((a - 1.0) * std::log(p) - log_beta) / b;
    };
    return simpson(g, 0.0, upper, 1e-14);
}

std::vector<double> isotonic_minmax(std::span<const double> v, std::span<const double> w) {
    const std::size_t n = v.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
            double inner = INFINITY;
            for (std::size_t k = i; k < n; ++k) {
                double sw = 0, swv = 0;
                for (std::size_t m = j; m <= k; ++m) {
                    sw += w[m];
                    swv += w[m] * v[m];
                }
                inner = std::min(inner, swv / sw);
            }
            best = std::max(best, inner);
        }
        out[i] = best;
    }
    return out;
}

std::vector<double> isotonic_qp(std::span<const double> v, std::span<const double> w,
                                double tol) {
    // minimize sum w_i (x_i - v_i)^2 subject to x_i - x_{i+1} <= 0.
    // With multipliers mu_i >= 0: x = v - W^{-1} A^T mu / 2, A row i = e_i - e_{i+1}.
    const std::size_t n = v.size();
    if (n < 2) return {v.begin(), v.end()};
    std::vector<double> mu(n - 1, 0.0);
    std::vector<double> x(v.begin(), v.end());
    for (int sweep = 0; sweep < 2000000; ++sweep) {
        double change = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            // Exact maximization of the dual along mu_i.
            double h = 0.5 / w[i] + 0.5 / w[i + 1];
            double slack = x[i] - x[i + 1];
            double next = std::max(0.0, mu[i] + slack / h);
            double d = next - mu[i];
            if (d != 0.0) {
                x[i] -= 0.5 * d / w[i];
                x[i + 1] += 0.5 * d / w[i + 1];
                mu[i] = next;
                change = std::max(change, std::abs(d));
            }
        }
        if (change < tol) break;
    }
    return x;
}

std::vector<double> crm_trapezoid(const std::vector<double>& skeleton, double prior_sd,
                                  const std::vector<std::pair<std::size_t, int>>& history,
                                  double lo, double hi, std::size_t n) {
    const double h = (hi - lo) / static_cast<double>(n);
    std::vector<double> num(skeleton.size(), 0.0);
    double den = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        double beta = lo + h * static_cast<double>(i);
        double lik = 1.0;
        for (const auto& [level, y] : history) {
            double p = std::pow(skeleton[level], std::exp(-beta));
            lik *= y ? p : 1.0 - p;
        }
        double wt = (i == 0 || i == n ? 0.5 : 1.0) * lik *
                    std::exp(-0.5 * beta * beta / (prior_sd * prior_sd));
        den += wt;
        for (std::size_t d = 0; d < skeleton.size(); ++d)
            num[d] += wt * std::pow(skeleton[d], std::exp(-beta));
    }
    for (double& x : num) x /= den;
    return num;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace oracle
