#include "rbm/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rbm {

namespace {

// Series expansion of P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
    const double tiny = std::numeric_limits<double>::min() / 1e-30;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

Chi2Result chi2_test(const std::vector<double>& observed, const std::vector<double>& expected,
                     double min_expected) {
    if (observed.size() != expected.size() || observed.empty())
        throw std::invalid_argument("chi2_test: size mismatch");

    // Merge low-expectation bins left to right.
    std::vector<double> obs, exp;
    double acc_o = 0.0, acc_e = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        acc_o += observed[i];
        acc_e += expected[i];
        if (acc_e >= min_expected) {
            obs.push_back(acc_o);
            exp.push_back(acc_e);
            acc_o = acc_e = 0.0;
        }
    }
    if (acc_e > 0.0 || acc_o > 0.0) {
        if (exp.empty()) {
            obs.push_back(acc_o);
            exp.push_back(acc_e);
        } else {
            obs.back() += acc_o;
            exp.back() += acc_e;
        }
    }

    Chi2Result r;
    r.dof = static_cast<int>(exp.size()) - 1;
    for (std::size_t i = 0; i < exp.size(); ++i) {
        if (exp[i] <= 0.0) continue;
        const double d = obs[i] - exp[i];
        r.statistic += d * d / exp[i];
    }
    r.p_value = r.dof > 0 ? chi2_sf(r.statistic, r.dof) : 1.0;
    return r;
}

KsResult ks_test_uniform(std::vector<double> samples, double lo, double hi) {
    if (samples.empty() || hi <= lo) throw std::invalid_argument("ks_test_uniform: bad input");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = (samples[i] - lo) / (hi - lo);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    // Asymptotic Kolmogorov distribution with the Stephens small-sample correction.
    const double en = std::sqrt(n);
    const double lambda = (en + 0.12 + 0.11 / en) * d;
    double p = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        p += 2.0 * sign * term;
        sign = -sign;
        if (term < 1e-12) break;
    }
    return {d, std::clamp(p, 0.0, 1.0)};
}

}  // namespace rbm
