#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace rbm {

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double gamma_q(double a, double x);

// Survival function of the chi-square distribution with dof degrees of freedom.
inline double chi2_sf(double statistic, double dof) {
    return gamma_q(0.5 * dof, 0.5 * statistic);
}

struct Chi2Result {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

// Pearson chi-square of observed counts against expected counts (same total).
// Bins with expected count below min_expected are merged with their neighbor.
Chi2Result chi2_test(const std::vector<double>& observed, const std::vector<double>& expected,
                     double min_expected = 5.0);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

// One-sample Kolmogorov-Smirnov test of samples against the uniform
// distribution on [lo, hi].
KsResult ks_test_uniform(std::vector<double> samples, double lo, double hi);

inline double binomial_stderr(double p, std::size_t n) {
    return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n));
}

}  // namespace rbm
