#pragma once

// Student-t significance testing via the regularized incomplete beta
// function (continued-fraction evaluation), plus small seed-statistics
// helpers.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmc {

namespace detail {

// Continued fraction for the incomplete beta function (Lentz's method).
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14;
    constexpr double kFpMin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw std::runtime_error("incomplete_beta: continued fraction did not converge");
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0)
        throw std::domain_error("domain error: incomplete_beta x = " + std::to_string(x));
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                   b * std::log(1.0 - x);
    double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::betacf(a, b, x) / a;
    return 1.0 - bt * detail::betacf(b, a, 1.0 - x) / b;
}

// Two-sided p-value of a Student-t statistic with `dof` degrees of freedom.
inline double student_t_two_sided_p(double t, double dof) {
    if (dof < 1.0) throw std::invalid_argument("student_t_two_sided_p: dof < 1");
    return incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Sample standard deviation (n-1 denominator).
inline double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    int dof = 0;
};

// Paired t-test on case-matched score vectors: t = mean(d) / (sd(d)/sqrt(n))
// with sample sd, two-sided p from the Student-t CDF.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("data error: paired_t_test on unequal lengths " +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    size_t n = a.size();
    if (n < 2) throw std::invalid_argument("data error: paired_t_test needs >= 2 pairs");
    std::vector<double> d(n);
    for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    double sd = sample_std(d);
    if (sd == 0.0)
        throw std::runtime_error("degenerate-test error: zero variance of paired differences");
    TTestResult r;
    r.dof = static_cast<int>(n) - 1;
    r.t = mean_of(d) / (sd / std::sqrt(static_cast<double>(n)));
    r.p = student_t_two_sided_p(r.t, static_cast<double>(r.dof));
    return r;
}

}  // namespace tmc
