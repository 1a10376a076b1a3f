#pragma once

// Hotelling's T-squared test for comparing simulated replication vectors
// (matching rates or permutation frequencies) against a theoretical mean,
// with F-distribution p-values computed from the regularized incomplete
// beta function. Because the vectors sum to one, their covariance is
// singular; the test therefore drops the last coordinate of every
// observation and of the hypothesized mean before inverting.

#include <cstddef>
#include <string>
#include <vector>

namespace fluidfcfs::stats {

// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0, 1].
// Absolute error below 1e-12 over the whole domain.
double regularized_incomplete_beta(double a, double b, double x);

// P(F > f) for an F-distributed statistic with (d1, d2) degrees of freedom.
double f_upper_tail(double f, double d1, double d2);

struct TestReport {
    std::string system;       // label of the system under test, may be empty
    std::string law;          // label of the service-time law, may be empty
    double t_squared = 0.0;
    double f_statistic = 0.0;
    double df1 = 0.0;         // dimension p after the last-entry omission
    double df2 = 0.0;         // n - p
    double p_value = 1.0;
    std::size_t n = 0;        // number of observation vectors
    std::size_t dimension = 0; // p

    std::string to_json_text(int indent = 2) const;
};

// observations: n vectors of dimension p+1; hypothesized_mean: dimension
// p+1. The last coordinate of each is dropped, then
// T^2 = n (xbar - mu0)^T S^-1 (xbar - mu0) with S the sample covariance
// (divisor n-1), and F = ((n-p)/(p(n-1))) T^2 on (p, n-p) degrees of
// freedom. Requires n > p + 1; a numerically singular covariance is an
// error reported with a condition estimate, never silently pseudo-inverted.
TestReport hotelling_t2(const std::vector<std::vector<double>>& observations,
                        const std::vector<double>& hypothesized_mean);

// One simulated study to compare against the common theoretical mean.
struct LawStudy {
    std::string law;
    std::vector<std::vector<double>> observations;
};

// Runs hotelling_t2 once per study against the shared theoretical mean and
// labels the reports. All studies must use the same coordinate order as the
// mean vector.
std::vector<TestReport> compare_laws(const std::string& system_label,
                                     const std::vector<double>& theoretical_mean,
                                     const std::vector<LawStudy>& studies);

// "<1e-15" below that threshold, full precision otherwise. Formatted output
// only; JSON always carries the raw double.
std::string format_p_value(double p);

// CSV header "system,law,t2,f,d1,d2,p_value" plus one row per report.
std::string reports_to_csv(const std::vector<TestReport>& reports);
std::string reports_to_json_text(const std::vector<TestReport>& reports, int indent = 2);

} // namespace fluidfcfs::stats
