#include <fluidfcfs/stats.hpp>

#include <fluidfcfs/errors.hpp>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace fluidfcfs::stats {

using nlohmann::json;

namespace {

constexpr int kBetaMaxIterations = 200;
constexpr double kBetaRelTol = 1e-14;

// Continued fraction for the incomplete beta (Lentz's method). Converges
// quickly for x < (a+1)/(a+b+2); the caller applies the symmetry switch.
double beta_continued_fraction(double a, double b, double x) {
    constexpr double kFloor = 1e-300;
    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFloor) d = kFloor;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kBetaMaxIterations; ++m) {
        double m2 = 2.0 * m;
        double numer = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + numer * d;
        if (std::abs(d) < kFloor) d = kFloor;
        c = 1.0 + numer / c;
        if (std::abs(c) < kFloor) c = kFloor;
        d = 1.0 / d;
        h *= d * c;
        numer = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + numer * d;
        if (std::abs(d) < kFloor) d = kFloor;
        c = 1.0 + numer / c;
        if (std::abs(c) < kFloor) c = kFloor;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kBetaRelTol) return h;
    }
    throw InternalError("incomplete beta continued fraction did not converge");
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0))
        throw ValidationError("incomplete beta needs positive shape parameters");
    if (!(x >= 0.0) || !(x <= 1.0))
        throw ValidationError("incomplete beta argument must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x));
    double value;
    if (x < (a + 1.0) / (a + b + 2.0))
        value = front * beta_continued_fraction(a, b, x) / a;
    else
        value = 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
    if (value < 0.0) return 0.0;
    if (value > 1.0) return 1.0;
    return value;
}

double f_upper_tail(double f, double d1, double d2) {
    if (!(d1 >= 1.0) || !(d2 >= 1.0) || !std::isfinite(d1) || !std::isfinite(d2))
        throw ValidationError("F tail needs degrees of freedom >= 1");
    if (!(f >= 0.0))
        throw ValidationError("F statistic must be non-negative");
    if (f == 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    double x = d2 / (d2 + d1 * f);
    return regularized_incomplete_beta(0.5 * d2, 0.5 * d1, x);
}

TestReport hotelling_t2(const std::vector<std::vector<double>>& observations,
                        const std::vector<double>& hypothesized_mean) {
    std::size_t full_dim = hypothesized_mean.size();
    if (full_dim < 2)
        throw ValidationError("hypothesized mean needs at least two coordinates");
    std::size_t n = observations.size();
    for (const auto& row : observations)
        if (row.size() != full_dim)
            throw ValidationError("observation dimension does not match the hypothesized mean");
    std::size_t p = full_dim - 1;
    if (n <= p + 1) {
        std::ostringstream msg;
        msg << "Hotelling test needs more than " << (p + 1)
            << " observations for dimension " << p << ", got " << n;
        throw ValidationError(msg.str());
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < p; ++c)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = observations[r][c];
    Eigen::VectorXd mu0(static_cast<Eigen::Index>(p));
    for (std::size_t c = 0; c < p; ++c) mu0(static_cast<Eigen::Index>(c)) = hypothesized_mean[c];

    Eigen::VectorXd xbar = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - xbar.transpose();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

    TestReport report;
    report.n = n;
    report.dimension = p;
    report.df1 = static_cast<double>(p);
    report.df2 = static_cast<double>(n - p);

    // No deviation at all is no evidence against the hypothesis, whatever
    // the covariance looks like; this also covers constant observations
    // that sit exactly on the mean.
    if ((xbar - mu0).isZero(0.0)) {
        report.p_value = 1.0;
        return report;
    }

    // Symmetric eigendecomposition as the singularity diagnostic, Cholesky
    // as the solver. A singular covariance invalidates the test and is
    // surfaced instead of being pseudo-inverted.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(cov);
    if (eigen.info() != Eigen::Success)
        throw InternalError("covariance eigendecomposition failed");
    double lam_min = eigen.eigenvalues()(0);
    double lam_max = eigen.eigenvalues()(static_cast<Eigen::Index>(p) - 1);
    if (!(lam_min > 0.0) || lam_min <= 1e-12 * lam_max) {
        std::ostringstream msg;
        msg << "sample covariance is numerically singular (condition estimate ";
        if (lam_min > 0.0)
            msg << lam_max / lam_min;
        else
            msg << "infinite";
        msg << "); the test cannot be run on these observations";
        throw ValidationError(msg.str());
    }

    Eigen::VectorXd diff = xbar - mu0;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw InternalError("covariance Cholesky factorization failed after a positive eigenvalue check");
    double t2 = static_cast<double>(n) * diff.dot(llt.solve(diff));
    if (t2 < 0.0) t2 = 0.0;

    report.t_squared = t2;
    report.f_statistic = (static_cast<double>(n - p) /
                          (static_cast<double>(p) * static_cast<double>(n - 1))) * t2;
    report.p_value = f_upper_tail(report.f_statistic, report.df1, report.df2);
    return report;
}

std::vector<TestReport> compare_laws(const std::string& system_label,
                                     const std::vector<double>& theoretical_mean,
                                     const std::vector<LawStudy>& studies) {
    std::vector<TestReport> reports;
    reports.reserve(studies.size());
    for (const LawStudy& study : studies) {
        TestReport report = hotelling_t2(study.observations, theoretical_mean);
        report.system = system_label;
        report.law = study.law;
        reports.push_back(std::move(report));
    }
    return reports;
}

std::string format_p_value(double p) {
    if (p < 1e-15) return "<1e-15";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", p);
    return buf;
}

namespace {

json report_to_json(const TestReport& r) {
    json j;
    j["system"] = r.system;
    j["law"] = r.law;
    j["t_squared"] = r.t_squared;
    j["f_statistic"] = r.f_statistic;
    j["df"] = {r.df1, r.df2};
    j["p_value"] = r.p_value;
    j["n"] = r.n;
    j["dimension"] = r.dimension;
    return j;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

} // namespace

std::string TestReport::to_json_text(int indent) const {
    return report_to_json(*this).dump(indent) + "\n";
}

std::string reports_to_csv(const std::vector<TestReport>& reports) {
    std::string out = "system,law,t2,f,d1,d2,p_value\n";
    char buf[160];
    for (const TestReport& r : reports) {
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%g,%g,", r.t_squared, r.f_statistic,
                      r.df1, r.df2);
        out += csv_field(r.system) + "," + csv_field(r.law) + "," + buf +
               format_p_value(r.p_value) + "\n";
    }
    return out;
}

std::string reports_to_json_text(const std::vector<TestReport>& reports, int indent) {
    json arr = json::array();
    for (const TestReport& r : reports) arr.push_back(report_to_json(r));
    return arr.dump(indent) + "\n";
}

} // namespace fluidfcfs::stats
