#ifndef TCLT_METRICS_HPP
#define TCLT_METRICS_HPP

// Distances between point clouds and the standard Gaussian, and the closed-form bounds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "detail/numeric.hpp"
#include "errors.hpp"

namespace tclt
{

struct DistanceReport {
    std::string estimator; // exact_assignment_w2 | entropic_w2 | gaussian_moment_proxy
    double value = 0.0;    // squared distance
    std::optional<double> std_error;
    std::optional<double> duality_gap;
    std::size_t m = 0; // points per cloud
    Eigen::Index dim = 0;
    std::uint64_t seed = 0;
    bool eigen_floor_applied = false;
};

inline nlohmann::json to_json(const DistanceReport &r)
{
    nlohmann::json j;
    j["estimator"] = r.estimator;
    j["value"] = r.value;
    j["stderr"] = r.std_error ? nlohmann::json(*r.std_error) : nlohmann::json(nullptr);
    if (r.duality_gap) {
        j["duality_gap"] = *r.duality_gap;
    }
    j["m"] = r.m;
    j["D"] = r.dim;
    j["seed"] = r.seed;
    return j;
}

namespace detail
{

inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b)
{
    Eigen::MatrixXd c(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            c(i, j) = (a.row(i) - b.row(j)).squaredNorm();
        }
    }
    return c;
}

// Shortest augmenting path assignment with potentials, O(m³). Returns col assigned to each row.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd &cost)
{
    const int m = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(m + 1, 0.0);
    std::vector<double> v(m + 1, 0.0);
    std::vector<int> match(m + 1, 0); // match[col] = row, 1-based
    std::vector<int> way(m + 1, 0);
    std::vector<double> minv(m + 1);
    std::vector<char> used(m + 1);
    for (int i = 1; i <= m; ++i) {
        match[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (!used[j]) {
                    const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assign(m);
    for (int j = 1; j <= m; ++j) {
        assign[match[j] - 1] = j - 1;
    }
    return assign;
}

inline void check_clouds(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b)
{
    if (a.rows() != b.rows()) {
        throw dimension_error("clouds must have equal sizes, got " + std::to_string(a.rows()) + " and " +
                              std::to_string(b.rows()));
    }
    if (a.cols() != b.cols()) {
        throw dimension_error("clouds live in different dimensions");
    }
    if (a.rows() < 1) {
        throw dimension_error("clouds must be non-empty");
    }
}

inline double median(std::vector<double> v)
{
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double med = *mid;
    if (v.size() % 2 == 0) {
        med = 0.5 * (med + *std::max_element(v.begin(), mid));
    }
    return med;
}

inline double log_sum_exp(const double *x, std::size_t n, std::size_t stride)
{
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        mx = std::max(mx, x[i * stride]);
    }
    if (!std::isfinite(mx)) {
        return mx;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += std::exp(x[i * stride] - mx);
    }
    return mx + std::log(s);
}

} // namespace detail

inline constexpr Eigen::Index max_exact_points = 2000;

/// (1/m) min_π Σ ‖a_i - b_π(i)‖² over permutations.
inline DistanceReport exact_w2(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b)
{
    detail::check_clouds(a, b);
    if (a.rows() > max_exact_points) {
        throw std::invalid_argument("exact_w2 is capped at m = 2000 points");
    }
    const Eigen::MatrixXd cost = detail::squared_distances(a, b);
    const auto assign = detail::solve_assignment(cost);
    std::vector<double> terms(assign.size());
    for (std::size_t i = 0; i < assign.size(); ++i) {
        terms[i] = cost(static_cast<Eigen::Index>(i), assign[i]);
    }
    DistanceReport r;
    r.estimator = "exact_assignment_w2";
    r.value = detail::pairwise_sum(terms.data(), terms.size()) / static_cast<double>(a.rows());
    r.m = static_cast<std::size_t>(a.rows());
    r.dim = a.cols();
    return r;
}

/// Log-domain Sinkhorn with ε = eps_factor·median cost. The value is the cost of a feasible
/// (rounded) plan, so it is an upper bound; `duality_gap` is its distance to a feasible dual value,
/// so the exact value lies in [value - gap, value].
inline DistanceReport entropic_w2(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b, double eps_factor = 0.05,
                                  int iterations = 500)
{
    detail::check_clouds(a, b);
    const Eigen::Index m = a.rows();
    const Eigen::MatrixXd cost = detail::squared_distances(a, b);
    std::vector<double> all(cost.data(), cost.data() + cost.size());
    double eps = eps_factor * detail::median(all);
    if (!(eps > 0.0)) {
        eps = eps_factor * std::max(cost.maxCoeff(), 1e-300);
    }
    const double log_mu = -std::log(static_cast<double>(m));
    Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd work(m, m);
    for (int it = 0; it < iterations; ++it) {
        // f_i = -ε log Σ_j exp((g_j - C_ij)/ε) + ε log μ_i
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index i = 0; i < m; ++i) {
                work(i, j) = (g[j] - cost(i, j)) / eps;
            }
        }
        for (Eigen::Index i = 0; i < m; ++i) {
            f[i] = eps * (log_mu - detail::log_sum_exp(work.data() + i, static_cast<std::size_t>(m),
                                                       static_cast<std::size_t>(m)));
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            for (Eigen::Index i = 0; i < m; ++i) {
                work(i, j) = (f[i] - cost(i, j)) / eps;
            }
            g[j] = eps * (log_mu - detail::log_sum_exp(work.data() + j * m, static_cast<std::size_t>(m), 1));
        }
    }
    Eigen::MatrixXd plan(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) {
            plan(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / eps);
        }
    }
    // round onto the transport polytope
    const double target = 1.0 / static_cast<double>(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double s = plan.row(i).sum();
        if (s > target) {
            plan.row(i) *= target / s;
        }
    }
    for (Eigen::Index j = 0; j < m; ++j) {
        const double s = plan.col(j).sum();
        if (s > target) {
            plan.col(j) *= target / s;
        }
    }
    Eigen::VectorXd err_r = Eigen::VectorXd::Constant(m, target) - plan.rowwise().sum();
    Eigen::VectorXd err_c = Eigen::VectorXd::Constant(m, target) - plan.colwise().sum().transpose();
    const double mass = err_r.sum();
    if (mass > 0) {
        plan += err_r * err_c.transpose() / mass;
    }
    const double primal = plan.cwiseProduct(cost).sum();
    // feasible dual: c-transform of f
    Eigen::VectorXd gc(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        gc[j] = (cost.col(j) - f).minCoeff();
    }
    const double dual = (f.sum() + gc.sum()) * target;
    DistanceReport r;
    r.estimator = "entropic_w2";
    r.value = primal;
    r.duality_gap = std::max(0.0, primal - dual);
    r.m = static_cast<std::size_t>(m);
    r.dim = a.cols();
    return r;
}

namespace detail
{

inline double bures_to_standard(const Eigen::VectorXd &mean, const Eigen::MatrixXd &cov, bool &floored)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()), Eigen::EigenvaluesOnly);
    double tr = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        double l = es.eigenvalues()[i];
        if (l < 1e-12) {
            l = 1e-12;
            floored = true;
        }
        const double s = std::sqrt(l);
        tr += (s - 1.0) * (s - 1.0);
    }
    return mean.squaredNorm() + tr;
}

inline double proxy_value(const Eigen::MatrixXd &cloud, bool &floored)
{
    const Eigen::VectorXd mean = cloud.colwise().mean().transpose();
    const Eigen::MatrixXd centred = cloud.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(cloud.rows() - 1);
    return bures_to_standard(mean, cov, floored);
}

} // namespace detail

/// ‖m‖² + Tr(S + I - 2S^{1/2}) for the sample mean and covariance; stderr by a 10-block jackknife.
inline DistanceReport gaussian_proxy_w2(const Eigen::MatrixXd &cloud, int jackknife_blocks = 10)
{
    const Eigen::Index count = cloud.rows();
    const Eigen::Index dim = cloud.cols();
    if (count < dim + 1) {
        throw dimension_error("gaussian proxy needs at least D + 1 points");
    }
    DistanceReport r;
    r.estimator = "gaussian_moment_proxy";
    r.m = static_cast<std::size_t>(count);
    r.dim = dim;
    bool floored = false;
    r.value = detail::proxy_value(cloud, floored);
    const Eigen::Index block = count / std::max(jackknife_blocks, 1);
    if (jackknife_blocks >= 2 && block >= 1 && count - block >= dim + 1) {
        std::vector<double> theta;
        for (int b = 0; b < jackknife_blocks; ++b) {
            Eigen::MatrixXd rest(count - block, dim);
            const Eigen::Index lo = b * block;
            rest.topRows(lo) = cloud.topRows(lo);
            rest.bottomRows(count - block - lo) = cloud.bottomRows(count - lo - block);
            bool f2 = false;
            theta.push_back(detail::proxy_value(rest, f2));
        }
        double mean = 0.0;
        for (double t : theta) {
            mean += t;
        }
        mean /= static_cast<double>(theta.size());
        double ss = 0.0;
        for (double t : theta) {
            ss += (t - mean) * (t - mean);
        }
        const double k = static_cast<double>(theta.size());
        r.std_error = std::sqrt((k - 1.0) / k * ss);
    }
    r.eigen_floor_applied = floored;
    return r;
}

/// Inputs of the Stein-discrepancy bound for a whitened Wishart tensor.
struct BoundInputs {
    int n = 1;
    int d = 1;
    int p = 1;
    double opnorm_a = 1.0;                      // ‖A‖_op
    double m8p = 1.0;                           // E‖X‖₂^{8(p-1)}
    double d8 = 1.0;                            // E‖Dφ(G)‖_op⁸
    std::optional<std::vector<double>> weights; // absent: homogeneous
};

/// ‖α‖₄⁴/‖α‖₂⁴ of the inputs' weights (1/d when homogeneous).
inline double weight_ratio(const BoundInputs &in)
{
    if (!in.weights) {
        return 1.0 / static_cast<double>(in.d);
    }
    double s2 = 0.0;
    double s4 = 0.0;
    for (double a : *in.weights) {
        s2 += a * a;
        s4 += a * a * a * a;
    }
    return s4 / (s2 * s2);
}

/// 2r (‖A‖² p⁴ n √M8p √D8 + n^p) with r = ‖α‖₄⁴/‖α‖₂⁴, which is 1/d for equal weights.
inline double theorem_bound(const BoundInputs &in)
{
    if (in.n < 1 || in.d < 1 || in.p < 1 || in.opnorm_a < 0 || in.m8p < 0 || in.d8 < 0) {
        throw std::invalid_argument("theorem_bound: inputs must be nonnegative with n, d, p >= 1");
    }
    const double r = weight_ratio(in);
    const double p4 = std::pow(static_cast<double>(in.p), 4);
    const double n = static_cast<double>(in.n);
    return 2.0 * r *
           (in.opnorm_a * in.opnorm_a * p4 * n * std::sqrt(in.m8p) * std::sqrt(in.d8) + std::pow(n, in.p));
}

/// W₂² ≤ S²: a squared Stein discrepancy is returned as the W₂² certificate.
inline double discrepancy_to_w2(double s2)
{
    if (s2 < 0.0) {
        throw std::invalid_argument("squared discrepancy must be >= 0");
    }
    return s2;
}

/// Discrepancy certificate of a normalized sum of d i.i.d. summands from the summand's value.
inline double sum_certificate(double summand_s2, int d)
{
    if (d < 1) {
        throw std::invalid_argument("d must be >= 1");
    }
    return discrepancy_to_w2(summand_s2) / static_cast<double>(d);
}

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t points = 0;
};

/// Least-squares fit of log y against log x; needs at least 3 distinct x.
inline SlopeFit loglog_slope(const std::vector<double> &x, const std::vector<double> &y)
{
    if (x.size() != y.size()) {
        throw dimension_error("loglog_slope: x and y differ in length");
    }
    std::vector<double> distinct = x;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) {
        throw std::invalid_argument("slope fit needs at least 3 distinct abscissae");
    }
    const auto k = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0) || !(y[i] > 0)) {
            throw std::invalid_argument("slope fit needs positive values");
        }
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    SlopeFit fit;
    fit.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / k;
    fit.points = x.size();
    return fit;
}

struct ThresholdPoint {
    int n = 0;
    int d = 0;
    double distance2 = 0.0;
};

struct ThresholdSlopes {
    std::map<int, SlopeFit> vs_d; // keyed by fixed n
    std::map<int, SlopeFit> vs_n; // keyed by fixed d
};

/// Slopes of log distance² against log d at each fixed n, and against log n at each fixed d,
/// for every series with at least 3 distinct abscissae.
inline ThresholdSlopes threshold_slope(const std::vector<ThresholdPoint> &results)
{
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_n;
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_d;
    for (const auto &r : results) {
        by_n[r.n].first.push_back(r.d);
        by_n[r.n].second.push_back(r.distance2);
        by_d[r.d].first.push_back(r.n);
        by_d[r.d].second.push_back(r.distance2);
    }
    auto distinct = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
    };
    ThresholdSlopes out;
    for (const auto &[n, xy] : by_n) {
        if (distinct(xy.first) >= 3) {
            out.vs_d[n] = loglog_slope(xy.first, xy.second);
        }
    }
    for (const auto &[d, xy] : by_d) {
        if (distinct(xy.first) >= 3) {
            out.vs_n[d] = loglog_slope(xy.first, xy.second);
        }
    }
    if (out.vs_d.empty() && out.vs_n.empty()) {
        throw std::invalid_argument("threshold_slope needs a series with at least 3 distinct d or n");
    }
    return out;
}

} // namespace tclt

#endif
