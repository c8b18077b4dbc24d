#ifndef TCLT_STEIN_HPP
#define TCLT_STEIN_HPP

// Stein kernels of φ̃(G) = φ(G)^{⊗p} - E[φ(G)^{⊗p}] built from the
// Ornstein-Uhlenbeck representation -DL^{-1}φ̃ = ∫ e^{-t} P_t Dφ̃ dt.
//
// For an outer Gaussian point y the estimator is
//   τ̂(y) = M(y) Dφ̃(y)ᵀ,   M(y) = Σ_j w_j (1/K) Σ_k Dφ̃(u_j y + √(1-u_j²) N_k),
// with u = e^{-t} on Gauss-Legendre nodes in (0, 1) and the same K inner
// normals N_k at every time node.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "detail/numeric.hpp"
#include "errors.hpp"
#include "estimate.hpp"
#include "random.hpp"
#include "symtensor.hpp"
#include "transport.hpp"

namespace tclt
{

struct OUQuadrature {
    int time_nodes = 16;
    int inner_samples = 64;
    std::uint64_t seed = 0;

    OUQuadrature() = default;
    OUQuadrature(int j, int k, std::uint64_t s) : time_nodes(j), inner_samples(k), seed(s) {}

    /// Nodes u_j = e^{-t_j} and weights w_j of ∫_0^∞ e^{-t} g(t) dt = ∫_0^1 g(-ln u) du.
    [[nodiscard]] std::pair<std::vector<double>, std::vector<double>> rule() const
    {
        if (time_nodes < 1) {
            throw std::invalid_argument("OU quadrature needs at least one time node");
        }
        if (inner_samples < 1) {
            throw std::invalid_argument("OU quadrature needs at least one inner sample");
        }
        return detail::gauss_legendre(time_nodes, 0.0, 1.0);
    }
};

/// Monte Carlo value and elementwise standard error of a matrix-valued expectation.
struct MatrixEstimate {
    Eigen::MatrixXd value;
    Eigen::MatrixXd std_error;
};

/// P_t F(y) = E[F(e^{-t} y + √(1 - e^{-2t}) N)] by K Monte Carlo draws; t = 0 is exact.
inline MatrixEstimate ou_semigroup_apply(const std::function<Eigen::MatrixXd(const Eigen::VectorXd &)> &f, double t,
                                         const Eigen::VectorXd &y, int k, std::uint64_t seed)
{
    if (t < 0.0) {
        throw std::invalid_argument("OU time must be >= 0");
    }
    if (k < 1) {
        throw std::invalid_argument("OU semigroup needs K >= 1");
    }
    if (t == 0.0) {
        Eigen::MatrixXd v = f(y);
        return {v, Eigen::MatrixXd::Zero(v.rows(), v.cols())};
    }
    const double u = std::exp(-t);
    const double s = std::sqrt(-std::expm1(-2.0 * t));
    auto eng = make_engine(seed);
    std::normal_distribution<double> normal;
    detail::running_stats acc;
    Eigen::VectorXd z(y.size());
    for (int i = 0; i < k; ++i) {
        for (Eigen::Index c = 0; c < y.size(); ++c) {
            z[c] = u * y[c] + s * normal(eng);
        }
        acc.push(f(z));
    }
    return {acc.mean(), acc.stderr_of_mean()};
}

/// Evaluated kernel at one outer point.
struct KernelSample {
    Eigen::VectorXd y;          // outer Gaussian point
    Eigen::VectorXd value;      // φ̃(y)
    Eigen::MatrixXd jacobian;   // Dφ̃(y), D x n
    Eigen::MatrixXd ou_average; // M(y), D x n
    Eigen::MatrixXd tau;        // τ̂(y), D x D
    int clamped = 0;
};

class SteinKernelField
{
public:
    SteinKernelField(TransportMap map, IndexSet rows, Eigen::VectorXd center, OUQuadrature quad)
        : map_(std::move(map)), rows_(std::move(rows)), center_(std::move(center)), quad_(quad)
    {
        if (map_.n() != rows_.space().n) {
            throw dimension_error("kernel: map dimension differs from tensor space n");
        }
        if (center_.size() != rows_.size()) {
            throw dimension_error("kernel: centering vector has wrong length");
        }
        std::tie(nodes_, weights_) = quad_.rule();
    }

    [[nodiscard]] const TransportMap &map() const noexcept { return map_; }
    [[nodiscard]] const IndexSet &rows() const noexcept { return rows_; }
    [[nodiscard]] const Eigen::VectorXd &center() const noexcept { return center_; }
    [[nodiscard]] const OUQuadrature &quadrature() const noexcept { return quad_; }
    [[nodiscard]] Eigen::Index output_dim() const noexcept { return rows_.size(); }
    [[nodiscard]] int n() const noexcept { return map_.n(); }

    /// Adds eps·Id to every τ̂; a fault hook for testing the checks themselves.
    void inject_fault(double eps) noexcept { fault_ = eps; }
    [[nodiscard]] double fault() const noexcept { return fault_; }

    /// φ̃(x) and Dφ̃(x), accumulated into `jac` with weight `scale`.
    int value_and_jacobian(const double *x, Eigen::Ref<Eigen::VectorXd> value, Eigen::Ref<Eigen::MatrixXd> jac,
                           double scale, std::vector<double> &phi, std::vector<double> &dphi) const
    {
        const int n = map_.n();
        phi.resize(n);
        dphi.resize(n);
        int clamped = 0;
        if (map_.is_linear()) {
            Eigen::Map<const Eigen::VectorXd> xv(x, n);
            Eigen::Map<Eigen::VectorXd>(phi.data(), n) = map_.matrix() * xv;
            jac += scale * tensor_power_jacobian(Eigen::Map<const Eigen::VectorXd>(phi.data(), n), map_.matrix(),
                                                 rows_);
        } else {
            clamped = map_.evaluate_diagonal(x, phi.data(), dphi.data());
            tensor_power_jacobian_diagonal(phi.data(), dphi.data(), rows_, jac, scale);
        }
        if (value.size() > 0) {
            for (Eigen::Index r = 0; r < rows_.size(); ++r) {
                double prod = 1.0;
                for (int j : rows_[r]) {
                    prod *= phi[static_cast<std::size_t>(j)];
                }
                value[r] = prod - center_[r];
            }
        }
        return clamped;
    }

    /// τ̂ at the outer point drawn for index i; per-point stream derive_seed(seed, i).
    /// When `inner` is given it receives the elementwise inner standard error of M(y).
    [[nodiscard]] KernelSample sample(std::size_t i, Eigen::MatrixXd *inner = nullptr) const
    {
        const int n = map_.n();
        const Eigen::Index dim = rows_.size();
        auto eng = make_engine(derive_seed(quad_.seed, i));
        std::normal_distribution<double> normal;
        KernelSample ks;
        ks.y.resize(n);
        for (int c = 0; c < n; ++c) {
            ks.y[c] = normal(eng);
        }
        const int kcount = quad_.inner_samples;
        Eigen::MatrixXd normals(n, kcount);
        for (int k = 0; k < kcount; ++k) {
            for (int c = 0; c < n; ++c) {
                normals(c, k) = normal(eng);
            }
        }
        std::vector<double> phi;
        std::vector<double> dphi;
        ks.value.resize(dim);
        ks.jacobian = Eigen::MatrixXd::Zero(dim, n);
        ks.clamped = value_and_jacobian(ks.y.data(), ks.value, ks.jacobian, 1.0, phi, dphi);

        Eigen::VectorXd none(0);
        Eigen::VectorXd z(n);
        ks.ou_average = Eigen::MatrixXd::Zero(dim, n);
        if (inner == nullptr) {
            for (std::size_t j = 0; j < nodes_.size(); ++j) {
                const double u = nodes_[j];
                const double s = std::sqrt((1.0 - u) * (1.0 + u));
                const double w = weights_[j] / kcount;
                for (int k = 0; k < kcount; ++k) {
                    z = u * ks.y + s * normals.col(k);
                    ks.clamped += value_and_jacobian(z.data(), none, ks.ou_average, w, phi, dphi);
                }
            }
        } else {
            // group by inner draw: M = mean_k S_k with S_k = Σ_j w_j Dφ̃(z_jk), i.i.d. given y
            detail::running_stats acc;
            Eigen::MatrixXd sk(dim, n);
            for (int k = 0; k < kcount; ++k) {
                sk.setZero();
                for (std::size_t j = 0; j < nodes_.size(); ++j) {
                    const double u = nodes_[j];
                    const double s = std::sqrt((1.0 - u) * (1.0 + u));
                    z = u * ks.y + s * normals.col(k);
                    ks.clamped += value_and_jacobian(z.data(), none, sk, weights_[j], phi, dphi);
                }
                acc.push(sk);
            }
            ks.ou_average = acc.mean();
            *inner = acc.stderr_of_mean();
        }
        ks.tau = ks.ou_average * ks.jacobian.transpose();
        if (fault_ != 0.0) {
            ks.tau.diagonal().array() += fault_;
        }
        return ks;
    }

private:
    TransportMap map_;
    IndexSet rows_;
    Eigen::VectorXd center_;
    OUQuadrature quad_;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    double fault_ = 0.0;
};

/// Kernel field for φ^{⊗p} on the rows of `kind`, centred at the exact mean E[φ(G)^{⊗p}].
inline SteinKernelField build_kernel(const TransportMap &map, const TensorSpace &space, IndexKind kind,
                                     const OUQuadrature &quad)
{
    IndexSet rows(space, kind);
    Eigen::VectorXd center = map.tensor_power_mean(rows);
    return SteinKernelField(map, std::move(rows), std::move(center), quad);
}

enum class TestFamily { linear, quadratic, cubic_odd };

inline std::string to_string(TestFamily f)
{
    switch (f) {
        case TestFamily::linear:
            return "linear";
        case TestFamily::quadratic:
            return "quadratic";
        case TestFamily::cubic_odd:
            return "cubic_odd";
    }
    return "?";
}

struct SteinIdentityReport {
    TestFamily family = TestFamily::linear;
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
    std::size_t clamped = 0;

    /// |residual| < threshold·stderr, with an absolute floor for exactly constant kernels.
    [[nodiscard]] bool passes(double threshold = 4.0, double floor = 1e-10) const
    {
        return std::abs(residual) < threshold * std_error + floor;
    }
};

namespace detail
{

// Test function f(Y) = c(Y) M Y with c = 1, aᵀY, (aᵀY)²; returns ⟨Y, f(Y)⟩ and ⟨τ, Df(Y)⟩_HS.
struct test_function {
    TestFamily family;
    Eigen::MatrixXd m;
    Eigen::VectorXd a;

    static test_function make(TestFamily family, Eigen::Index dim, std::uint64_t seed)
    {
        auto eng = make_engine(hash64({seed, 0x7465737466ULL}));
        std::normal_distribution<double> normal;
        test_function f{family, Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd(dim)};
        for (Eigen::Index r = 0; r < dim; ++r) {
            for (Eigen::Index c = 0; c < dim; ++c) {
                f.m(r, c) += 0.5 * normal(eng);
            }
            f.a[r] = normal(eng) / std::sqrt(static_cast<double>(dim));
        }
        return f;
    }

    [[nodiscard]] std::pair<double, double> sides(const Eigen::VectorXd &y, const Eigen::MatrixXd &tau) const
    {
        const Eigen::VectorXd my = m * y;
        const double quad = y.dot(my);
        const double tm = (tau.cwiseProduct(m)).sum();
        switch (family) {
            case TestFamily::linear:
                return {quad, tm};
            case TestFamily::quadratic: {
                // Df = (aᵀY) M + (M Y) aᵀ
                const double s = a.dot(y);
                return {s * quad, s * tm + my.dot(tau * a)};
            }
            case TestFamily::cubic_odd: {
                // Df = (aᵀY)² M + 2 (aᵀY) (M Y) aᵀ
                const double s = a.dot(y);
                return {s * s * quad, s * s * tm + 2.0 * s * my.dot(tau * a)};
            }
        }
        return {0.0, 0.0};
    }
};

} // namespace detail

/// Coupled estimate of E⟨Y, f(Y)⟩ - E⟨τ̂(G), Df(Y)⟩ with Y = φ̃(G), on shared samples.
inline SteinIdentityReport stein_identity_check(const SteinKernelField &field, TestFamily family, std::size_t mc_n,
                                                std::uint64_t seed, int workers = 1)
{
    if (mc_n < 2) {
        throw std::invalid_argument("stein_identity_check needs mc_n >= 2");
    }
    const auto f = detail::test_function::make(family, field.output_dim(), seed);
    std::atomic<std::size_t> clamped{0};
    auto stats = detail::chunked_stats(mc_n, workers, [&](std::size_t i) {
        const auto ks = field.sample(i);
        clamped += static_cast<std::size_t>(ks.clamped);
        const auto [l, r] = f.sides(ks.value, ks.tau);
        Eigen::MatrixXd row(1, 3);
        row << l, r, l - r;
        return row;
    });
    SteinIdentityReport rep;
    rep.family = family;
    rep.lhs = stats.mean()(0, 0);
    rep.rhs = stats.mean()(0, 1);
    rep.residual = stats.mean()(0, 2);
    rep.std_error = stats.stderr_of_mean()(0, 2);
    rep.samples = mc_n;
    rep.clamped = clamped.load();
    return rep;
}

struct MomentIdentityReport {
    Eigen::MatrixXd kernel_mean;
    Eigen::MatrixXd kernel_stderr;
    Eigen::MatrixXd covariance; // exact Cov(φ̃(G))
    double max_abs_diff = 0.0;
    double worst_ratio = 0.0; // max |diff| / stderr over entries with stderr > 0

    [[nodiscard]] bool passes(double threshold = 4.0, double floor = 1e-10) const
    {
        for (Eigen::Index r = 0; r < covariance.rows(); ++r) {
            for (Eigen::Index c = 0; c < covariance.cols(); ++c) {
                if (std::abs(kernel_mean(r, c) - covariance(r, c)) >= threshold * kernel_stderr(r, c) + floor) {
                    return false;
                }
            }
        }
        return true;
    }
};

/// E[τ̂(G)] against the exact covariance of φ̃(G).
inline MomentIdentityReport moment_identity_check(const SteinKernelField &field, std::size_t mc_n, int workers = 1)
{
    auto stats = detail::chunked_stats(mc_n, workers, [&](std::size_t i) { return field.sample(i).tau; });
    MomentIdentityReport rep;
    rep.kernel_mean = stats.mean();
    rep.kernel_stderr = stats.stderr_of_mean();
    rep.covariance = field.map().tensor_power_covariance(field.rows());
    const Eigen::MatrixXd diff = (rep.kernel_mean - rep.covariance).cwiseAbs();
    rep.max_abs_diff = diff.maxCoeff();
    for (Eigen::Index r = 0; r < diff.rows(); ++r) {
        for (Eigen::Index c = 0; c < diff.cols(); ++c) {
            if (rep.kernel_stderr(r, c) > 0) {
                rep.worst_ratio = std::max(rep.worst_ratio, diff(r, c) / rep.kernel_stderr(r, c));
            }
        }
    }
    return rep;
}

/// Both identity checks from one pass over the outer points.
struct IdentitySuiteReport {
    SteinIdentityReport linear;
    SteinIdentityReport quadratic;
    MomentIdentityReport moment;
};

inline IdentitySuiteReport identity_suite(const SteinKernelField &field, std::size_t mc_n, std::uint64_t seed,
                                          int workers = 1)
{
    const Eigen::Index dim = field.output_dim();
    const auto fl = detail::test_function::make(TestFamily::linear, dim, seed);
    const auto fq = detail::test_function::make(TestFamily::quadratic, dim, seed);
    std::atomic<std::size_t> clamped{0};
    auto stats = detail::chunked_stats(mc_n, workers, [&](std::size_t i) {
        const auto ks = field.sample(i);
        clamped += static_cast<std::size_t>(ks.clamped);
        Eigen::MatrixXd row(1, 6 + dim * dim);
        const auto [l1, r1] = fl.sides(ks.value, ks.tau);
        const auto [l2, r2] = fq.sides(ks.value, ks.tau);
        row(0, 0) = l1;
        row(0, 1) = r1;
        row(0, 2) = l1 - r1;
        row(0, 3) = l2;
        row(0, 4) = r2;
        row(0, 5) = l2 - r2;
        row.rightCols(dim * dim) = ks.tau.reshaped(1, dim * dim);
        return row;
    });
    IdentitySuiteReport rep;
    const auto &mean = stats.mean();
    const Eigen::MatrixXd se = stats.stderr_of_mean();
    auto fill = [&](SteinIdentityReport &r, TestFamily fam, int off) {
        r.family = fam;
        r.lhs = mean(0, off);
        r.rhs = mean(0, off + 1);
        r.residual = mean(0, off + 2);
        r.std_error = se(0, off + 2);
        r.samples = mc_n;
        r.clamped = clamped.load();
    };
    fill(rep.linear, TestFamily::linear, 0);
    fill(rep.quadratic, TestFamily::quadratic, 3);
    rep.moment.kernel_mean = mean.rightCols(dim * dim).reshaped(dim, dim);
    rep.moment.kernel_stderr = se.rightCols(dim * dim).reshaped(dim, dim);
    rep.moment.covariance = field.map().tensor_power_covariance(field.rows());
    const Eigen::MatrixXd diff = (rep.moment.kernel_mean - rep.moment.covariance).cwiseAbs();
    rep.moment.max_abs_diff = diff.maxCoeff();
    for (Eigen::Index r = 0; r < dim; ++r) {
        for (Eigen::Index c = 0; c < dim; ++c) {
            if (rep.moment.kernel_stderr(r, c) > 0) {
                rep.moment.worst_ratio =
                    std::max(rep.moment.worst_ratio, diff(r, c) / rep.moment.kernel_stderr(r, c));
            }
        }
    }
    return rep;
}

/// Monte Carlo mean of ‖A τ̂(G) Aᵀ - Id‖²_HS, an upper bound on the squared Stein discrepancy of Aφ̃(G).
inline Estimate discrepancy_upper_estimate(const SteinKernelField &field, const std::optional<Eigen::MatrixXd> &whitener,
                                           std::size_t mc_n, int workers = 1)
{
    const Eigen::Index dim = field.output_dim();
    if (whitener && (whitener->rows() != dim || whitener->cols() != dim)) {
        throw dimension_error("whitener must be " + std::to_string(dim) + "x" + std::to_string(dim));
    }
    auto stats = detail::chunked_stats(mc_n, workers, [&](std::size_t i) {
        const auto ks = field.sample(i);
        Eigen::MatrixXd t = whitener ? Eigen::MatrixXd(*whitener * ks.tau * whitener->transpose()) : ks.tau;
        t.diagonal().array() -= 1.0;
        return t.squaredNorm();
    });
    return {stats.mean()(0, 0), stats.stderr_of_mean()(0, 0)};
}

struct ContractionReport {
    double max_opnorm = 0.0;
    double inner_stderr = 0.0; // inner Monte Carlo error of ‖τ̂‖_op at the maximizing point
    double max_inner_stderr = 0.0;
    std::size_t samples = 0;
};

/// max over sampled points of ‖τ̂(y)‖_op, for maps with ‖Dφ‖_op <= 1.
inline ContractionReport lemma43_check(const SteinKernelField &field, std::size_t count, int workers = 1)
{
    std::vector<double> norms(count);
    std::vector<double> errs(count);
    detail::parallel_for((count + detail::reduction_chunk - 1) / detail::reduction_chunk, workers, [&](std::size_t c) {
        const std::size_t lo = c * detail::reduction_chunk;
        const std::size_t hi = std::min(count, lo + detail::reduction_chunk);
        for (std::size_t i = lo; i < hi; ++i) {
            Eigen::MatrixXd inner;
            const auto ks = field.sample(i, &inner);
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(ks.tau);
            norms[i] = svd.singularValues()[0];
            // first-order propagation of the inner error in M through τ̂ = M Dφ̃ᵀ
            Eigen::JacobiSVD<Eigen::MatrixXd> js(ks.jacobian);
            errs[i] = inner.norm() * js.singularValues()[0];
        }
    });
    ContractionReport rep;
    rep.samples = count;
    for (std::size_t i = 0; i < count; ++i) {
        if (norms[i] > rep.max_opnorm) {
            rep.max_opnorm = norms[i];
            rep.inner_stderr = errs[i];
        }
        rep.max_inner_stderr = std::max(rep.max_inner_stderr, errs[i]);
    }
    return rep;
}

} // namespace tclt

#endif
