#include <cmath>

#include <gtest/gtest.h>

#include "tclt/stein.hpp"

using namespace tclt;

namespace
{

std::vector<MeasureSpec> all_families(int n)
{
    const double b = 1 / std::sqrt(2.0);
    return {MeasureSpec::gaussian(n),
            MeasureSpec::uniform_box(n),
            MeasureSpec::laplace_product(n),
            MeasureSpec::polynomial_pushforward(n, {-b, 0, b}),
            MeasureSpec::uniform_logconcave_unconditional(n),
            MeasureSpec::toeplitz_gaussian_rows(n, {1.0, 0.3})};
}

} // namespace

TEST(OUQuadrature, WeightsFormProbability)
{
    for (int j : {1, 4, 16, 32}) {
        const auto [nodes, weights] = OUQuadrature(j, 64, 0).rule();
        double s = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            EXPECT_GT(nodes[i], 0.0);
            EXPECT_LT(nodes[i], 1.0);
            EXPECT_GT(weights[i], 0.0);
            s += weights[i];
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_THROW(OUQuadrature(0, 64, 0).rule(), std::invalid_argument);
    EXPECT_THROW(OUQuadrature(16, 0, 0).rule(), std::invalid_argument);
}

TEST(OUSemigroup, EndpointsAndEigenfunction)
{
    auto ident = [](const Eigen::VectorXd &x) { return Eigen::MatrixXd(x); };
    const Eigen::Vector3d y(0.7, -1.3, 2.2);
    const auto at0 = ou_semigroup_apply(ident, 0.0, y, 5, 1);
    EXPECT_EQ(at0.value, Eigen::MatrixXd(y));
    EXPECT_TRUE(at0.std_error.isZero(0.0));

    auto constant = [](const Eigen::VectorXd &) { return Eigen::MatrixXd(Eigen::Matrix3d::Identity()); };
    const auto late = ou_semigroup_apply(constant, 50.0, y, 16, 2);
    EXPECT_TRUE(late.value.isApprox(Eigen::Matrix3d::Identity(), 1e-15));

    const auto half = ou_semigroup_apply(ident, std::log(2.0), y, 20000, 3);
    for (int c = 0; c < 3; ++c) {
        EXPECT_LT(std::abs(half.value(c, 0) - y[c] / 2), 3 * half.std_error(c, 0));
    }
    EXPECT_THROW(ou_semigroup_apply(ident, -1.0, y, 4, 1), std::invalid_argument);
}

TEST(SteinKernel, IdentityMapGivesIdentity)
{
    const auto field = build_kernel(identity_map(3), {3, 1}, IndexKind::full, {});
    for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_TRUE(field.sample(i).tau.isApprox(Eigen::Matrix3d::Identity(), 1e-14));
    }
}

TEST(SteinKernel, LinearMapGivesGram)
{
    const Eigen::Matrix3d a{{1.0, 0.5, 0.0}, {-0.2, 0.8, 0.1}, {0.3, 0.0, 1.2}};
    const auto field = build_kernel(linear_map(a), {3, 1}, IndexKind::full, {});
    for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_LT((field.sample(i).tau - a * a.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(SteinKernel, DeterministicPerPoint)
{
    const auto field = build_kernel(monotone_rearrangement(MeasureSpec::laplace_product(3)), {3, 2},
                                    IndexKind::symmetric, OUQuadrature(16, 64, 9));
    EXPECT_EQ(field.sample(17).tau, field.sample(17).tau);
    EXPECT_NE(field.sample(17).tau, field.sample(18).tau);
    Eigen::MatrixXd inner;
    const auto grouped = field.sample(17, &inner);
    EXPECT_LT((grouped.tau - field.sample(17).tau).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GT(inner.maxCoeff(), 0.0);
}

TEST(SteinIdentity, IdentityMapExact)
{
    const auto field = build_kernel(identity_map(3), {3, 1}, IndexKind::full, {});
    const auto rep = stein_identity_check(field, TestFamily::linear, 5000, 1);
    EXPECT_TRUE(rep.passes()) << rep.residual << " +- " << rep.std_error;
    EXPECT_NEAR(rep.lhs - rep.rhs, rep.residual, 1e-12);
}

TEST(SteinIdentity, UniformLinear)
{
    const auto field = build_kernel(monotone_rearrangement(MeasureSpec::uniform_box(3)), {3, 1}, IndexKind::full, {});
    const auto rep = stein_identity_check(field, TestFamily::linear, 100000, 2);
    EXPECT_TRUE(rep.passes()) << rep.residual << " +- " << rep.std_error;
    EXPECT_GT(rep.std_error, 0.0);
}

TEST(SteinIdentity, GaussianQuadraticAndCubic)
{
    const auto field = build_kernel(identity_map(3), {3, 2}, IndexKind::principal, OUQuadrature(16, 64, 4));
    for (auto fam : {TestFamily::quadratic, TestFamily::cubic_odd}) {
        const auto rep = stein_identity_check(field, fam, 100000, 3);
        EXPECT_TRUE(rep.passes()) << to_string(fam) << " " << rep.residual << " +- " << rep.std_error;
    }
}

TEST(SteinIdentity, AllFamiliesAtSmallScale)
{
    for (const auto &spec : all_families(3)) {
        for (int p : {1, 2}) {
            const auto field =
                build_kernel(default_transport(spec), {3, p}, IndexKind::principal, OUQuadrature(16, 64, 5));
            for (auto fam : {TestFamily::linear, TestFamily::quadratic, TestFamily::cubic_odd}) {
                const auto rep = stein_identity_check(field, fam, 20000, 6);
                EXPECT_TRUE(rep.passes()) << to_string(spec.family()) << " p=" << p << " " << to_string(fam) << " "
                                          << rep.residual << " +- " << rep.std_error;
            }
        }
    }
}

TEST(SteinIdentity, FaultInjectionIsDetected)
{
    auto field = build_kernel(monotone_rearrangement(MeasureSpec::uniform_box(3)), {3, 2}, IndexKind::principal, {});
    field.inject_fault(0.1);
    EXPECT_FALSE(stein_identity_check(field, TestFamily::linear, 20000, 7).passes());
    auto ident = build_kernel(identity_map(2), {2, 1}, IndexKind::full, {});
    ident.inject_fault(0.1);
    EXPECT_FALSE(stein_identity_check(ident, TestFamily::linear, 20000, 7).passes());
}

TEST(SteinIdentity, SuiteMatchesSeparateChecksAndIgnoresWorkers)
{
    const auto field = build_kernel(monotone_rearrangement(MeasureSpec::laplace_product(3)), {3, 2},
                                    IndexKind::principal, OUQuadrature(16, 64, 8));
    const auto suite = identity_suite(field, 6000, 11, 1);
    const auto suite3 = identity_suite(field, 6000, 11, 3);
    EXPECT_EQ(suite.linear.residual, suite3.linear.residual);
    EXPECT_EQ(suite.moment.kernel_mean, suite3.moment.kernel_mean);
    const auto lin = stein_identity_check(field, TestFamily::linear, 6000, 11);
    EXPECT_NEAR(suite.linear.residual, lin.residual, 1e-12);
    const auto mom = moment_identity_check(field, 6000);
    EXPECT_LT((suite.moment.kernel_mean - mom.kernel_mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KernelMoment, MatchesCovarianceAcrossFamilies)
{
    const std::vector<std::pair<int, int>> shapes = {{2, 1}, {4, 2}, {3, 3}, {6, 3}};
    for (const auto &spec_n : {2, 3, 4, 6}) {
        for (const auto &[n, p] : shapes) {
            if (n != spec_n) {
                continue;
            }
            for (const auto &spec : all_families(n)) {
                const auto field =
                    build_kernel(default_transport(spec), {n, p}, IndexKind::principal, OUQuadrature(16, 64, 12));
                const auto rep = moment_identity_check(field, 20000);
                if (spec.family() == Family::polynomial_pushforward && p == 3) {
                    // Entrywise stderrs are unreliable for this tail; compare the averaged diagonal instead.
                    const double diag = rep.kernel_mean.diagonal().mean();
                    EXPECT_NEAR(diag, rep.covariance.diagonal().mean(), 0.15) << "n=" << n;
                    continue;
                }
                EXPECT_TRUE(rep.passes()) << to_string(spec.family()) << " n=" << n << " p=" << p
                                          << " worst ratio " << rep.worst_ratio;
            }
        }
    }
}

TEST(Discrepancy, ExactCases)
{
    const auto ident = build_kernel(identity_map(3), {3, 1}, IndexKind::full, {});
    const auto zero = discrepancy_upper_estimate(ident, std::nullopt, 2000);
    EXPECT_LT(zero.value, 1e-25);
    EXPECT_LT(zero.std_error, 1e-25);

    const auto doubled = build_kernel(identity_map(1).scaled(2.0), {1, 1}, IndexKind::full, {});
    const auto whitened = discrepancy_upper_estimate(doubled, Eigen::MatrixXd::Constant(1, 1, 0.5), 2000);
    EXPECT_LT(whitened.value, 1e-25);
    const auto raw = discrepancy_upper_estimate(doubled, std::nullopt, 2000);
    EXPECT_NEAR(raw.value, 9.0, 1e-12);
    EXPECT_THROW(discrepancy_upper_estimate(ident, Eigen::MatrixXd::Identity(2, 2), 10), dimension_error);
}

TEST(Discrepancy, StableAcrossSeeds)
{
    std::vector<double> vals;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto field = build_kernel(identity_map(3), {3, 2}, IndexKind::principal, OUQuadrature(16, 64, seed));
        const auto est = discrepancy_upper_estimate(field, std::nullopt, 20000);
        EXPECT_GT(est.value, 0.0);
        EXPECT_TRUE(std::isfinite(est.value));
        vals.push_back(est.value);
    }
    for (double v : vals) {
        EXPECT_LT(std::abs(v / vals[0] - 1), 0.05);
    }
}

TEST(Discrepancy, NonnegativeAndZeroOnlyForGaussianFirstOrder)
{
    const auto gauss = build_kernel(identity_map(3), {3, 1}, IndexKind::full, OUQuadrature(16, 64, 3));
    const auto g = discrepancy_upper_estimate(gauss, std::nullopt, 5000);
    EXPECT_LE(g.value, g.std_error + 1e-20);
    for (const auto &spec : all_families(3)) {
        const auto field = build_kernel(default_transport(spec), {3, 2}, IndexKind::principal, OUQuadrature(16, 64, 3));
        const auto est = discrepancy_upper_estimate(field, std::nullopt, 3000);
        EXPECT_GT(est.value, 0.0) << to_string(spec.family());
    }
}

TEST(Discrepancy, QuadratureRefinement)
{
    const auto map = monotone_rearrangement(MeasureSpec::uniform_box(3));
    auto est = [&](int j, int k) {
        return discrepancy_upper_estimate(build_kernel(map, {3, 2}, IndexKind::principal, OUQuadrature(j, k, 21)),
                                          std::nullopt, 10000);
    };
    const auto base = est(16, 64);
    const auto more_nodes = est(32, 64);
    EXPECT_LT(std::abs(more_nodes.value - base.value), 2 * base.std_error);

    // Inner sampling noise adds a c/K term; removing it leaves agreement within the outer error.
    const auto k128 = est(16, 128);
    const auto k256 = est(16, 256);
    EXPECT_GT(base.value, k128.value);
    EXPECT_GT(k128.value, k256.value);
    const double extrap_lo = 2 * k128.value - base.value;
    const double extrap_hi = 2 * k256.value - k128.value;
    EXPECT_LT(std::abs(extrap_hi - extrap_lo), 2 * base.std_error);
}

TEST(Contraction, Examples)
{
    const auto ident = lemma43_check(build_kernel(identity_map(3), {3, 1}, IndexKind::full, {}), 200);
    EXPECT_NEAR(ident.max_opnorm, 1.0, 1e-14);
    const auto half = lemma43_check(build_kernel(identity_map(3).scaled(0.5), {3, 1}, IndexKind::full, {}), 200);
    EXPECT_NEAR(half.max_opnorm, 0.25, 1e-14);
    const auto u = monotone_rearrangement(MeasureSpec::uniform_box(1));
    const auto con = lemma43_check(build_kernel(u.scaled(1 / u.alpha()), {1, 1}, IndexKind::full, {}), 10000);
    EXPECT_LE(con.max_opnorm, 1.0 + 3 * con.inner_stderr);
    EXPECT_GT(con.max_opnorm, 0.5);
}
