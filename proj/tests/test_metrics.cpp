#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tclt/metrics.hpp"

using namespace tclt;

namespace
{

Eigen::MatrixXd cloud(std::mt19937_64 &eng, int m, int dim, double scale = 1.0)
{
    std::normal_distribution<double> g(0.0, scale);
    return Eigen::MatrixXd::NullaryExpr(m, dim, [&] { return g(eng); });
}

BoundInputs example_inputs()
{
    BoundInputs in;
    in.n = 3;
    in.d = 1000;
    in.p = 2;
    in.opnorm_a = 1.0;
    in.m8p = 945.0;
    in.d8 = 1.0;
    return in;
}

} // namespace

TEST(ExactW2, MatchesBruteForce)
{
    std::mt19937_64 eng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 1 + trial % 6;
        const int dim = 1 + trial % 3;
        const auto a = cloud(eng, m, dim);
        const auto b = cloud(eng, m, dim, 1.5);
        EXPECT_NEAR(exact_w2(a, b).value, oracle::brute_force_w2(a, b), 1e-12);
    }
}

TEST(ExactW2, OneDimensionalSortedCoupling)
{
    std::mt19937_64 eng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 2 + trial * 3;
        const auto a = cloud(eng, m, 1);
        const auto b = cloud(eng, m, 1, 0.7);
        const double want = oracle::sorted_coupling_w2(std::vector<double>(a.data(), a.data() + m),
                                                       std::vector<double>(b.data(), b.data() + m));
        EXPECT_NEAR(exact_w2(a, b).value, want, 1e-12);
    }
}

TEST(ExactW2, MetricProperties)
{
    std::mt19937_64 eng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const int m = 5 + trial;
        const auto a = cloud(eng, m, 2);
        const auto b = cloud(eng, m, 2, 1.3);
        const auto c = cloud(eng, m, 2, 0.6);
        EXPECT_NEAR(exact_w2(a, b).value, exact_w2(b, a).value, 1e-12);
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(m);
        perm.setIdentity();
        std::shuffle(perm.indices().data(), perm.indices().data() + m, eng);
        EXPECT_EQ(exact_w2(a, perm * a).value, 0.0);
        EXPECT_GT(exact_w2(a, b).value, 0.0);
        EXPECT_LE(std::sqrt(exact_w2(a, c).value),
                  std::sqrt(exact_w2(a, b).value) + std::sqrt(exact_w2(b, c).value) + 1e-12);
    }
}

TEST(ExactW2, Errors)
{
    EXPECT_THROW(exact_w2(Eigen::MatrixXd(3, 2), Eigen::MatrixXd(4, 2)), dimension_error);
    EXPECT_THROW(exact_w2(Eigen::MatrixXd(3, 2), Eigen::MatrixXd(3, 1)), dimension_error);
    EXPECT_THROW(exact_w2(Eigen::MatrixXd::Zero(2001, 1), Eigen::MatrixXd::Zero(2001, 1)), std::invalid_argument);
}

TEST(EntropicW2, BracketsExactValue)
{
    std::mt19937_64 eng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 5 + 3 * trial;
        const auto a = cloud(eng, m, 2);
        const auto b = cloud(eng, m, 2, 1.4);
        const double exact = exact_w2(a, b).value;
        const auto ent = entropic_w2(a, b);
        ASSERT_TRUE(ent.duality_gap.has_value());
        EXPECT_GE(ent.value, exact - *ent.duality_gap - 1e-12);
        EXPECT_GE(ent.value, exact - 1e-12);
        EXPECT_GE(*ent.duality_gap, 0.0);
    }
}

TEST(GaussianProxy, Examples)
{
    Eigen::MatrixXd one(2, 1);
    one << std::sqrt(2.0), -std::sqrt(2.0);
    EXPECT_NEAR(gaussian_proxy_w2(one).value, 1.0, 1e-12);

    const double a = std::sqrt(3.0);
    const double b = std::sqrt(27.0 / 4.0);
    Eigen::MatrixXd two(4, 2);
    two << a, b, a, -b, -a, b, -a, -b;
    const auto r = gaussian_proxy_w2(two);
    EXPECT_NEAR(r.value, 5.0, 1e-12);
    EXPECT_EQ(r.estimator, "gaussian_moment_proxy");
    EXPECT_FALSE(r.eigen_floor_applied);

    EXPECT_THROW(gaussian_proxy_w2(Eigen::MatrixXd::Zero(3, 3)), dimension_error);
    Eigen::MatrixXd flat(5, 2);
    flat << 1, 1, 2, 2, 3, 3, 4, 4, 5, 5;
    EXPECT_TRUE(gaussian_proxy_w2(flat).eigen_floor_applied);
}

TEST(GaussianProxy, StandardCloudShrinksLikeDOverM)
{
    std::mt19937_64 eng(5);
    const int dim = 3;
    for (int m : {2000, 20000, 200000}) {
        double mean = 0.0;
        const int trials = 10;
        for (int t = 0; t < trials; ++t) {
            mean += gaussian_proxy_w2(cloud(eng, m, dim)).value / trials;
        }
        // E ≈ D/m + (D(D+1)/8)/m for the mean and covariance terms.
        const double scaled = mean * m;
        EXPECT_GT(scaled, 0.5 * dim) << m;
        EXPECT_LT(scaled, 3.0 * dim) << m;
    }
}

TEST(GaussianProxy, JackknifeStderrIsSane)
{
    std::mt19937_64 eng(6);
    std::vector<double> vals;
    double se = 0.0;
    for (int t = 0; t < 30; ++t) {
        Eigen::MatrixXd x = cloud(eng, 2000, 2);
        x.col(0) *= 1.5;
        const auto r = gaussian_proxy_w2(x);
        vals.push_back(r.value);
        se += *r.std_error / 30;
    }
    double mean = 0.0;
    for (double v : vals) {
        mean += v / 30;
    }
    double var = 0.0;
    for (double v : vals) {
        var += (v - mean) * (v - mean) / 29;
    }
    EXPECT_GT(se, 0.5 * std::sqrt(var));
    EXPECT_LT(se, 2.0 * std::sqrt(var));
}

TEST(GaussianProxy, GelbrichLowerBound)
{
    std::mt19937_64 eng(7);
    const int m = 600;
    const int dim = 2;
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd b = cloud(eng, dim, dim);
        const Eigen::MatrixXd cov = b * b.transpose() + 0.2 * Eigen::MatrixXd::Identity(dim, dim);
        const Eigen::MatrixXd root = cov.llt().matrixL();
        const Eigen::MatrixXd x = cloud(eng, m, dim) * root.transpose();
        const auto proxy = gaussian_proxy_w2(x);
        const double exact = exact_w2(x, cloud(eng, m, dim)).value;
        EXPECT_LE(proxy.value, exact + 3 * *proxy.std_error) << trial;
    }
}

TEST(TheoremBound, ExampleArithmetic)
{
    const auto in = example_inputs();
    const double want = 2 * 16 * 0.003 * std::sqrt(945.0) + 2 * 9 / 1000.0;
    EXPECT_NEAR(theorem_bound(in), want, 1e-12);
    EXPECT_NEAR(theorem_bound(in), 2.969, 5e-4);
}

TEST(TheoremBound, UnitWeightsEqualHomogeneous)
{
    for (int d : {1, 7, 1000}) {
        auto in = example_inputs();
        in.d = d;
        auto w = in;
        w.weights = std::vector<double>(static_cast<std::size_t>(d), 1.0);
        EXPECT_NEAR(theorem_bound(w), theorem_bound(in), 1e-15 * theorem_bound(in));
        EXPECT_NEAR(weight_ratio(w), 1.0 / d, 1e-16);
    }
}

TEST(TheoremBound, Monotonicity)
{
    const auto base = example_inputs();
    const double b0 = theorem_bound(base);
    auto up = [&](auto edit) {
        auto in = base;
        edit(in);
        return theorem_bound(in);
    };
    EXPECT_GT(up([](BoundInputs &in) { in.m8p *= 2; }), b0);
    EXPECT_GT(up([](BoundInputs &in) { in.d8 *= 2; }), b0);
    EXPECT_GT(up([](BoundInputs &in) { in.opnorm_a *= 2; }), b0);
    EXPECT_GT(up([](BoundInputs &in) { in.n += 1; }), b0);
    EXPECT_GT(up([](BoundInputs &in) { in.p += 1; }), b0);
    double prev = b0;
    for (int d : {2000, 4000, 100000, 10000000}) {
        const double v = up([&](BoundInputs &in) { in.d = d; });
        EXPECT_LT(v, prev);
        prev = v;
    }
    EXPECT_LT(prev, 1e-3);
    EXPECT_THROW(up([](BoundInputs &in) { in.m8p = -1; }), std::invalid_argument);
}

TEST(Certificates, PassThroughAndSums)
{
    EXPECT_EQ(discrepancy_to_w2(0.0), 0.0);
    EXPECT_EQ(discrepancy_to_w2(2.969), 2.969);
    EXPECT_THROW(discrepancy_to_w2(-1e-9), std::invalid_argument);
    EXPECT_DOUBLE_EQ(sum_certificate(3.0, 300), 0.01);
    EXPECT_THROW(sum_certificate(1.0, 0), std::invalid_argument);
}

TEST(ThresholdSlope, SyntheticSeries)
{
    std::vector<ThresholdPoint> pts;
    for (int d : {50, 200, 800, 3200}) {
        pts.push_back({4, d, 7.5 / d});
    }
    for (int n : {2, 3, 5, 8}) {
        pts.push_back({n, 10, 0.25 * std::pow(n, 7)});
    }
    const auto s = threshold_slope(pts);
    EXPECT_NEAR(s.vs_d.at(4).slope, -1.0, 1e-12);
    EXPECT_NEAR(s.vs_n.at(10).slope, 7.0, 1e-12);
    EXPECT_EQ(s.vs_d.count(2), 0u);
}

TEST(ThresholdSlope, TooFewPoints)
{
    EXPECT_THROW(threshold_slope({{3, 50, 0.1}, {3, 200, 0.02}}), std::invalid_argument);
    EXPECT_THROW(loglog_slope({1, 2, 2}, {1, 2, 3}), std::invalid_argument);
    EXPECT_THROW(loglog_slope({1, 2, 3}, {1, 0, 3}), std::invalid_argument);
}

TEST(DistanceReportJson, Fields)
{
    DistanceReport r;
    r.estimator = "exact_assignment_w2";
    r.value = 0.25;
    r.m = 10;
    r.dim = 3;
    r.seed = 42;
    auto j = to_json(r);
    EXPECT_EQ(j["estimator"], "exact_assignment_w2");
    EXPECT_EQ(j["value"], 0.25);
    EXPECT_TRUE(j["stderr"].is_null());
    EXPECT_EQ(j["m"], 10);
    EXPECT_EQ(j["D"], 3);
    EXPECT_EQ(j["seed"], 42);
    r.std_error = 0.01;
    EXPECT_EQ(to_json(r)["stderr"], 0.01);
}
