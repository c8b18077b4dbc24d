#ifndef TCLT_MEASURES_HPP
#define TCLT_MEASURES_HPP

// Isotropic test measures on R^n.
//
// Five product families share one coordinate law across all n coordinates; the
// Toeplitz family is a centred Gaussian with unit-diagonal Toeplitz covariance.
// Every law here is symmetric about zero except the polynomial pushforward.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "detail/numeric.hpp"
#include "errors.hpp"
#include "estimate.hpp"
#include "random.hpp"

namespace tclt
{

enum class Family {
    gaussian,
    uniform_box,
    laplace_product,
    polynomial_pushforward,
    uniform_logconcave_unconditional,
    toeplitz_gaussian_rows,
};

inline std::string to_string(Family f)
{
    switch (f) {
        case Family::gaussian:
            return "gaussian";
        case Family::uniform_box:
            return "uniform_box";
        case Family::laplace_product:
            return "laplace_product";
        case Family::polynomial_pushforward:
            return "polynomial_pushforward";
        case Family::uniform_logconcave_unconditional:
            return "uniform_logconcave_unconditional";
        case Family::toeplitz_gaussian_rows:
            return "toeplitz_gaussian_rows";
    }
    return "?";
}

inline Family parse_family(const std::string &s)
{
    for (auto f : {Family::gaussian, Family::uniform_box, Family::laplace_product, Family::polynomial_pushforward,
                   Family::uniform_logconcave_unconditional, Family::toeplitz_gaussian_rows}) {
        if (to_string(f) == s) {
            return f;
        }
    }
    throw std::invalid_argument("unknown measure family '" + s + "'");
}

/// Highest raw moment order tabulated for coordinate laws.
inline constexpr int max_moment_order = 48;

// One-dimensional coordinate law of a product family.
class CoordinateLaw
{
public:
    virtual ~CoordinateLaw() = default;

    [[nodiscard]] virtual double density(double y) const = 0;
    [[nodiscard]] virtual double cdf(double y) const = 0;
    /// Lower-tail quantile; u in (0, 1).
    [[nodiscard]] virtual double quantile(double u) const = 0;
    [[nodiscard]] virtual double sample(engine_type &eng) const = 0;
    [[nodiscard]] virtual bool symmetric() const { return true; }

    /// E[Y^m], 0 <= m <= max_moment_order.
    [[nodiscard]] double raw_moment(int m) const
    {
        if (m < 0 || m > max_moment_order) {
            throw std::out_of_range("raw moment order out of range");
        }
        return moments_[static_cast<std::size_t>(m)];
    }

protected:
    std::vector<double> moments_;
};

namespace detail
{

inline double double_factorial_odd(int m) // (m-1)!! for even m, the Gaussian moment
{
    double r = 1.0;
    for (int k = m - 1; k > 1; k -= 2) {
        r *= k;
    }
    return r;
}

class GaussianLaw final : public CoordinateLaw
{
public:
    GaussianLaw()
    {
        moments_.resize(max_moment_order + 1);
        for (int m = 0; m <= max_moment_order; ++m) {
            moments_[m] = (m % 2 == 0) ? double_factorial_odd(m) : 0.0;
        }
    }
    [[nodiscard]] double density(double y) const override { return normal_pdf(y); }
    [[nodiscard]] double cdf(double y) const override { return normal_cdf(y); }
    [[nodiscard]] double quantile(double u) const override
    {
        return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
    }
    [[nodiscard]] double sample(engine_type &eng) const override { return std::normal_distribution<double>{}(eng); }
};

// Uniform on [-√3, √3].
class UniformBoxLaw final : public CoordinateLaw
{
public:
    static constexpr double half_width = 1.7320508075688772935274463415058723;

    UniformBoxLaw()
    {
        moments_.resize(max_moment_order + 1);
        for (int m = 0; m <= max_moment_order; ++m) {
            moments_[m] = (m % 2 == 0) ? std::pow(3.0, m / 2) / (m + 1.0) : 0.0;
        }
    }
    [[nodiscard]] double density(double y) const override
    {
        return std::abs(y) <= half_width ? 0.5 / half_width : 0.0;
    }
    [[nodiscard]] double cdf(double y) const override
    {
        return std::clamp((y + half_width) / (2.0 * half_width), 0.0, 1.0);
    }
    [[nodiscard]] double quantile(double u) const override { return half_width * (2.0 * u - 1.0); }
    [[nodiscard]] double sample(engine_type &eng) const override
    {
        return std::uniform_real_distribution<double>{-half_width, half_width}(eng);
    }
};

// Laplace with scale 1/√2 (unit variance).
class LaplaceLaw final : public CoordinateLaw
{
public:
    static constexpr double scale = 0.70710678118654752440084436210484904;

    LaplaceLaw()
    {
        moments_.resize(max_moment_order + 1);
        double fact = 1.0;
        for (int m = 0; m <= max_moment_order; ++m) {
            if (m > 0) {
                fact *= m;
            }
            // m! b^m with b^m = 2^{-m/2}
            moments_[m] = (m % 2 == 0) ? std::ldexp(fact, -m / 2) : 0.0;
        }
    }
    [[nodiscard]] double density(double y) const override { return std::exp(-std::abs(y) / scale) / (2.0 * scale); }
    [[nodiscard]] double cdf(double y) const override
    {
        return y < 0 ? 0.5 * std::exp(y / scale) : 1.0 - 0.5 * std::exp(-y / scale);
    }
    [[nodiscard]] double quantile(double u) const override
    {
        return u < 0.5 ? scale * std::log(2.0 * u) : -scale * std::log(2.0 * (1.0 - u));
    }
    [[nodiscard]] double sample(engine_type &eng) const override
    {
        const double e = std::exponential_distribution<double>{1.0 / scale}(eng);
        return std::bernoulli_distribution{0.5}(eng) ? e : -e;
    }
};

// Law of Q(G), G standard normal, Q a real polynomial (ascending coefficients).
class PolynomialLaw final : public CoordinateLaw
{
public:
    explicit PolynomialLaw(std::vector<double> coeffs) : coeffs_(std::move(coeffs))
    {
        using big = boost::multiprecision::cpp_bin_float_50;
        const int k = degree();
        // E[Q(G)^m] by exact polynomial expansion in 50-digit arithmetic
        std::vector<big> gauss(static_cast<std::size_t>(max_moment_order * k + 1));
        for (std::size_t j = 0; j < gauss.size(); ++j) {
            if (j % 2 == 1) {
                gauss[j] = 0;
            } else {
                big r = 1;
                for (int t = static_cast<int>(j) - 1; t > 1; t -= 2) {
                    r *= t;
                }
                gauss[j] = r;
            }
        }
        std::vector<big> power{big(1)};
        moments_.resize(max_moment_order + 1);
        for (int m = 0; m <= max_moment_order; ++m) {
            big acc = 0;
            for (std::size_t j = 0; j < power.size(); ++j) {
                acc += power[j] * gauss[j];
            }
            moments_[m] = static_cast<double>(acc);
            std::vector<big> next(power.size() + static_cast<std::size_t>(k), big(0));
            for (std::size_t a = 0; a < power.size(); ++a) {
                for (std::size_t b = 0; b < coeffs_.size(); ++b) {
                    next[a + b] += power[a] * big(coeffs_[b]);
                }
            }
            power = std::move(next);
        }
        // range used to bracket quantiles
        lo_ = hi_ = value(0.0);
        for (double x = -12.0; x <= 12.0; x += 1.0 / 256) {
            lo_ = std::min(lo_, value(x));
            hi_ = std::max(hi_, value(x));
        }
    }

    [[nodiscard]] int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
    [[nodiscard]] const std::vector<double> &coefficients() const { return coeffs_; }

    [[nodiscard]] double value(double x) const
    {
        double r = 0.0;
        for (std::size_t i = coeffs_.size(); i-- > 0;) {
            r = r * x + coeffs_[i];
        }
        return r;
    }
    [[nodiscard]] double derivative(double x) const
    {
        double r = 0.0;
        for (std::size_t i = coeffs_.size(); i-- > 1;) {
            r = r * x + static_cast<double>(i) * coeffs_[i];
        }
        return r;
    }

    /// Sorted real roots of Q(x) = y.
    [[nodiscard]] std::vector<double> preimages(double y) const
    {
        const int k = degree();
        std::vector<double> roots;
        if (k == 1) {
            roots.push_back((y - coeffs_[0]) / coeffs_[1]);
            return roots;
        }
        Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(k, k);
        const double lead = coeffs_[static_cast<std::size_t>(k)];
        for (int i = 0; i < k; ++i) {
            const double c = (i == 0 ? coeffs_[0] - y : coeffs_[static_cast<std::size_t>(i)]);
            companion(i, k - 1) = -c / lead;
            if (i > 0) {
                companion(i, i - 1) = 1.0;
            }
        }
        Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
        for (Eigen::Index i = 0; i < k; ++i) {
            const auto z = es.eigenvalues()[i];
            if (std::abs(z.imag()) <= 1e-7 * (1.0 + std::abs(z.real()))) {
                double x = z.real();
                for (int it = 0; it < 3; ++it) {
                    const double d = derivative(x);
                    if (d == 0.0) {
                        break;
                    }
                    x -= (value(x) - y) / d;
                }
                roots.push_back(x);
            }
        }
        std::sort(roots.begin(), roots.end());
        return roots;
    }

    [[nodiscard]] double density(double y) const override
    {
        double r = 0.0;
        for (double x : preimages(y)) {
            const double d = std::abs(derivative(x));
            if (d == 0.0) {
                return std::numeric_limits<double>::infinity();
            }
            r += normal_pdf(x) / d;
        }
        return r;
    }

    [[nodiscard]] double cdf(double y) const override
    {
        // Gaussian mass of {x : Q(x) <= y}, split at the real preimages of y
        auto roots = preimages(y);
        std::vector<double> cuts;
        cuts.push_back(-std::numeric_limits<double>::infinity());
        cuts.insert(cuts.end(), roots.begin(), roots.end());
        cuts.push_back(std::numeric_limits<double>::infinity());
        double mass = 0.0;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            const double a = cuts[i];
            const double b = cuts[i + 1];
            if (a == b) {
                continue;
            }
            double probe;
            if (std::isinf(a) && std::isinf(b)) {
                probe = 0.0;
            } else if (std::isinf(a)) {
                probe = b - 1.0;
            } else if (std::isinf(b)) {
                probe = a + 1.0;
            } else {
                probe = 0.5 * (a + b);
            }
            if (value(probe) <= y) {
                mass += normal_cdf(b) - normal_cdf(a);
            }
        }
        return std::clamp(mass, 0.0, 1.0);
    }

    [[nodiscard]] double quantile(double u) const override
    {
        auto f = [&](double y) { return cdf(y) - u; };
        std::uintmax_t iters = 200;
        auto [a, b] = boost::math::tools::toms748_solve(f, lo_, hi_, boost::math::tools::eps_tolerance<double>(50),
                                                        iters);
        return 0.5 * (a + b);
    }

    [[nodiscard]] double sample(engine_type &eng) const override
    {
        return value(std::normal_distribution<double>{}(eng));
    }
    [[nodiscard]] bool symmetric() const override { return false; }

private:
    std::vector<double> coeffs_;
    double lo_ = 0.0;
    double hi_ = 0.0;
};

// Density ∝ exp(-z²/2 - λ z⁴) rescaled to unit variance: Y = Z / σ, σ² = Var(Z).
// -(log ρ)'' = σ² + 12 λ σ⁴ y² >= σ², so the law is σ²-uniformly log-concave.
class QuarticTiltLaw final : public CoordinateLaw
{
public:
    static constexpr int table_cells = 4096;
    static constexpr double z_range = 9.0;

    explicit QuarticTiltLaw(double lambda) : lambda_(lambda)
    {
        if (!(lambda > 0.0)) {
            throw std::invalid_argument("quartic tilt needs lambda > 0");
        }
        auto g = [this](double z) { return std::exp(-0.5 * z * z - lambda_ * z * z * z * z); };
        norm_ = integrate(g, -z_range, z_range, 256, 16);
        std::vector<double> zmom(max_moment_order + 1);
        for (int m = 0; m <= max_moment_order; m += 2) {
            zmom[m] = integrate([&](double z) { return std::pow(z, m) * g(z); }, -z_range, z_range, 256, 16) / norm_;
        }
        sigma_ = std::sqrt(zmom[2]);
        moments_.assign(max_moment_order + 1, 0.0);
        for (int m = 0; m <= max_moment_order; m += 2) {
            moments_[m] = zmom[m] / std::pow(zmom[2], m / 2);
        }
        moments_[2] = 1.0;

        // lower-half CDF table on y in [-ymax, 0]
        ymax_ = z_range / sigma_;
        step_ = ymax_ / table_cells;
        table_.resize(table_cells + 1);
        table_[0] = 0.0;
        const auto [gn, gw] = gauss_legendre(8, -1.0, 1.0);
        gl_nodes_ = gn;
        gl_weights_ = gw;
        for (int k = 0; k < table_cells; ++k) {
            table_[k + 1] = table_[k] + cell_integral(-ymax_ + k * step_, -ymax_ + (k + 1) * step_);
        }
        // the two halves are mirror images; pin the midpoint exactly
        const double half = table_[table_cells];
        for (auto &c : table_) {
            c *= 0.5 / half;
        }
        table_scale_ = 0.5 / half;
    }

    [[nodiscard]] double lambda() const { return lambda_; }
    /// Standard deviation of the untilted-scale variable Z; the law is sigma²-uniformly log-concave.
    [[nodiscard]] double sigma() const { return sigma_; }

    [[nodiscard]] double density(double y) const override
    {
        const double z = sigma_ * y;
        return sigma_ * std::exp(-0.5 * z * z - lambda_ * z * z * z * z) / norm_;
    }

    [[nodiscard]] double cdf(double y) const override { return y <= 0 ? lower_cdf(y) : 1.0 - lower_cdf(-y); }

    [[nodiscard]] double quantile(double u) const override
    {
        if (u > 0.5) {
            return -lower_quantile(1.0 - u);
        }
        return lower_quantile(u);
    }

    /// Quantile for u <= 1/2, exact to Newton precision.
    [[nodiscard]] double lower_quantile(double u) const
    {
        if (u <= 0.0) {
            return -ymax_;
        }
        if (u >= 0.5) {
            return 0.0;
        }
        const auto it = std::upper_bound(table_.begin(), table_.end(), u);
        int k = static_cast<int>(it - table_.begin()) - 1;
        k = std::clamp(k, 0, table_cells - 1);
        double a = -ymax_ + k * step_;
        double b = a + step_;
        const double frac = (u - table_[k]) / (table_[k + 1] - table_[k]);
        double y = a + std::clamp(frac, 0.0, 1.0) * step_;
        for (int it2 = 0; it2 < 6; ++it2) {
            const double f = lower_cdf(y) - u;
            if (f > 0) {
                b = y;
            } else {
                a = y;
            }
            const double rho = density(y) * table_scale_;
            if (rho > 0 && std::abs(f / rho) <= 1e-15 * (1.0 + std::abs(y))) {
                break;
            }
            double next = rho > 0 ? y - f / rho : 0.5 * (a + b);
            if (!(next > a && next < b)) {
                next = 0.5 * (a + b);
            }
            y = next;
        }
        return y;
    }

    [[nodiscard]] double sample(engine_type &eng) const override
    {
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> unif;
        for (;;) {
            const double z = normal(eng);
            if (unif(eng) < std::exp(-lambda_ * z * z * z * z)) {
                return z / sigma_;
            }
        }
    }

private:
    [[nodiscard]] double cell_integral(double a, double b) const
    {
        double s = 0.0;
        for (std::size_t j = 0; j < gl_nodes_.size(); ++j) {
            s += gl_weights_[j] * density(0.5 * (a + b) + 0.5 * (b - a) * gl_nodes_[j]);
        }
        return 0.5 * (b - a) * s;
    }

    [[nodiscard]] double lower_cdf(double y) const
    {
        if (y <= -ymax_) {
            return 0.0;
        }
        if (y >= 0.0) {
            return 0.5;
        }
        int k = static_cast<int>(std::floor((y + ymax_) / step_));
        k = std::clamp(k, 0, table_cells - 1);
        const double a = -ymax_ + k * step_;
        return table_[k] + table_scale_ * cell_integral(a, y);
    }

    double lambda_;
    double norm_ = 1.0;
    double sigma_ = 1.0;
    double ymax_ = 0.0;
    double step_ = 0.0;
    double table_scale_ = 1.0;
    std::vector<double> table_;
    std::vector<double> gl_nodes_;
    std::vector<double> gl_weights_;
};

} // namespace detail

/// A parameterized measure on R^n. Immutable once built; copies share state.
class MeasureSpec
{
public:
    static MeasureSpec gaussian(int n) { return MeasureSpec(Family::gaussian, n); }
    static MeasureSpec uniform_box(int n) { return MeasureSpec(Family::uniform_box, n); }
    static MeasureSpec laplace_product(int n) { return MeasureSpec(Family::laplace_product, n); }

    /// Coordinates distributed as Q(G); coefficients in ascending order.
    static MeasureSpec polynomial_pushforward(int n, std::vector<double> coeffs)
    {
        MeasureSpec s(Family::polynomial_pushforward, n);
        while (coeffs.size() > 1 && coeffs.back() == 0.0) {
            coeffs.pop_back();
        }
        if (coeffs.size() < 2) {
            throw degenerate_error("polynomial pushforward needs degree >= 1");
        }
        s.poly_ = std::move(coeffs);
        s.build();
        return s;
    }

    static MeasureSpec uniform_logconcave_unconditional(int n, double lambda = 0.25)
    {
        MeasureSpec s(Family::uniform_logconcave_unconditional, n, false);
        s.lambda_ = lambda;
        s.build();
        return s;
    }

    /// Rows with covariance (Σ_s)_{ij} = s(|i-j|); symbol entries beyond n are ignored, missing ones are 0.
    static MeasureSpec toeplitz_gaussian_rows(int n, std::vector<double> symbol)
    {
        MeasureSpec s(Family::toeplitz_gaussian_rows, n, false);
        s.symbol_ = std::move(symbol);
        s.build();
        return s;
    }

    [[nodiscard]] Family family() const noexcept { return family_; }
    [[nodiscard]] int n() const noexcept { return n_; }
    [[nodiscard]] const std::vector<double> &polynomial() const noexcept { return poly_; }
    [[nodiscard]] double lambda() const noexcept { return lambda_; }
    [[nodiscard]] const std::vector<double> &symbol() const noexcept { return symbol_; }

    [[nodiscard]] bool is_product() const noexcept { return family_ != Family::toeplitz_gaussian_rows; }
    [[nodiscard]] bool is_unconditional() const noexcept
    {
        return is_product() && family_ != Family::polynomial_pushforward;
    }
    [[nodiscard]] bool is_log_concave() const noexcept { return family_ != Family::polynomial_pushforward; }
    [[nodiscard]] bool is_isotropic() const noexcept
    {
        if (family_ == Family::toeplitz_gaussian_rows) {
            return covariance().isIdentity(0.0);
        }
        if (family_ == Family::polynomial_pushforward) {
            return std::abs(law_->raw_moment(1)) < 1e-9 && std::abs(law_->raw_moment(2) - 1.0) < 1e-9;
        }
        return true;
    }

    /// Declared uniform log-concavity constant L, when the family has one.
    [[nodiscard]] std::optional<double> uniform_logconcavity() const
    {
        if (family_ == Family::gaussian) {
            return 1.0;
        }
        if (family_ == Family::uniform_logconcave_unconditional) {
            const auto &q = static_cast<const detail::QuarticTiltLaw &>(*law_);
            return q.sigma() * q.sigma();
        }
        return std::nullopt;
    }

    /// Declared L1-Poincaré (Cheeger) constant of a coordinate: 2ρ(0) for symmetric log-concave laws.
    [[nodiscard]] std::optional<double> l1_poincare() const
    {
        if (!is_product() || !is_log_concave()) {
            return std::nullopt;
        }
        return 2.0 * law_->density(0.0);
    }

    [[nodiscard]] const CoordinateLaw &coordinate_law() const
    {
        if (!law_) {
            throw unsupported_error(to_string(family_) + " is not a product family");
        }
        return *law_;
    }

    /// Declared covariance: identity for product families, Σ_s for Toeplitz rows.
    [[nodiscard]] Eigen::MatrixXd covariance() const
    {
        if (family_ == Family::toeplitz_gaussian_rows) {
            return *toeplitz_cov_;
        }
        return Eigen::MatrixXd::Identity(n_, n_);
    }

    /// Lower Cholesky factor of the Toeplitz covariance.
    [[nodiscard]] const Eigen::MatrixXd &toeplitz_factor() const
    {
        if (!toeplitz_chol_) {
            throw unsupported_error("toeplitz_factor needs the toeplitz_gaussian_rows family");
        }
        return *toeplitz_chol_;
    }

    /// Draws one point into `row` (length n).
    template <typename Row>
    void sample_point(engine_type &eng, Row &&row) const
    {
        if (family_ == Family::toeplitz_gaussian_rows) {
            Eigen::VectorXd g(n_);
            std::normal_distribution<double> normal;
            for (int i = 0; i < n_; ++i) {
                g[i] = normal(eng);
            }
            row = (*toeplitz_chol_ * g).transpose();
            return;
        }
        for (int i = 0; i < n_; ++i) {
            row[i] = law_->sample(eng);
        }
    }

    /// key=value block; polynomial and symbol as comma-separated reals.
    [[nodiscard]] std::string to_config() const
    {
        std::ostringstream os;
        os.precision(17);
        os << "family=" << to_string(family_) << "\n";
        os << "n=" << n_ << "\n";
        auto join = [&](const std::vector<double> &v) {
            std::ostringstream j;
            j.precision(17);
            for (std::size_t i = 0; i < v.size(); ++i) {
                j << (i ? "," : "") << v[i];
            }
            return j.str();
        };
        if (family_ == Family::polynomial_pushforward) {
            os << "polynomial=" << join(poly_) << "\n";
        }
        if (family_ == Family::uniform_logconcave_unconditional) {
            os << "lambda=" << lambda_ << "\n";
        }
        if (family_ == Family::toeplitz_gaussian_rows) {
            os << "symbol=" << join(symbol_) << "\n";
        }
        return os.str();
    }

    static MeasureSpec from_config(const std::map<std::string, std::string> &kv);
    static MeasureSpec from_config(const std::string &text);

private:
    MeasureSpec(Family f, int n, bool build_now = true) : family_(f), n_(n)
    {
        if (n < 1) {
            throw dimension_error("measure dimension must be >= 1");
        }
        if (build_now && f != Family::polynomial_pushforward) {
            build();
        }
    }

    void build()
    {
        switch (family_) {
            case Family::gaussian:
                law_ = std::make_shared<detail::GaussianLaw>();
                break;
            case Family::uniform_box:
                law_ = std::make_shared<detail::UniformBoxLaw>();
                break;
            case Family::laplace_product:
                law_ = std::make_shared<detail::LaplaceLaw>();
                break;
            case Family::polynomial_pushforward:
                law_ = std::make_shared<detail::PolynomialLaw>(poly_);
                break;
            case Family::uniform_logconcave_unconditional:
                law_ = std::make_shared<detail::QuarticTiltLaw>(lambda_);
                break;
            case Family::toeplitz_gaussian_rows: {
                if (symbol_.empty() || symbol_[0] != 1.0) {
                    throw spectrum_error("Toeplitz symbol must start with s(0) = 1");
                }
                auto cov = std::make_shared<Eigen::MatrixXd>(n_, n_);
                for (int i = 0; i < n_; ++i) {
                    for (int j = 0; j < n_; ++j) {
                        const auto lag = static_cast<std::size_t>(std::abs(i - j));
                        (*cov)(i, j) = lag < symbol_.size() ? symbol_[lag] : 0.0;
                    }
                }
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*cov, Eigen::EigenvaluesOnly);
                if (es.eigenvalues().minCoeff() <= 1e-10) {
                    throw spectrum_error("Toeplitz covariance is not positive definite (min eigenvalue " +
                                         std::to_string(es.eigenvalues().minCoeff()) + ")");
                }
                toeplitz_chol_ = std::make_shared<Eigen::MatrixXd>(Eigen::LLT<Eigen::MatrixXd>(*cov).matrixL());
                toeplitz_cov_ = std::move(cov);
                break;
            }
        }
    }

    Family family_;
    int n_;
    std::vector<double> poly_;
    double lambda_ = 0.0;
    std::vector<double> symbol_;
    std::shared_ptr<const CoordinateLaw> law_;
    std::shared_ptr<const Eigen::MatrixXd> toeplitz_cov_;
    std::shared_ptr<const Eigen::MatrixXd> toeplitz_chol_;
};

namespace detail
{

inline std::vector<double> parse_real_list(const std::string &text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) {
            throw std::invalid_argument("empty entry in list '" + text + "'");
        }
        std::size_t used = 0;
        const std::string trimmed = item.substr(b, e - b + 1);
        const double v = std::stod(trimmed, &used);
        if (used != trimmed.size()) {
            throw std::invalid_argument("bad real '" + trimmed + "'");
        }
        out.push_back(v);
    }
    return out;
}

inline std::map<std::string, std::string> parse_key_values(const std::string &text)
{
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#' || line[b] == ';') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error("expected key=value", lineno, static_cast<int>(b) + 1);
        }
        auto trim = [](std::string s) {
            const auto x = s.find_first_not_of(" \t\r");
            const auto y = s.find_last_not_of(" \t\r");
            return x == std::string::npos ? std::string{} : s.substr(x, y - x + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

} // namespace detail

inline MeasureSpec MeasureSpec::from_config(const std::map<std::string, std::string> &kv)
{
    auto get = [&](const std::string &key) -> const std::string & {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw config_error("measure block is missing '" + key + "'");
        }
        return it->second;
    };
    const Family family = parse_family(get("family"));
    const int n = std::stoi(get("n"));
    switch (family) {
        case Family::gaussian:
            return gaussian(n);
        case Family::uniform_box:
            return uniform_box(n);
        case Family::laplace_product:
            return laplace_product(n);
        case Family::polynomial_pushforward:
            return polynomial_pushforward(n, detail::parse_real_list(get("polynomial")));
        case Family::uniform_logconcave_unconditional: {
            auto it = kv.find("lambda");
            return uniform_logconcave_unconditional(n, it == kv.end() ? 0.25 : std::stod(it->second));
        }
        case Family::toeplitz_gaussian_rows:
            return toeplitz_gaussian_rows(n, detail::parse_real_list(get("symbol")));
    }
    throw config_error("unreachable family");
}

inline MeasureSpec MeasureSpec::from_config(const std::string &text)
{
    return from_config(detail::parse_key_values(text));
}

/// count x n matrix of i.i.d. draws.
inline Eigen::MatrixXd sample(const MeasureSpec &spec, std::size_t count, std::uint64_t seed)
{
    if (count < 1) {
        throw std::invalid_argument("sample count must be >= 1");
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(count), spec.n());
    auto eng = make_engine(seed);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        spec.sample_point(eng, out.row(r));
    }
    return out;
}

/// Coordinate quantile F^{-1}(u) of a product family.
inline double coordinate_quantile(const MeasureSpec &spec, double u)
{
    if (!(u > 0.0 && u < 1.0)) {
        throw std::domain_error("coordinate_quantile needs u in (0, 1)");
    }
    return spec.coordinate_law().quantile(u);
}

inline double coordinate_cdf(const MeasureSpec &spec, double y) { return spec.coordinate_law().cdf(y); }

enum class MomentMethod { analytic, monte_carlo };

struct MomentReport {
    int moment_order = 0;
    double value = 0.0;
    MomentMethod method = MomentMethod::analytic;
    std::optional<double> mc_stderr;
};

namespace detail
{

// Moments of a sum of independent terms from their individual moments (binomial convolution).
inline std::vector<double> convolve_moments(const std::vector<double> &a, const std::vector<double> &b, int kmax)
{
    std::vector<double> out(static_cast<std::size_t>(kmax + 1), 0.0);
    for (int k = 0; k <= kmax; ++k) {
        double binom = 1.0;
        for (int r = 0; r <= k; ++r) {
            out[k] += binom * a[r] * b[k - r];
            binom = binom * (k - r) / (r + 1);
        }
    }
    return out;
}

} // namespace detail

/// E‖X‖₂^m for even m in [2, 24].
inline MomentReport abs_moment(const MeasureSpec &spec, int m, MomentMethod mode = MomentMethod::analytic,
                               std::size_t mc_n = 100000, std::uint64_t seed = 0)
{
    if (m < 2 || m > 24 || m % 2 != 0) {
        throw std::invalid_argument("abs_moment order must be even and in [2, 24]");
    }
    const int k = m / 2;
    const int n = spec.n();
    if (mode == MomentMethod::monte_carlo) {
        const auto pts = sample(spec, mc_n, seed);
        detail::running_stats acc;
        for (Eigen::Index r = 0; r < pts.rows(); ++r) {
            acc.push(std::pow(pts.row(r).squaredNorm(), k));
        }
        return {m, acc.mean()(0, 0), MomentMethod::monte_carlo, acc.stderr_of_mean()(0, 0)};
    }
    if (m == 2) {
        // trace of the declared covariance
        return {m, static_cast<double>(n), MomentMethod::analytic, std::nullopt};
    }
    // ‖X‖² is a sum of independent terms: X_i² (product) or λ_i N_i² (Gaussian, eigenbasis)
    std::vector<std::vector<double>> terms;
    if (spec.is_product()) {
        std::vector<double> sq(static_cast<std::size_t>(k + 1));
        for (int r = 0; r <= k; ++r) {
            sq[r] = spec.coordinate_law().raw_moment(2 * r);
        }
        terms.assign(static_cast<std::size_t>(n), sq);
    } else if (spec.family() == Family::toeplitz_gaussian_rows) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spec.covariance(), Eigen::EigenvaluesOnly);
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
            std::vector<double> t(static_cast<std::size_t>(k + 1));
            for (int r = 0; r <= k; ++r) {
                t[r] = std::pow(es.eigenvalues()[i], r) * detail::double_factorial_odd(2 * r);
            }
            terms.push_back(std::move(t));
        }
    } else {
        throw unsupported_error("no analytic moments for " + to_string(spec.family()) +
                                "; use MomentMethod::monte_carlo");
    }
    std::vector<double> acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) {
        acc = detail::convolve_moments(acc, terms[i], k);
    }
    return {m, acc[static_cast<std::size_t>(k)], MomentMethod::analytic, std::nullopt};
}

/// Var(Y²) = E[Y⁴] - 1 for an isotropic coordinate of a product family.
inline double var_of_square(const MeasureSpec &spec)
{
    if (!spec.is_product()) {
        throw unsupported_error("var_of_square needs a product family");
    }
    const auto &law = spec.coordinate_law();
    const double m2 = law.raw_moment(2);
    return law.raw_moment(4) - m2 * m2;
}

/// Monte Carlo estimate of Var(Y²) from coordinate 0 of mc_n draws.
inline Estimate var_of_square_mc(const MeasureSpec &spec, std::size_t mc_n, std::uint64_t seed)
{
    if (!spec.is_product()) {
        throw unsupported_error("var_of_square needs a product family");
    }
    auto eng = make_engine(seed);
    const auto &law = spec.coordinate_law();
    // sample variance of Y², with a delta-method standard error
    std::vector<double> sq(mc_n);
    double mean = 0.0;
    for (auto &v : sq) {
        const double y = law.sample(eng);
        v = y * y;
        mean += v;
    }
    mean /= static_cast<double>(mc_n);
    detail::running_stats centred;
    for (double v : sq) {
        centred.push((v - mean) * (v - mean));
    }
    return {centred.mean()(0, 0) * static_cast<double>(mc_n) / static_cast<double>(mc_n - 1),
            centred.stderr_of_mean()(0, 0)};
}

} // namespace tclt

#endif
