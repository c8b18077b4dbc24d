#ifndef TCLT_TRANSPORT_HPP
#define TCLT_TRANSPORT_HPP

// Transport maps φ with φ(G) ~ μ for G standard Gaussian on R^n.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "detail/numeric.hpp"
#include "errors.hpp"
#include "estimate.hpp"
#include "measures.hpp"
#include "random.hpp"
#include "symtensor.hpp"

namespace tclt
{

/// Rearrangement maps are evaluated on |x| <= tail_clamp only.
inline constexpr double tail_clamp = 8.0;

// One coordinate x -> φ_i(x) with its derivative.
class CoordinateMap
{
public:
    virtual ~CoordinateMap() = default;
    /// Writes φ(x), φ'(x); returns true when x was clamped to the evaluation window.
    virtual bool eval(double x, double &phi, double &dphi) const = 0;
    /// E[φ(G)^m].
    [[nodiscard]] virtual double raw_moment(int m) const = 0;
};

namespace detail
{

inline bool clamp_tail(double &x)
{
    if (x > tail_clamp) {
        x = tail_clamp;
        return true;
    }
    if (x < -tail_clamp) {
        x = -tail_clamp;
        return true;
    }
    return false;
}

class IdentityCoordinate final : public CoordinateMap
{
public:
    bool eval(double x, double &phi, double &dphi) const override
    {
        phi = x;
        dphi = 1.0;
        return false;
    }
    [[nodiscard]] double raw_moment(int m) const override
    {
        return (m % 2 == 0) ? double_factorial_odd(m) : 0.0;
    }
};

// √3(2Φ(x) - 1)
class UniformCoordinate final : public CoordinateMap
{
public:
    bool eval(double x, double &phi, double &dphi) const override
    {
        const bool c = clamp_tail(x);
        phi = UniformBoxLaw::half_width * std::erf(x / std::numbers::sqrt2);
        dphi = 2.0 * UniformBoxLaw::half_width * normal_pdf(x);
        return c;
    }
    [[nodiscard]] double raw_moment(int m) const override { return law_.raw_moment(m); }

private:
    UniformBoxLaw law_;
};

// b ln(2Φ(x)) for x <= 0, odd extension.
class LaplaceCoordinate final : public CoordinateMap
{
public:
    bool eval(double x, double &phi, double &dphi) const override
    {
        const bool c = clamp_tail(x);
        const double a = -std::abs(x);
        const double cdf = 0.5 * std::erfc(-a / std::numbers::sqrt2);
        const double lower = LaplaceLaw::scale * std::log(2.0 * cdf);
        phi = x <= 0 ? lower : -lower;
        dphi = LaplaceLaw::scale * normal_pdf(a) / cdf;
        return c;
    }
    [[nodiscard]] double raw_moment(int m) const override { return law_.raw_moment(m); }

private:
    LaplaceLaw law_;
};

class PolynomialCoordinate final : public CoordinateMap
{
public:
    explicit PolynomialCoordinate(std::vector<double> coeffs) : law_(std::move(coeffs)) {}
    bool eval(double x, double &phi, double &dphi) const override
    {
        phi = law_.value(x);
        dphi = law_.derivative(x);
        return false;
    }
    [[nodiscard]] double raw_moment(int m) const override { return law_.raw_moment(m); }
    [[nodiscard]] const PolynomialLaw &law() const { return law_; }

private:
    PolynomialLaw law_;
};

// F^{-1}(Φ(x)) with derivative ψ(x) / ρ(φ(x)), for a general coordinate law.
class QuantileCoordinate final : public CoordinateMap
{
public:
    explicit QuantileCoordinate(std::shared_ptr<const CoordinateLaw> law) : law_(std::move(law)) {}
    bool eval(double x, double &phi, double &dphi) const override
    {
        const bool c = clamp_tail(x);
        phi = law_->quantile(normal_cdf(x));
        const double rho = law_->density(phi);
        if (!(rho > 0.0)) {
            throw derivative_singularity_error("target density vanishes at φ(" + std::to_string(x) + ")");
        }
        dphi = normal_pdf(x) / rho;
        return c;
    }
    [[nodiscard]] double raw_moment(int m) const override { return law_->raw_moment(m); }

private:
    std::shared_ptr<const CoordinateLaw> law_;
};

// Rearrangement onto the quartic-tilt law. Node values come from the exact
// quantile and the density-ratio derivative; between nodes φ and φ' are cubic
// Hermite interpolants built from (φ, φ') and (φ', φ'') respectively.
class QuarticCoordinate final : public CoordinateMap
{
public:
    static constexpr int nodes_per_unit = 512;

    explicit QuarticCoordinate(std::shared_ptr<const QuarticTiltLaw> law) : law_(std::move(law))
    {
        const int half = static_cast<int>(tail_clamp) * nodes_per_unit;
        h_ = 1.0 / nodes_per_unit;
        phi_.resize(half + 1);
        d1_.resize(half + 1);
        d2_.resize(half + 1);
        const double s2 = law_->sigma() * law_->sigma();
        const double lam = law_->lambda();
        // node k sits at x = -tail_clamp + k h; the map is odd, so only x <= 0 is stored
        for (int k = 0; k <= half; ++k) {
            const double x = -tail_clamp + k * h_;
            const auto [phi, dphi] = exact(x);
            phi_[k] = phi;
            d1_[k] = dphi;
            // φ'' = φ' (-x + φ' · (-(log ρ)'(φ))),  -(log ρ)'(y) = σ² y + 4 λ σ⁴ y³
            d2_[k] = dphi * (-x + dphi * (s2 * phi + 4.0 * lam * s2 * s2 * phi * phi * phi));
        }
        phi_[half] = 0.0;
    }

    /// Exact φ(x), φ'(x) from the quantile (slow path, used for nodes and tests).
    [[nodiscard]] std::pair<double, double> exact(double x) const
    {
        const double ax = -std::abs(x);
        const double lower = law_->lower_quantile(normal_cdf(ax));
        const double dphi = normal_pdf(ax) / law_->density(lower);
        return {x <= 0 ? lower : -lower, dphi};
    }

    bool eval(double x, double &phi, double &dphi) const override
    {
        const bool c = clamp_tail(x);
        const double ax = -std::abs(x);
        const double pos = (ax + tail_clamp) / h_;
        int k = static_cast<int>(pos);
        k = std::clamp(k, 0, static_cast<int>(phi_.size()) - 2);
        const double t = pos - k;
        const double t2 = t * t;
        const double t3 = t2 * t;
        const double h00 = 2 * t3 - 3 * t2 + 1;
        const double h10 = t3 - 2 * t2 + t;
        const double h01 = -2 * t3 + 3 * t2;
        const double h11 = t3 - t2;
        const double lower = h00 * phi_[k] + h10 * h_ * d1_[k] + h01 * phi_[k + 1] + h11 * h_ * d1_[k + 1];
        dphi = h00 * d1_[k] + h10 * h_ * d2_[k] + h01 * d1_[k + 1] + h11 * h_ * d2_[k + 1];
        phi = x <= 0 ? lower : -lower;
        return c;
    }
    [[nodiscard]] double raw_moment(int m) const override { return law_->raw_moment(m); }

private:
    std::shared_ptr<const QuarticTiltLaw> law_;
    double h_ = 0.0;
    std::vector<double> phi_;
    std::vector<double> d1_;
    std::vector<double> d2_;
};

// Sum over perfect matchings of Π cov(a, b) (Isserlis).
inline double isserlis(const Eigen::MatrixXd &cov, std::vector<int> &idx)
{
    if (idx.empty()) {
        return 1.0;
    }
    if (idx.size() % 2 == 1) {
        return 0.0;
    }
    const int first = idx.back();
    idx.pop_back();
    double total = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const int partner = idx[j];
        const double c = cov(first, partner);
        if (c != 0.0) {
            std::swap(idx[j], idx.back());
            idx.pop_back();
            total += c * isserlis(cov, idx);
            idx.push_back(partner);
            std::swap(idx[j], idx.back());
        }
    }
    idx.push_back(first);
    return total;
}

} // namespace detail

/// A map φ: R^n -> R^n, either coordinatewise (diagonal Jacobian) or linear.
class TransportMap
{
public:
    enum class Shape { coordinatewise, linear };

    static TransportMap coordinatewise(int n, std::shared_ptr<const CoordinateMap> coord, double alpha, double beta,
                                       std::string name)
    {
        if (n < 1) {
            throw dimension_error("transport dimension must be >= 1");
        }
        TransportMap m;
        m.shape_ = Shape::coordinatewise;
        m.n_ = n;
        m.coord_ = std::move(coord);
        m.alpha_ = alpha;
        m.beta_ = beta;
        m.name_ = std::move(name);
        return m;
    }

    static TransportMap linear(Eigen::MatrixXd a, std::string name = "linear")
    {
        if (a.rows() != a.cols() || a.rows() < 1) {
            throw dimension_error("linear transport needs a square matrix");
        }
        TransportMap m;
        m.shape_ = Shape::linear;
        m.n_ = static_cast<int>(a.rows());
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
        m.alpha_ = svd.singularValues()[0];
        m.beta_ = 0.0;
        m.a_ = std::move(a);
        m.cov_ = m.a_ * m.a_.transpose();
        m.name_ = std::move(name);
        return m;
    }

    [[nodiscard]] int n() const noexcept { return n_; }
    [[nodiscard]] Shape shape() const noexcept { return shape_; }
    [[nodiscard]] bool is_linear() const noexcept { return shape_ == Shape::linear; }
    [[nodiscard]] double alpha() const noexcept { return alpha_; }
    [[nodiscard]] double beta() const noexcept { return beta_; }
    [[nodiscard]] double scale() const noexcept { return scale_; }
    [[nodiscard]] const std::string &name() const noexcept { return name_; }
    [[nodiscard]] const std::vector<std::string> &warnings() const noexcept { return warnings_; }
    [[nodiscard]] const Eigen::MatrixXd &matrix() const
    {
        if (!is_linear()) {
            throw unsupported_error("matrix() needs a linear map");
        }
        return a_;
    }

    /// c·φ, with growth constant c·α.
    [[nodiscard]] TransportMap scaled(double c) const
    {
        if (!(c > 0.0)) {
            throw std::invalid_argument("scale must be positive");
        }
        TransportMap m = *this;
        if (is_linear()) {
            m.a_ *= c;
            m.cov_ *= c * c;
        } else {
            m.scale_ *= c;
        }
        m.alpha_ *= c;
        return m;
    }

    void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

    /// Coordinatewise evaluation: φ(x) and the diagonal of Dφ(x). Returns the number of clamped coordinates.
    int evaluate_diagonal(const double *x, double *phi, double *dphi) const
    {
        int clamped = 0;
        for (int i = 0; i < n_; ++i) {
            clamped += coord_->eval(x[i], phi[i], dphi[i]) ? 1 : 0;
            phi[i] *= scale_;
            dphi[i] *= scale_;
        }
        return clamped;
    }

    [[nodiscard]] Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::VectorXd> &x) const
    {
        check_size(x.size());
        if (is_linear()) {
            return a_ * x;
        }
        Eigen::VectorXd phi(n_);
        Eigen::VectorXd d(n_);
        evaluate_diagonal(x.data(), phi.data(), d.data());
        return phi;
    }

    [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::VectorXd> &x) const
    {
        check_size(x.size());
        if (is_linear()) {
            return a_;
        }
        Eigen::VectorXd phi(n_);
        Eigen::VectorXd d(n_);
        evaluate_diagonal(x.data(), phi.data(), d.data());
        return d.asDiagonal();
    }

    /// E[Π_l φ_{idx_l}(G)] computed exactly from one-dimensional moments or Isserlis' formula.
    [[nodiscard]] double product_moment(std::span<const int> idx) const
    {
        if (is_linear()) {
            std::vector<int> v(idx.begin(), idx.end());
            return detail::isserlis(cov_, v);
        }
        std::vector<int> counts(static_cast<std::size_t>(n_), 0);
        for (int j : idx) {
            ++counts[static_cast<std::size_t>(j)];
        }
        double r = 1.0;
        for (int c : counts) {
            if (c > 0) {
                r *= std::pow(scale_, c) * coord_->raw_moment(c);
            }
        }
        return r;
    }

    /// E[φ(G)^{⊗p}] on the given rows.
    [[nodiscard]] Eigen::VectorXd tensor_power_mean(const IndexSet &rows) const
    {
        check_size(rows.space().n);
        Eigen::VectorXd m(rows.size());
        for (Eigen::Index r = 0; r < rows.size(); ++r) {
            m[r] = product_moment(rows[r]);
        }
        return m;
    }

    /// Cov(φ(G)^{⊗p}) on the given rows.
    [[nodiscard]] Eigen::MatrixXd tensor_power_covariance(const IndexSet &rows) const
    {
        check_size(rows.space().n);
        const Eigen::VectorXd mean = tensor_power_mean(rows);
        Eigen::MatrixXd cov(rows.size(), rows.size());
        std::vector<int> joint;
        for (Eigen::Index r = 0; r < rows.size(); ++r) {
            for (Eigen::Index s = r; s < rows.size(); ++s) {
                joint.assign(rows[r].begin(), rows[r].end());
                joint.insert(joint.end(), rows[s].begin(), rows[s].end());
                cov(r, s) = product_moment(joint) - mean[r] * mean[s];
                cov(s, r) = cov(r, s);
            }
        }
        return cov;
    }

private:
    TransportMap() = default;

    void check_size(Eigen::Index len) const
    {
        if (len != n_) {
            throw dimension_error("transport map: expected dimension " + std::to_string(n_) + ", got " +
                                  std::to_string(len));
        }
    }

    Shape shape_ = Shape::coordinatewise;
    int n_ = 0;
    std::shared_ptr<const CoordinateMap> coord_;
    double scale_ = 1.0;
    Eigen::MatrixXd a_;
    Eigen::MatrixXd cov_;
    double alpha_ = 0.0;
    double beta_ = 0.0;
    std::string name_;
    std::vector<std::string> warnings_;
};

inline TransportMap identity_map(int n)
{
    return TransportMap::coordinatewise(n, std::make_shared<detail::IdentityCoordinate>(), 1.0, 0.0, "identity");
}

inline TransportMap linear_map(Eigen::MatrixXd a) { return TransportMap::linear(std::move(a)); }

/// Coordinatewise x -> Q(x). Growth: |Q'(x)| <= C_Q (1 + |x|^{k-1}) with C_Q = Σ_i i|a_i|.
inline TransportMap polynomial_map(std::vector<double> coeffs, int n)
{
    while (coeffs.size() > 1 && coeffs.back() == 0.0) {
        coeffs.pop_back();
    }
    if (coeffs.size() < 2) {
        throw degenerate_error("polynomial map needs degree >= 1");
    }
    const int k = static_cast<int>(coeffs.size()) - 1;
    double cq = 0.0;
    for (int i = 1; i <= k; ++i) {
        cq += i * std::abs(coeffs[static_cast<std::size_t>(i)]);
    }
    auto coord = std::make_shared<detail::PolynomialCoordinate>(coeffs);
    const double mean = coord->raw_moment(1);
    const double var = coord->raw_moment(2) - mean * mean;
    auto m = TransportMap::coordinatewise(n, coord, cq, k - 1, "polynomial");
    if (std::abs(mean) > 1e-12 || std::abs(var - 1.0) > 1e-12) {
        m.add_warning("pushforward of Q is not isotropic: mean " + std::to_string(mean) + ", variance " +
                      std::to_string(var));
    }
    return m;
}

/// φ_i = F^{-1} ∘ Φ for every coordinate of a product measure.
inline TransportMap monotone_rearrangement(const MeasureSpec &spec)
{
    if (!spec.is_product()) {
        throw unsupported_error("monotone rearrangement needs a product family, got " + to_string(spec.family()));
    }
    const int n = spec.n();
    switch (spec.family()) {
        case Family::gaussian:
            return identity_map(n);
        case Family::uniform_box:
            return TransportMap::coordinatewise(n, std::make_shared<detail::UniformCoordinate>(),
                                                2.0 * detail::UniformBoxLaw::half_width * detail::inv_sqrt_2pi, 0.0,
                                                "uniform_box");
        case Family::laplace_product:
            // ψ(x)/Φ(-|x|) <= 1 + |x| (Mills ratio)
            return TransportMap::coordinatewise(n, std::make_shared<detail::LaplaceCoordinate>(),
                                                detail::LaplaceLaw::scale, 1.0, "laplace_product");
        case Family::uniform_logconcave_unconditional: {
            auto law = std::make_shared<detail::QuarticTiltLaw>(spec.lambda());
            const double sigma = law->sigma();
            // σ²-uniform log-concavity bounds the Brenier map's Lipschitz constant by 1/σ
            return TransportMap::coordinatewise(n, std::make_shared<detail::QuarticCoordinate>(std::move(law)),
                                                1.0 / sigma, 0.0, "uniform_logconcave_unconditional");
        }
        case Family::polynomial_pushforward: {
            auto law = std::make_shared<detail::PolynomialLaw>(spec.polynomial());
            auto m = TransportMap::coordinatewise(n, std::make_shared<detail::QuantileCoordinate>(std::move(law)),
                                                  std::numeric_limits<double>::infinity(), 0.0,
                                                  "polynomial_rearrangement");
            m.add_warning("growth constants of the rearrangement are not certified");
            return m;
        }
        case Family::toeplitz_gaussian_rows:
            break;
    }
    throw unsupported_error("no rearrangement for " + to_string(spec.family()));
}

/// The map used to build kernels for a measure: rearrangement, Q itself, or the Cholesky factor.
inline TransportMap default_transport(const MeasureSpec &spec)
{
    if (spec.family() == Family::polynomial_pushforward) {
        return polynomial_map(spec.polynomial(), spec.n());
    }
    if (spec.family() == Family::toeplitz_gaussian_rows) {
        return TransportMap::linear(spec.toeplitz_factor(), "toeplitz_cholesky");
    }
    return monotone_rearrangement(spec);
}

struct GrowthBoundReport {
    Estimate eighth_moment;
    double lemma_bound = 0.0;
    std::string method;
    double alpha = 0.0;
    double beta = 0.0;
    std::size_t clamp_count = 0;
    std::size_t samples = 0;
};

/// C_β α⁸ log(n)^{4β} with C_β = 256 (4β)^{4β}; log n is floored at 1.
inline double growth_lemma_bound(double alpha, double beta, int n)
{
    const double c_beta = 256.0 * (beta > 0 ? std::pow(4.0 * beta, 4.0 * beta) : 1.0);
    const double logn = std::max(1.0, std::log(static_cast<double>(n)));
    return c_beta * std::pow(alpha, 8) * std::pow(logn, 4.0 * beta);
}

/// Monte Carlo estimate of E‖Dφ(G)‖_op⁸ (exact for linear maps).
inline GrowthBoundReport opnorm_eighth_moment(const TransportMap &map, std::size_t mc_n, std::uint64_t seed,
                                              int workers = 1)
{
    if (mc_n < 1000) {
        throw std::invalid_argument("opnorm_eighth_moment needs mc_n >= 1000");
    }
    GrowthBoundReport rep;
    rep.alpha = map.alpha();
    rep.beta = map.beta();
    rep.lemma_bound = growth_lemma_bound(map.alpha(), map.beta(), map.n());
    if (map.is_linear()) {
        rep.eighth_moment = {std::pow(map.alpha(), 8), 0.0};
        rep.method = "analytic";
        return rep;
    }
    const int n = map.n();
    std::atomic<std::size_t> clamps{0};
    auto stats = detail::chunked_stats(mc_n, workers, [&](std::size_t i) {
        auto eng = make_engine(derive_seed(seed, i));
        std::normal_distribution<double> normal;
        std::vector<double> x(n);
        std::vector<double> phi(n);
        std::vector<double> d(n);
        for (auto &v : x) {
            v = normal(eng);
        }
        clamps += static_cast<std::size_t>(map.evaluate_diagonal(x.data(), phi.data(), d.data()));
        double mx = 0.0;
        for (double v : d) {
            mx = std::max(mx, std::abs(v));
        }
        return std::pow(mx, 8);
    });
    rep.eighth_moment = {stats.mean()(0, 0), stats.stderr_of_mean()(0, 0)};
    rep.method = "monte_carlo";
    rep.clamp_count = clamps.load();
    rep.samples = mc_n;
    return rep;
}

/// max over sampled x of ‖Dφ(x)‖_op / (α(1 + ‖x‖_∞^β)); at most 1 when the declared growth bound holds.
inline double growth_ratio_max(const TransportMap &map, std::size_t count, std::uint64_t seed)
{
    const int n = map.n();
    auto eng = make_engine(seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd x(n);
    double worst = 0.0;
    for (std::size_t s = 0; s < count; ++s) {
        for (int i = 0; i < n; ++i) {
            x[i] = normal(eng);
        }
        double op;
        if (map.is_linear()) {
            op = map.alpha();
        } else {
            Eigen::VectorXd phi(n);
            Eigen::VectorXd d(n);
            map.evaluate_diagonal(x.data(), phi.data(), d.data());
            op = d.cwiseAbs().maxCoeff();
        }
        const double env = map.alpha() * (1.0 + std::pow(x.cwiseAbs().maxCoeff(), map.beta()));
        worst = std::max(worst, op / env);
    }
    return worst;
}

} // namespace tclt

#endif
