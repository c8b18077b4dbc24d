#ifndef TCLT_WISHART_HPP
#define TCLT_WISHART_HPP

// Wishart tensors Σ_i α_i (X_i^{⊗p} - E[X^{⊗p}]) / ‖α‖₂ and their covariance structure.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "detail/numeric.hpp"
#include "errors.hpp"
#include "measures.hpp"
#include "random.hpp"
#include "symtensor.hpp"
#include "transport.hpp"

namespace tclt
{

struct WishartConfig {
    MeasureSpec spec;
    int d = 1;
    int p = 1;
    IndexKind kind = IndexKind::principal;
    std::optional<std::vector<double>> weights; // absent: homogeneous

    WishartConfig(MeasureSpec s, int d_, int p_, IndexKind k = IndexKind::principal,
                  std::optional<std::vector<double>> w = std::nullopt)
        : spec(std::move(s)), d(d_), p(p_), kind(k), weights(std::move(w))
    {
        if (d < 1) {
            throw dimension_error("number of summands d must be >= 1");
        }
        if (weights) {
            if (static_cast<int>(weights->size()) != d) {
                throw dimension_error("weights length " + std::to_string(weights->size()) + " != d = " +
                                      std::to_string(d));
            }
            for (double a : *weights) {
                if (!(a > 0.0)) {
                    throw std::invalid_argument("weights must be positive");
                }
            }
        }
    }

    [[nodiscard]] int n() const { return spec.n(); }
    [[nodiscard]] TensorSpace space() const { return {spec.n(), p}; }
    [[nodiscard]] Eigen::Index dim() const { return static_cast<Eigen::Index>(space().dim(kind)); }

    /// ‖α‖₂ (√d when homogeneous).
    [[nodiscard]] double normalization() const
    {
        if (!weights) {
            return std::sqrt(static_cast<double>(d));
        }
        double s = 0.0;
        for (double a : *weights) {
            s += a * a;
        }
        return std::sqrt(s);
    }

    /// ‖α‖₄⁴ / ‖α‖₂⁴ (1/d when homogeneous).
    [[nodiscard]] double weight_ratio() const
    {
        if (!weights) {
            return 1.0 / d;
        }
        double s2 = 0.0;
        double s4 = 0.0;
        for (double a : *weights) {
            s2 += a * a;
            s4 += a * a * a * a;
        }
        return s4 / (s2 * s2);
    }
};

/// E[X^{⊗p}] on the configured rows, exact.
inline Eigen::VectorXd tensor_power_mean(const MeasureSpec &spec, const IndexSet &rows)
{
    return default_transport(spec).tensor_power_mean(rows);
}

/// reps x D draws; replica r uses the stream derive_seed(seed, r).
inline Eigen::MatrixXd wishart_sample(const WishartConfig &cfg, std::size_t reps, std::uint64_t seed, int workers = 1)
{
    if (reps < 1) {
        throw std::invalid_argument("reps must be >= 1");
    }
    const IndexSet rows(cfg.space(), cfg.kind);
    const Eigen::VectorXd center = tensor_power_mean(cfg.spec, rows);
    const Eigen::Index dim = rows.size();
    const int n = cfg.n();
    const double norm = cfg.normalization();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(reps), dim);
    detail::parallel_for(reps, workers, [&](std::size_t r) {
        auto eng = make_engine(derive_seed(seed, r));
        Eigen::RowVectorXd x(n);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
        for (int i = 0; i < cfg.d; ++i) {
            cfg.spec.sample_point(eng, x);
            const double a = cfg.weights ? (*cfg.weights)[static_cast<std::size_t>(i)] : 1.0;
            for (Eigen::Index k = 0; k < dim; ++k) {
                double prod = 1.0;
                for (int j : rows[k]) {
                    prod *= x[j];
                }
                acc[k] += a * (prod - center[k]);
            }
        }
        out.row(static_cast<Eigen::Index>(r)) = (acc / norm).transpose();
    });
    return out;
}

struct CovarianceModel {
    Eigen::Index dim = 0;
    bool diagonal = false;
    Eigen::VectorXd diag;  // set when diagonal
    Eigen::MatrixXd dense; // always set
    double min_eigenvalue = 0.0;
    Eigen::MatrixXd whitener; // Σ^{-1/2}
    std::string method;       // "analytic" or "empirical"

    /// ‖Σ^{-1/2}‖_op = 1/√λ_min.
    [[nodiscard]] double whitener_opnorm() const { return 1.0 / std::sqrt(min_eigenvalue); }

    [[nodiscard]] bool is_identity(double tol = 0.0) const
    {
        return dense.isIdentity(tol) || (dense - Eigen::MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff() <= tol;
    }
};

namespace detail
{

inline constexpr double whitening_floor = 1e-8;

inline CovarianceModel finish_model(Eigen::MatrixXd cov, std::string method)
{
    CovarianceModel m;
    m.dim = cov.rows();
    m.method = std::move(method);
    const Eigen::MatrixXd off = cov - Eigen::MatrixXd(cov.diagonal().asDiagonal());
    m.diagonal = off.cwiseAbs().maxCoeff() == 0.0;
    if (m.diagonal) {
        m.diag = cov.diagonal();
        m.min_eigenvalue = m.diag.minCoeff();
        if (m.min_eigenvalue < whitening_floor) {
            throw whitening_error("covariance min eigenvalue " + std::to_string(m.min_eigenvalue) + " < 1e-8");
        }
        m.whitener = m.diag.cwiseSqrt().cwiseInverse().asDiagonal();
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        m.min_eigenvalue = es.eigenvalues().minCoeff();
        if (m.min_eigenvalue < whitening_floor) {
            throw whitening_error("covariance min eigenvalue " + std::to_string(m.min_eigenvalue) + " < 1e-8");
        }
        m.whitener = es.operatorInverseSqrt();
    }
    m.dense = std::move(cov);
    return m;
}

} // namespace detail

/// Model for a given symmetric positive definite covariance.
inline CovarianceModel covariance_model_from(const Eigen::MatrixXd &cov)
{
    if (cov.rows() != cov.cols()) {
        throw dimension_error("covariance must be square");
    }
    return detail::finish_model(cov, "given");
}

/// Exact covariance of one summand's tensor power (equal to the covariance of the normalized sum).
inline CovarianceModel covariance_model(const WishartConfig &cfg)
{
    const IndexSet rows(cfg.space(), cfg.kind);
    const auto map = default_transport(cfg.spec);
    return detail::finish_model(map.tensor_power_covariance(rows), "analytic");
}

/// Sample covariance from `reps` Wishart draws (reps >= 50 D), shrunk toward its diagonal by λ = 10/reps.
inline CovarianceModel covariance_model_empirical(const WishartConfig &cfg, std::size_t reps, std::uint64_t seed,
                                                  int workers = 1)
{
    const auto dim = static_cast<std::size_t>(cfg.dim());
    if (reps < 50 * dim) {
        throw std::invalid_argument("empirical covariance needs reps >= 50 D = " + std::to_string(50 * dim));
    }
    const Eigen::MatrixXd w = wishart_sample(cfg, reps, seed, workers);
    const Eigen::RowVectorXd mean = w.colwise().mean();
    const Eigen::MatrixXd centred = w.rowwise() - mean;
    Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(reps - 1);
    const double lambda = 10.0 / static_cast<double>(reps);
    Eigen::MatrixXd shrunk = (1.0 - lambda) * cov;
    shrunk.diagonal() = cov.diagonal();
    return detail::finish_model(shrunk, "empirical");
}

/// Applies Σ^{-1/2} to every row.
inline Eigen::MatrixXd whiten(const Eigen::MatrixXd &samples, const CovarianceModel &model)
{
    if (samples.cols() != model.dim) {
        throw dimension_error("whiten: samples have " + std::to_string(samples.cols()) + " columns, model has D = " +
                              std::to_string(model.dim));
    }
    if (model.diagonal) {
        return samples * model.whitener;
    }
    return samples * model.whitener.transpose();
}

struct ToeplitzGramReport {
    Eigen::VectorXd eigenvalues; // spectrum α of Σ_s (d x d)
    double trace_ratio = 0.0;    // Tr(Σ⁴)/Tr(Σ²)²
    double eigen_ratio = 0.0;    // ‖α‖₄⁴/‖α‖₂⁴
    double rescale = 0.0;        // √d/‖α‖₂: multiplies gram samples into the weighted-sum normalization
};

/// d x d Toeplitz matrix from a symbol, checked positive definite.
inline Eigen::MatrixXd toeplitz_matrix(const std::vector<double> &symbol, int d)
{
    return MeasureSpec::toeplitz_gaussian_rows(d, symbol).covariance();
}

inline ToeplitzGramReport toeplitz_weights(const std::vector<double> &symbol, int d)
{
    const Eigen::MatrixXd sigma = toeplitz_matrix(symbol, d);
    ToeplitzGramReport rep;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
    rep.eigenvalues = es.eigenvalues();
    const Eigen::MatrixXd s2 = sigma * sigma;
    const double t2 = s2.trace();
    rep.trace_ratio = (s2 * s2).trace() / (t2 * t2);
    const double a2 = rep.eigenvalues.squaredNorm();
    rep.eigen_ratio = rep.eigenvalues.array().pow(4).sum() / (a2 * a2);
    rep.rescale = std::sqrt(static_cast<double>(d)) / std::sqrt(a2);
    return rep;
}

/// Samples of (1/√d)(X Xᵀ - d Id), X an n x d matrix with i.i.d. N(0, Σ_s) rows.
/// Coordinates follow the p = 2 principal order, or the symmetric order when the diagonal is included.
inline std::pair<Eigen::MatrixXd, ToeplitzGramReport> toeplitz_gram(const std::vector<double> &symbol, int n, int d,
                                                                    std::size_t reps, std::uint64_t seed,
                                                                    bool include_diagonal = false, int workers = 1)
{
    const auto row_law = MeasureSpec::toeplitz_gaussian_rows(d, symbol);
    auto rep = toeplitz_weights(symbol, d);
    const IndexSet rows(TensorSpace(n, 2), include_diagonal ? IndexKind::symmetric : IndexKind::principal);
    const double sd = std::sqrt(static_cast<double>(d));
    Eigen::MatrixXd out(static_cast<Eigen::Index>(reps), rows.size());
    detail::parallel_for(reps, workers, [&](std::size_t r) {
        auto eng = make_engine(derive_seed(seed, r));
        Eigen::MatrixXd x(n, d);
        for (int i = 0; i < n; ++i) {
            row_law.sample_point(eng, x.row(i));
        }
        const Eigen::MatrixXd gram = x * x.transpose();
        for (Eigen::Index k = 0; k < rows.size(); ++k) {
            const auto idx = rows[k];
            const double v = gram(idx[0], idx[1]) - (idx[0] == idx[1] ? d : 0.0);
            out(static_cast<Eigen::Index>(r), k) = v / sd;
        }
    });
    return {out, rep};
}

/// Binary layout: 16-byte header "WSHT", u32 reps, u32 D, u32 reserved (0), then reps*D little-endian f64
/// in row-major order.
inline void write_binary(std::ostream &os, const Eigen::MatrixXd &samples)
{
    auto put_u32 = [&](std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) {
            b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffU);
        }
        os.write(reinterpret_cast<const char *>(b), 4);
    };
    os.write("WSHT", 4);
    put_u32(static_cast<std::uint32_t>(samples.rows()));
    put_u32(static_cast<std::uint32_t>(samples.cols()));
    put_u32(0);
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
        for (Eigen::Index c = 0; c < samples.cols(); ++c) {
            std::uint64_t bits;
            const double v = samples(r, c);
            std::memcpy(&bits, &v, sizeof bits);
            unsigned char b[8];
            for (int i = 0; i < 8; ++i) {
                b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffU);
            }
            os.write(reinterpret_cast<const char *>(b), 8);
        }
    }
}

inline Eigen::MatrixXd read_binary(std::istream &is)
{
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "WSHT", 4) != 0) {
        throw std::runtime_error("not a WSHT sample file");
    }
    auto get_u32 = [&]() {
        unsigned char b[4];
        if (!is.read(reinterpret_cast<char *>(b), 4)) {
            throw std::runtime_error("truncated WSHT header");
        }
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        }
        return v;
    };
    const auto reps = get_u32();
    const auto dim = get_u32();
    (void)get_u32();
    Eigen::MatrixXd out(reps, dim);
    for (std::uint32_t r = 0; r < reps; ++r) {
        for (std::uint32_t c = 0; c < dim; ++c) {
            unsigned char b[8];
            if (!is.read(reinterpret_cast<char *>(b), 8)) {
                throw std::runtime_error("truncated WSHT payload");
            }
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) {
                bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
            }
            double v;
            std::memcpy(&v, &bits, sizeof v);
            out(r, c) = v;
        }
    }
    return out;
}

/// CSV with a header row of 1-based multi-indices, e.g. "(1,2)".
inline void write_csv(std::ostream &os, const Eigen::MatrixXd &samples, const IndexSet &rows)
{
    if (samples.cols() != rows.size()) {
        throw dimension_error("write_csv: column count differs from index set size");
    }
    for (Eigen::Index k = 0; k < rows.size(); ++k) {
        const auto idx = rows[k];
        os << (k ? "," : "") << '"' << to_string(MultiIndex(idx.begin(), idx.end())) << '"';
    }
    os << '\n';
    char buf[32];
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
        for (Eigen::Index c = 0; c < samples.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", samples(r, c));
            os << (c ? "," : "") << buf;
        }
        os << '\n';
    }
}

} // namespace tclt

#endif
