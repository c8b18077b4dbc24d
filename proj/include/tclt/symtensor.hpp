#ifndef TCLT_SYMTENSOR_HPP
#define TCLT_SYMTENSOR_HPP

// Index bookkeeping and linear algebra for tensor powers of vectors in R^n.
//
// Coordinates of (R^n)^{⊗p} are labelled by multi-indices (j_1, ..., j_p), stored
// 0-based. Three index sets are used:
//   full       all n^p tuples
//   symmetric  nondecreasing tuples, the monomial basis of Sym^p(R^n)
//   principal  strictly increasing tuples, the distinct-coordinate monomials
// Every set is listed in lexicographic order; for the full set this is the
// Kronecker order, so row r of a full Jacobian matches the r-th entry of
// v ⊗ v ⊗ ... ⊗ v. No symmetrization factor is ever applied: a symmetric
// coordinate is the plain monomial prod_i v_{j_i}.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace tclt
{

enum class IndexKind { full, symmetric, principal };

inline std::string to_string(IndexKind kind)
{
    switch (kind) {
        case IndexKind::full:
            return "full";
        case IndexKind::symmetric:
            return "symmetric";
        case IndexKind::principal:
            return "principal";
    }
    return "?";
}

inline IndexKind parse_index_kind(const std::string &text)
{
    if (text == "full") {
        return IndexKind::full;
    }
    if (text == "symmetric") {
        return IndexKind::symmetric;
    }
    if (text == "principal") {
        return IndexKind::principal;
    }
    throw std::invalid_argument("unknown index kind '" + text + "'");
}

using MultiIndex = std::vector<int>;

namespace detail
{

inline std::uint64_t binomial(int n, int k)
{
    if (k < 0 || n < 0 || k > n) {
        return 0;
    }
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) {
        r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    }
    return r;
}

inline std::uint64_t ipow(std::uint64_t base, int e)
{
    std::uint64_t r = 1;
    for (int i = 0; i < e; ++i) {
        r *= base;
    }
    return r;
}

} // namespace detail

struct TensorSpace {
    int n = 1;
    int p = 1;

    TensorSpace() = default;
    TensorSpace(int n_, int p_) : n(n_), p(p_)
    {
        if (n < 1 || p < 1) {
            throw dimension_error("tensor space needs n >= 1 and p >= 1");
        }
    }

    [[nodiscard]] std::uint64_t dim_full() const { return detail::ipow(static_cast<std::uint64_t>(n), p); }
    [[nodiscard]] std::uint64_t dim_symmetric() const { return detail::binomial(n + p - 1, p); }
    [[nodiscard]] std::uint64_t dim_principal() const { return detail::binomial(n, p); }

    [[nodiscard]] std::uint64_t dim(IndexKind kind) const
    {
        switch (kind) {
            case IndexKind::full:
                return dim_full();
            case IndexKind::symmetric:
                return dim_symmetric();
            case IndexKind::principal:
                return dim_principal();
        }
        return 0;
    }

    friend bool operator==(const TensorSpace &, const TensorSpace &) = default;
};

/// Enumerates the multi-indices of `kind` in lexicographic order.
inline std::vector<MultiIndex> enumerate_indices(const TensorSpace &space, IndexKind kind)
{
    const int n = space.n;
    const int p = space.p;
    if (kind == IndexKind::principal && p > n) {
        throw empty_space_error("principal tensors need p <= n (got n=" + std::to_string(n) + ", p=" +
                                std::to_string(p) + ")");
    }
    std::vector<MultiIndex> out;
    out.reserve(static_cast<std::size_t>(space.dim(kind)));
    MultiIndex idx(p);
    // first element of the set
    for (int i = 0; i < p; ++i) {
        idx[i] = kind == IndexKind::principal ? i : 0;
    }
    for (;;) {
        out.push_back(idx);
        // advance: find rightmost position that can be incremented
        int pos = p - 1;
        for (; pos >= 0; --pos) {
            const int limit = kind == IndexKind::principal ? n - p + pos : n - 1;
            if (idx[pos] < limit) {
                break;
            }
        }
        if (pos < 0) {
            break;
        }
        ++idx[pos];
        for (int i = pos + 1; i < p; ++i) {
            switch (kind) {
                case IndexKind::full:
                    idx[i] = 0;
                    break;
                case IndexKind::symmetric:
                    idx[i] = idx[pos];
                    break;
                case IndexKind::principal:
                    idx[i] = idx[i - 1] + 1;
                    break;
            }
        }
    }
    return out;
}

/// Position of `idx` in enumerate_indices(space, kind), via binomial counting.
inline std::uint64_t index_rank(const TensorSpace &space, IndexKind kind, std::span<const int> idx)
{
    const int n = space.n;
    const int p = space.p;
    if (static_cast<int>(idx.size()) != p) {
        throw dimension_error("multi-index length does not match p");
    }
    std::uint64_t rank = 0;
    switch (kind) {
        case IndexKind::full:
            for (int i = 0; i < p; ++i) {
                rank = rank * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(idx[i]);
            }
            return rank;
        case IndexKind::symmetric: {
            int prev = 0;
            for (int i = 0; i < p; ++i) {
                const int rest = p - 1 - i;
                for (int v = prev; v < idx[i]; ++v) {
                    // nondecreasing tails of length `rest` with values in [v, n-1]
                    rank += detail::binomial(n - v + rest - 1, rest);
                }
                prev = idx[i];
            }
            return rank;
        }
        case IndexKind::principal: {
            int prev = -1;
            for (int i = 0; i < p; ++i) {
                const int rest = p - 1 - i;
                for (int v = prev + 1; v < idx[i]; ++v) {
                    rank += detail::binomial(n - 1 - v, rest);
                }
                prev = idx[i];
            }
            return rank;
        }
    }
    return rank;
}

/// Inverse of index_rank.
inline MultiIndex index_at(const TensorSpace &space, IndexKind kind, std::uint64_t rank)
{
    const int n = space.n;
    const int p = space.p;
    if (rank >= space.dim(kind)) {
        throw dimension_error("rank out of range");
    }
    MultiIndex idx(p);
    switch (kind) {
        case IndexKind::full:
            for (int i = p - 1; i >= 0; --i) {
                idx[i] = static_cast<int>(rank % static_cast<std::uint64_t>(n));
                rank /= static_cast<std::uint64_t>(n);
            }
            break;
        case IndexKind::symmetric: {
            int v = 0;
            for (int i = 0; i < p; ++i) {
                const int rest = p - 1 - i;
                for (;; ++v) {
                    const std::uint64_t block = detail::binomial(n - v + rest - 1, rest);
                    if (rank < block) {
                        break;
                    }
                    rank -= block;
                }
                idx[i] = v;
            }
            break;
        }
        case IndexKind::principal: {
            int v = 0;
            for (int i = 0; i < p; ++i) {
                const int rest = p - 1 - i;
                for (;; ++v) {
                    const std::uint64_t block = detail::binomial(n - 1 - v, rest);
                    if (rank < block) {
                        break;
                    }
                    rank -= block;
                }
                idx[i] = v;
                ++v;
            }
            break;
        }
    }
    return idx;
}

inline std::string to_string(const MultiIndex &idx)
{
    std::string s = "(";
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i > 0) {
            s += ",";
        }
        s += std::to_string(idx[i] + 1);
    }
    return s + ")";
}

/// Precomputed index list for one (space, kind); cheap to share across threads.
class IndexSet
{
public:
    IndexSet(const TensorSpace &space, IndexKind kind) : space_(space), kind_(kind)
    {
        const auto list = enumerate_indices(space, kind);
        flat_.reserve(list.size() * static_cast<std::size_t>(space.p));
        for (const auto &idx : list) {
            flat_.insert(flat_.end(), idx.begin(), idx.end());
        }
    }

    [[nodiscard]] const TensorSpace &space() const noexcept { return space_; }
    [[nodiscard]] IndexKind kind() const noexcept { return kind_; }
    [[nodiscard]] Eigen::Index size() const noexcept
    {
        return static_cast<Eigen::Index>(flat_.size() / static_cast<std::size_t>(space_.p));
    }
    [[nodiscard]] std::span<const int> operator[](Eigen::Index r) const noexcept
    {
        return {flat_.data() + r * space_.p, static_cast<std::size_t>(space_.p)};
    }

private:
    TensorSpace space_;
    IndexKind kind_;
    std::vector<int> flat_;
};

inline Eigen::VectorXd tensor_power(const Eigen::Ref<const Eigen::VectorXd> &v, const IndexSet &rows)
{
    if (v.size() != rows.space().n) {
        throw dimension_error("tensor_power: vector length " + std::to_string(v.size()) + " != n = " +
                              std::to_string(rows.space().n));
    }
    Eigen::VectorXd out(rows.size());
    for (Eigen::Index r = 0; r < rows.size(); ++r) {
        double prod = 1.0;
        for (int j : rows[r]) {
            prod *= v[j];
        }
        out[r] = prod;
    }
    return out;
}

inline Eigen::VectorXd tensor_power(const Eigen::Ref<const Eigen::VectorXd> &v, const TensorSpace &space,
                                    IndexKind kind)
{
    return tensor_power(v, IndexSet(space, kind));
}

namespace detail
{

// prod_{l != i} phi[idx[l]] for all i, via prefix/suffix products (no division).
inline void leave_one_out_products(std::span<const int> idx, const double *phi, double *out)
{
    const auto p = idx.size();
    double prefix = 1.0;
    for (std::size_t i = 0; i < p; ++i) {
        out[i] = prefix;
        prefix *= phi[idx[i]];
    }
    double suffix = 1.0;
    for (std::size_t i = p; i-- > 0;) {
        out[i] *= suffix;
        suffix *= phi[idx[i]];
    }
}

} // namespace detail

/// Jacobian of x -> φ(x)^{⊗p} on the rows of `rows`, from φ(x) and Dφ(x).
/// Kronecker-Leibniz rule: D(φ^{⊗p}) = Σ_i φ^{⊗(i-1)} ⊗ Dφ ⊗ φ^{⊗(p-i)}.
inline Eigen::MatrixXd tensor_power_jacobian(const Eigen::Ref<const Eigen::VectorXd> &phi,
                                             const Eigen::Ref<const Eigen::MatrixXd> &dphi, const IndexSet &rows)
{
    const int n = rows.space().n;
    const int p = rows.space().p;
    if (phi.size() != n || dphi.rows() != n) {
        throw dimension_error("tensor_power_jacobian: expected φ of length n and Dφ with n rows");
    }
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(rows.size(), dphi.cols());
    std::vector<double> loo(p);
    for (Eigen::Index r = 0; r < rows.size(); ++r) {
        const auto idx = rows[r];
        detail::leave_one_out_products(idx, phi.data(), loo.data());
        for (int i = 0; i < p; ++i) {
            jac.row(r) += loo[i] * dphi.row(idx[i]);
        }
    }
    return jac;
}

/// Same as above for a diagonal Dφ = diag(dphi_diag), written into `jac` (rows.size() x n).
inline void tensor_power_jacobian_diagonal(const double *phi, const double *dphi_diag, const IndexSet &rows,
                                           Eigen::Ref<Eigen::MatrixXd> jac, double scale = 1.0)
{
    const int p = rows.space().p;
    double loo[16];
    std::vector<double> loo_heap;
    double *buf = loo;
    if (p > 16) {
        loo_heap.resize(p);
        buf = loo_heap.data();
    }
    for (Eigen::Index r = 0; r < rows.size(); ++r) {
        const auto idx = rows[r];
        detail::leave_one_out_products(idx, phi, buf);
        for (int i = 0; i < p; ++i) {
            jac(r, idx[i]) += scale * buf[i] * dphi_diag[idx[i]];
        }
    }
}

inline Eigen::MatrixXd tensor_power_jacobian(const Eigen::Ref<const Eigen::VectorXd> &phi,
                                             const Eigen::Ref<const Eigen::MatrixXd> &dphi, const TensorSpace &space,
                                             IndexKind kind)
{
    return tensor_power_jacobian(phi, dphi, IndexSet(space, kind));
}

/// Upper bound p ‖φ‖₂^{p-1} ‖Dφ‖_op on ‖D(φ^{⊗p})‖_op: each Leibniz term is a
/// Kronecker product whose operator norm is the product of the factors' norms.
inline double kron_opnorm_bound(double phi_norm, double dphi_opnorm, int p)
{
    return static_cast<double>(p) * std::pow(phi_norm, p - 1) * dphi_opnorm;
}

} // namespace tclt

#endif
