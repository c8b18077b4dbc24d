#ifndef TCLT_DETAIL_NUMERIC_HPP
#define TCLT_DETAIL_NUMERIC_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <numbers>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace tclt::detail
{

inline constexpr double inv_sqrt_2pi = 0.398942280401432677939946059934;

inline double normal_pdf(double x) noexcept { return inv_sqrt_2pi * std::exp(-0.5 * x * x); }

inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Gauss-Legendre rule on [a, b], Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int count, double a, double b)
{
    std::vector<double> nodes(count);
    std::vector<double> weights(count);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const int m = (count + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = 0.0;
            for (int j = 1; j <= count; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
            }
            dp = count * (z * p0 - p1) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p0 / dp;
            if (std::abs(z - z1) < 1e-15) {
                break;
            }
        }
        nodes[i] = mid - half * z;
        nodes[count - 1 - i] = mid + half * z;
        weights[i] = 2.0 * half / ((1.0 - z * z) * dp * dp);
        weights[count - 1 - i] = weights[i];
    }
    return {nodes, weights};
}

/// Composite Gauss-Legendre integral of f over [a, b].
template <typename F>
double integrate(F &&f, double a, double b, int panels = 64, int order = 16)
{
    static thread_local std::vector<double> ref_nodes;
    static thread_local std::vector<double> ref_weights;
    if (static_cast<int>(ref_nodes.size()) != order) {
        std::tie(ref_nodes, ref_weights) = gauss_legendre(order, -1.0, 1.0);
    }
    const double h = (b - a) / panels;
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
        const double mid = a + (k + 0.5) * h;
        double panel = 0.0;
        for (int j = 0; j < order; ++j) {
            panel += ref_weights[j] * f(mid + 0.5 * h * ref_nodes[j]);
        }
        total += 0.5 * h * panel;
    }
    return total;
}

inline double pairwise_sum(const double *x, std::size_t n)
{
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += x[i];
        }
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

// Elementwise running mean/variance over matrix-valued observations (Welford, Chan merge).
class running_stats
{
public:
    running_stats() = default;
    running_stats(Eigen::Index rows, Eigen::Index cols)
        : mean_(Eigen::MatrixXd::Zero(rows, cols)), m2_(Eigen::MatrixXd::Zero(rows, cols))
    {
    }

    void push(const Eigen::MatrixXd &x)
    {
        if (count_ == 0 && mean_.size() == 0) {
            mean_ = Eigen::MatrixXd::Zero(x.rows(), x.cols());
            m2_ = Eigen::MatrixXd::Zero(x.rows(), x.cols());
        }
        ++count_;
        const Eigen::MatrixXd delta = x - mean_;
        mean_ += delta / static_cast<double>(count_);
        m2_.array() += delta.array() * (x - mean_).array();
    }

    void push(double x) { push(Eigen::MatrixXd::Constant(1, 1, x)); }

    void merge(const running_stats &other)
    {
        if (other.count_ == 0) {
            return;
        }
        if (count_ == 0) {
            *this = other;
            return;
        }
        const double na = static_cast<double>(count_);
        const double nb = static_cast<double>(other.count_);
        const double n = na + nb;
        const Eigen::MatrixXd delta = other.mean_ - mean_;
        mean_ += delta * (nb / n);
        m2_ += other.m2_ + delta.cwiseProduct(delta) * (na * nb / n);
        count_ += other.count_;
    }

    [[nodiscard]] std::size_t count() const noexcept { return count_; }
    [[nodiscard]] const Eigen::MatrixXd &mean() const noexcept { return mean_; }

    [[nodiscard]] Eigen::MatrixXd variance() const
    {
        if (count_ < 2) {
            return Eigen::MatrixXd::Zero(mean_.rows(), mean_.cols());
        }
        return m2_ / static_cast<double>(count_ - 1);
    }

    /// Standard error of the mean, elementwise.
    [[nodiscard]] Eigen::MatrixXd stderr_of_mean() const
    {
        if (count_ < 2) {
            return Eigen::MatrixXd::Zero(mean_.rows(), mean_.cols());
        }
        return (variance() / static_cast<double>(count_)).cwiseSqrt();
    }

private:
    std::size_t count_ = 0;
    Eigen::MatrixXd mean_;
    Eigen::MatrixXd m2_;
};

/// Runs body(i) for i in [0, count) on up to `workers` threads.
/// Items are handed out dynamically; callers must key any randomness on i.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)> &body)
{
    const int nthreads = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) {
                    return;
                }
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                    next.store(count);
                    return;
                }
            }
        });
    }
    for (auto &th : pool) {
        th.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

/// Fixed-size chunking used by every Monte Carlo reduction: the chunk layout
/// depends only on `count`, so results do not depend on the worker count.
inline constexpr std::size_t reduction_chunk = 2048;

template <typename PerPoint>
running_stats chunked_stats(std::size_t count, int workers, PerPoint &&per_point)
{
    const std::size_t nchunks = (count + reduction_chunk - 1) / reduction_chunk;
    std::vector<running_stats> partial(nchunks);
    parallel_for(nchunks, workers, [&](std::size_t c) {
        running_stats acc;
        const std::size_t lo = c * reduction_chunk;
        const std::size_t hi = std::min(count, lo + reduction_chunk);
        for (std::size_t i = lo; i < hi; ++i) {
            acc.push(per_point(i));
        }
        partial[c] = std::move(acc);
    });
    // pairwise merge in chunk order
    while (partial.size() > 1) {
        std::vector<running_stats> next;
        next.reserve((partial.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < partial.size(); i += 2) {
            running_stats merged = partial[i];
            merged.merge(partial[i + 1]);
            next.push_back(std::move(merged));
        }
        if (partial.size() % 2 == 1) {
            next.push_back(std::move(partial.back()));
        }
        partial = std::move(next);
    }
    return partial.empty() ? running_stats{} : partial.front();
}

/// Symmetric eigen-decomposition based matrix function f(S) = V f(Λ) Vᵀ.
template <typename F>
Eigen::MatrixXd symmetric_function(const Eigen::MatrixXd &s, F &&f)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
    Eigen::VectorXd values = es.eigenvalues();
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        values[i] = f(values[i]);
    }
    return es.eigenvectors() * values.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace tclt::detail

#endif
