#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include "pharm/errors.hpp"

namespace pharm {

/// Gauss-Legendre rule mapped to the unit interval [0, 1].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const noexcept { return nodes.size(); }
};

namespace detail {

inline GaussRule compute_gauss_rule(int n)
{
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // Chebyshev initial guess, then Newton on P_n.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        // recompute derivative at the converged node
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = pk;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        // ascending order on [0, 1]
        rule.nodes[n - 1 - i] = 0.5 * (x + 1.0);
        rule.weights[n - 1 - i] = 0.5 * w;
    }
    return rule;
}

} // namespace detail

/// n-point Gauss-Legendre rule on [0, 1]; exact for polynomials of degree 2n - 1.
inline const GaussRule& gauss_rule(int n)
{
    if (n < 1 || n > 64)
        throw ConfigError("gauss_rule: order must be in [1, 64]");
    static std::mutex mutex;
    static std::map<int, GaussRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end())
        it = cache.emplace(n, detail::compute_gauss_rule(n)).first;
    return it->second;
}

/// Neumaier-compensated running sum.  Summation order is the call order.
class CompensatedSum {
public:
    void add(double x) noexcept
    {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }

    CompensatedSum& operator+=(double x) noexcept
    {
        add(x);
        return *this;
    }

    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Composite Gauss-Legendre on [a, b] with `panels` equal panels.
template <class F>
double integrate_interval(F&& f, double a, double b, int panels = 16, int order = 8)
{
    const GaussRule& rule = gauss_rule(order);
    const double h = (b - a) / panels;
    CompensatedSum acc;
    for (int k = 0; k < panels; ++k) {
        const double lo = a + k * h;
        for (std::size_t q = 0; q < rule.size(); ++q)
            acc += rule.weights[q] * h * f(lo + rule.nodes[q] * h);
    }
    return acc.value();
}

} // namespace pharm
