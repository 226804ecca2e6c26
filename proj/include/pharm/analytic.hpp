#pragma once

// Closed-form pieces of the p-harmonic toolbox: the fundamental solution
// mu_p, the two-parameter radial family a + b*mu_p, the Kelvin transform
// and the explicit constants that show up in the annulus estimates.

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pharm/errors.hpp"

namespace pharm {

/// Exponent pair (p, d) together with the decay exponent kappa = (p-d)/(p-1).
class PExponents {
public:
    static PExponents make(double p, int d)
    {
        if (!(p > 1.0) || !std::isfinite(p))
            throw ConfigError("p must be a finite number > 1 (got " + std::to_string(p) + ")");
        if (d < 2)
            throw ConfigError("dimension d must be >= 2 (got " + std::to_string(d) + ")");
        return PExponents(p, d);
    }

    double p() const noexcept { return p_; }
    int d() const noexcept { return d_; }
    double kappa() const noexcept { return kappa_; }

    /// p == d, where mu_p is the logarithm.
    bool is_critical() const noexcept { return p_ == static_cast<double>(d_); }

    static double kappa_of(double p, int d) noexcept { return (p - d) / (p - 1.0); }

    friend bool operator==(const PExponents&, const PExponents&) = default;

private:
    PExponents(double p, int d) : p_(p), d_(d), kappa_(kappa_of(p, d)) {}

    double p_;
    int d_;
    double kappa_;
};

/// Phi(t) = |t|^{p-2} t, the scalar p-Laplacian flux.
inline double phi_p(double t, double p) noexcept
{
    if (t == 0.0)
        return 0.0;
    return std::copysign(std::pow(std::abs(t), p - 1.0), t);
}

/// Inverse of phi_p.
inline double phi_p_inverse(double s, double p) noexcept
{
    if (s == 0.0)
        return 0.0;
    return std::copysign(std::pow(std::abs(s), 1.0 / (p - 1.0)), s);
}

inline double euclidean_norm(std::span<const double> x) noexcept
{
    double s = 0.0;
    for (double xi : x)
        s += xi * xi;
    return std::sqrt(s);
}

/// mu_p(r): r^kappa for p != d, ln r for p == d.
inline double mu_eval(const PExponents& e, double r)
{
    if (!(r > 0.0))
        throw DomainError("mu_eval: radius must be positive");
    return e.is_critical() ? std::log(r) : std::pow(r, e.kappa());
}

/// d mu_p / dr.
inline double mu_radial_derivative(const PExponents& e, double r)
{
    if (!(r > 0.0))
        throw DomainError("mu_radial_derivative: radius must be positive");
    return e.is_critical() ? 1.0 / r : e.kappa() * std::pow(r, e.kappa() - 1.0);
}

/// Gradient of mu_p at a point x in R^d (x.size() must equal d).
inline std::vector<double> mu_grad(const PExponents& e, std::span<const double> x)
{
    if (x.size() != static_cast<std::size_t>(e.d()))
        throw PreconditionError("mu_grad: point dimension does not match d");
    const double r = euclidean_norm(x);
    if (!(r > 0.0))
        throw DomainError("mu_grad: gradient is undefined at the origin");
    const double scale = e.is_critical() ? 1.0 / (r * r) : e.kappa() * std::pow(r, e.kappa() - 2.0);
    std::vector<double> g(x.begin(), x.end());
    for (double& gi : g)
        gi *= scale;
    return g;
}

/// v(r) = a + b * mu_p(r).
struct RadialProfile {
    double a = 0.0;
    double b = 0.0;
    PExponents exps;

    double eval(double r) const { return a + b * mu_eval(exps, r); }

    double derivative(double r) const { return b * mu_radial_derivative(exps, r); }

    std::vector<double> grad(std::span<const double> x) const
    {
        auto g = mu_grad(exps, x);
        for (double& gi : g)
            gi *= b;
        return g;
    }

    /// Limit at infinity when it exists (p < d, or b == 0).
    bool has_finite_limit() const noexcept { return b == 0.0 || exps.p() < exps.d(); }
};

inline double radial_eval(const RadialProfile& v, double r) { return v.eval(r); }

inline std::vector<double> radial_grad(const RadialProfile& v, std::span<const double> x)
{
    return v.grad(x);
}

using PointFunction = std::function<double(std::span<const double>)>;

/// Kelvin transform K[v](x) = |x|^{2-d} v(x / |x|^2) as a function combinator.
inline PointFunction kelvin(PointFunction v, int d)
{
    if (d < 3)
        throw PreconditionError("kelvin: dimension must be >= 3");
    return [v = std::move(v), d](std::span<const double> x) -> double {
        if (x.size() != static_cast<std::size_t>(d))
            throw PreconditionError("kelvin: point dimension does not match d");
        double r2 = 0.0;
        for (double xi : x)
            r2 += xi * xi;
        if (!(r2 > 0.0))
            throw DomainError("kelvin: transform is undefined at the origin");
        std::vector<double> y(x.begin(), x.end());
        for (double& yi : y)
            yi /= r2;
        // |x|^{2-d} = (|x|^2)^{(2-d)/2}
        return std::pow(r2, 0.5 * (2 - d)) * v(y);
    };
}

/// Surface area of the unit sphere in R^d.
inline double omega_d(int d)
{
    if (d < 2)
        throw ConfigError("omega_d: dimension must be >= 2");
    const double half = 0.5 * d;
    return 2.0 * std::pow(std::numbers::pi, half) / std::tgamma(half);
}

/// Exponent (p^2 - d)/(p - 1) of the radial antiderivative of s^{p*kappa + d - 1}.
inline double annulus_power(const PExponents& e) noexcept
{
    return (e.p() * e.p() - e.d()) / (e.p() - 1.0);
}

/// c2 with (1/r^p) * integral over B_{2r} \ B_r of |x|^{p*kappa} = omega_d * c2 * r^kappa.
///
/// c2 = integral_1^2 s^{p*kappa + d - 1} ds, i.e. (p-1)/(p^2-d) * (2^{(p^2-d)/(p-1)} - 1),
/// or ln 2 when d == p^2.  Always positive.
inline double annulus_decay_constant(const PExponents& e)
{
    const double q = annulus_power(e);
    if (std::abs(e.d() - e.p() * e.p()) < 1e-9)
        return std::numbers::ln2;
    // expm1 keeps full precision when q is small but outside the ln 2 window.
    return std::expm1(q * std::numbers::ln2) / q;
}

/// The constant with the sign printed in the original derivation,
/// (p-1)/(d-p^2) * (2^{(p^2-d)/(p-1)} - 1).  Kept for reporting only.
inline double annulus_decay_constant_as_printed(const PExponents& e)
{
    if (std::abs(e.d() - e.p() * e.p()) < 1e-9)
        return std::numbers::ln2;
    return -annulus_decay_constant(e);
}

/// Upper bound (omega_d/d)(2^d - 1) M^p r^{d-p} for (1/r^p) * integral over
/// B_{2r} \ B_r of |v - b|^p when |v - b| <= M there.
inline double sup_bound_constant(const PExponents& e, double sup_norm, double r)
{
    if (sup_norm < 0.0)
        throw PreconditionError("sup_bound_constant: sup norm must be >= 0");
    if (!(r > 0.0))
        throw DomainError("sup_bound_constant: radius must be positive");
    const int d = e.d();
    return omega_d(d) / d * (std::ldexp(1.0, d) - 1.0) * std::pow(sup_norm, e.p())
        * std::pow(r, d - e.p());
}

} // namespace pharm
