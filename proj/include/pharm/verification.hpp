#pragma once

// Instance-level certificates for the Liouville machinery: cutoff energy
// inequalities, the energy cap, decay fits toward the limit at infinity,
// the Kelvin-based limit estimator and the constant-vs-growth classifier.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pharm/analytic.hpp"
#include "pharm/discretization.hpp"
#include "pharm/errors.hpp"
#include "pharm/radial_bvp.hpp"

namespace pharm {

enum class TransitionKind { ExpBump, Cosine };

inline TransitionKind parse_transition(const std::string& name)
{
    if (name == "exp" || name == "exp_bump")
        return TransitionKind::ExpBump;
    if (name == "cosine")
        return TransitionKind::Cosine;
    throw ConfigError("unknown cutoff transition '" + name + "' (expected exp or cosine)");
}

inline std::string to_string(TransitionKind k) { return k == TransitionKind::ExpBump ? "exp" : "cosine"; }

namespace detail {

inline double bump_g(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
inline double bump_dg(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }

inline double transition(TransitionKind k, double s)
{
    if (s <= 1.0)
        return 1.0;
    if (s >= 2.0)
        return 0.0;
    if (k == TransitionKind::Cosine)
        return 0.5 * (1.0 + std::cos(std::numbers::pi * (s - 1.0)));
    const double a = bump_g(2.0 - s), c = bump_g(s - 1.0);
    return a / (a + c);
}

inline double transition_derivative(TransitionKind k, double s)
{
    if (s <= 1.0 || s >= 2.0)
        return 0.0;
    if (k == TransitionKind::Cosine)
        return -0.5 * std::numbers::pi * std::sin(std::numbers::pi * (s - 1.0));
    const double a = bump_g(2.0 - s), c = bump_g(s - 1.0);
    const double da = -bump_dg(2.0 - s), dc = bump_dg(s - 1.0);
    const double den = a + c;
    return (da * c - a * dc) / (den * den);
}

/// max |psi'| on a uniform sample of [1, 2].
inline double dense_sup(TransitionKind k, std::size_t samples)
{
    double m = 0.0;
    for (std::size_t i = 0; i <= samples; ++i)
        m = std::max(m, std::abs(transition_derivative(k, 1.0 + static_cast<double>(i) / samples)));
    return m;
}

/// Dense sampling followed by golden-section refinement around the best sample.
inline double refined_sup(TransitionKind k)
{
    constexpr std::size_t n = 1'000'000;
    double best = 0.0;
    std::size_t at = 0;
    for (std::size_t i = 0; i <= n; ++i) {
        const double v = std::abs(transition_derivative(k, 1.0 + static_cast<double>(i) / n));
        if (v > best) {
            best = v;
            at = i;
        }
    }
    double lo = 1.0 + (at == 0 ? 0.0 : at - 1.0) / n, hi = 1.0 + std::min<double>(at + 1.0, n) / n;
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    auto f = [&](double s) { return std::abs(transition_derivative(k, s)); };
    for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
        const double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
        if (f(x1) > f(x2))
            hi = x2;
        else
            lo = x1;
    }
    return std::max(best, f(0.5 * (lo + hi)));
}

inline double cached_sup(TransitionKind k)
{
    static const double exp_sup = refined_sup(TransitionKind::ExpBump);
    static const double cos_sup = refined_sup(TransitionKind::Cosine);
    return k == TransitionKind::ExpBump ? exp_sup : cos_sup;
}

} // namespace detail

/// phi(x) = psi(|x|), 1 on the closed unit ball, 0 outside B_2; phi_r(x) = phi(x / r).
class CutoffFamily {
public:
    TransitionKind kind() const noexcept { return kind_; }
    double r() const noexcept { return r_; }
    /// ||grad phi||_inf at unit scale.
    double sup_grad() const noexcept { return sup_; }

    double psi(double s) const { return detail::transition(kind_, s); }
    double psi_prime(double s) const { return detail::transition_derivative(kind_, s); }
    double value(double radius) const { return psi(radius / r_); }
    double grad_norm(double radius) const { return std::abs(psi_prime(radius / r_)) / r_; }

    CutoffFamily at(double r) const
    {
        CutoffFamily c = *this;
        c.r_ = checked_radius(r);
        return c;
    }

    friend CutoffFamily build_cutoff(TransitionKind kind, double r);

private:
    static double checked_radius(double r)
    {
        if (!(r > 0.0) || !std::isfinite(r))
            throw PreconditionError("cutoff radius must be positive and finite");
        return r;
    }

    TransitionKind kind_ = TransitionKind::ExpBump;
    double r_ = 1.0;
    double sup_ = 0.0;
};

inline CutoffFamily build_cutoff(TransitionKind kind, double r = 1.0)
{
    CutoffFamily c;
    c.kind_ = kind;
    c.r_ = CutoffFamily::checked_radius(r);
    c.sup_ = detail::cached_sup(kind);
    if (c.sup_ < detail::dense_sup(kind, 10'000))
        throw SolverError("cutoff: stored sup norm below the sampled maximum");
    return c;
}

// ---------------------------------------------------------------------------
// Caccioppoli inequality

struct CaccioppoliReport {
    double r = 0.0;
    double b = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    double C0 = 0.0;
    double annulus_gradient = 0.0; ///< int_{B_2r \ B_r} |grad v|^p phi_r^p
    double annulus_deviation = 0.0; ///< int_{B_2r \ B_r} |v - b|^p
    bool holds = false;
};

namespace detail {

template <class Field>
void require_window(const Field& v, double r, const char* who)
{
    const double r_in = domain_inner_radius(v), R = domain_outer_radius(v);
    if (!(r > r_in))
        throw PreconditionError(std::string(who) + ": r = " + std::to_string(r)
                                + " must exceed the hole radius " + std::to_string(r_in));
    if (2.0 * r > R * (1.0 + 1e-12))
        throw PreconditionError(std::string(who) + ": B_2r with r = " + std::to_string(r)
                                + " is not inside the computational domain of radius " + std::to_string(R));
}

} // namespace detail

template <class Field>
CaccioppoliReport caccioppoli_check(const Field& v, double b, const CutoffFamily& cutoff, const PExponents& e)
{
    const double r = cutoff.r(), p = e.p();
    detail::require_window(v, r, "caccioppoli_check");
    CaccioppoliReport rep;
    rep.r = r;
    rep.b = b;
    rep.C0 = p * cutoff.sup_grad();
    const double inner = integrate_field_window(v, domain_inner_radius(v), r,
                                                [&](const FieldPoint& q) { return std::pow(q.grad_norm, p); });
    rep.annulus_gradient = integrate_field_window(v, r, 2.0 * r, [&](const FieldPoint& q) {
        return std::pow(q.grad_norm * cutoff.value(q.r), p);
    });
    rep.annulus_deviation =
        integrate_field_window(v, r, 2.0 * r, [&](const FieldPoint& q) { return std::pow(std::abs(q.value - b), p); });
    rep.lhs = inner + rep.annulus_gradient;
    rep.rhs = rep.C0 / r * std::pow(rep.annulus_gradient, (p - 1.0) / p) * std::pow(rep.annulus_deviation, 1.0 / p);
    rep.holds = rep.lhs <= rep.rhs * (1.0 + 1e-8);
    return rep;
}

/// max |v - b| over the nodes, relative to max(1, |b|).
template <class Field>
double relative_deviation(const Field& v, double b)
{
    double m = 0.0;
    for (double x : v.values())
        m = std::max(m, std::abs(x - b));
    return m / std::max(1.0, std::abs(b));
}

/// The constant field b on the same discretisation as v.
template <class Field>
Field constant_like(const Field& v, double b)
{
    if constexpr (std::is_same_v<Field, ScalarField>)
        return ScalarField(v.mesh_ptr(), std::vector<double>(v.size(), b));
    else
        return RadialField(v.grid_ptr(), std::vector<double>(v.size(), b));
}

/// int_{B_2r \ B_r} |grad v|^p (no cutoff).
template <class Field>
double annulus_gradient_energy(const Field& v, double r, const PExponents& e)
{
    detail::require_window(v, r, "annulus_gradient_energy");
    return integrate_field_window(v, r, 2.0 * r, [&](const FieldPoint& q) { return std::pow(q.grad_norm, e.p()); });
}

// ---------------------------------------------------------------------------
// Bound (p-integral) check

struct BoundCheck {
    std::vector<double> radii;
    std::vector<double> values; ///< r^{-p} int_{B_2r \ B_r} |v - b|^p
    double C1 = 0.0;
};

template <class Field>
BoundCheck bound_check(const Field& v, double b, const PExponents& e, std::span<const double> radii)
{
    BoundCheck out;
    for (double r : radii) {
        detail::require_window(v, r, "bound_check");
        const double I = integrate_field_window(v, r, 2.0 * r,
                                                [&](const FieldPoint& q) { return std::pow(std::abs(q.value - b), e.p()); });
        out.radii.push_back(r);
        out.values.push_back(I / std::pow(r, e.p()));
        out.C1 = std::max(out.C1, out.values.back());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Energy cap

struct CapEntry {
    double r;
    double lhs;            ///< int_{B_2r} |grad v|^p phi_r^p
    double annulus;        ///< int_{B_2r \ B_r} |grad v|^p phi_r^p
    double premise_ratio;  ///< lhs / (C annulus^delta); premise holds iff <= 1 + 1e-8
    bool premise_holds;
    bool capped;           ///< lhs <= cap (1 + 1e-8)
};

struct EnergyCap {
    double C = 0.0;
    double delta = 0.0;
    double cap = 0.0;      ///< C^{1/(1 - delta)}
    std::vector<CapEntry> entries;

    bool premise_holds() const
    {
        return std::all_of(entries.begin(), entries.end(), [](const CapEntry& e) { return e.premise_holds; });
    }
    bool all_capped() const
    {
        return std::all_of(entries.begin(), entries.end(), [](const CapEntry& e) { return e.capped; });
    }
};

template <class Field>
EnergyCap energy_cap(const Field& v, const CutoffFamily& cutoff, std::span<const double> radii, const PExponents& e,
                     double C, double delta)
{
    if (!(delta > 0.0 && delta < 1.0))
        throw PreconditionError("energy_cap: delta must lie in (0, 1)");
    if (!(C >= 0.0) || !std::isfinite(C))
        throw PreconditionError("energy_cap: C must be finite and non-negative");
    EnergyCap out;
    out.C = C;
    out.delta = delta;
    out.cap = std::pow(C, 1.0 / (1.0 - delta));
    for (double r : radii) {
        const auto rep = caccioppoli_check(v, 0.0, cutoff.at(r), e);
        const double bound = C * std::pow(rep.annulus_gradient, delta);
        CapEntry ce{r, rep.lhs, rep.annulus_gradient, 0.0, false, false};
        ce.premise_ratio = rep.lhs == 0.0 ? 0.0 : (bound > 0.0 ? rep.lhs / bound : std::numeric_limits<double>::infinity());
        ce.premise_holds = ce.premise_ratio <= 1.0 + 1e-8;
        ce.capped = rep.lhs <= out.cap * (1.0 + 1e-8);
        out.entries.push_back(ce);
    }
    return out;
}

/// C = C0 C1^{1/p} and delta = (p - 1)/p with C1 measured by bound_check.
struct CapConstants {
    double C0;
    double C1;
    double C;
    double delta;
};

template <class Field>
CapConstants cap_constants(const Field& v, double b, const CutoffFamily& cutoff, const PExponents& e,
                           std::span<const double> radii)
{
    const auto bc = bound_check(v, b, e, radii);
    const double C0 = e.p() * cutoff.sup_grad();
    return {C0, bc.C1, C0 * std::pow(bc.C1, 1.0 / e.p()), (e.p() - 1.0) / e.p()};
}

// ---------------------------------------------------------------------------
// Decay fits

enum class FitMode { Limit, Growth };
enum class FitStatus { Ok, Degenerate, NonMonotone };

inline std::string to_string(FitStatus s)
{
    switch (s) {
    case FitStatus::Ok: return "ok";
    case FitStatus::Degenerate: return "degenerate";
    default: return "non-monotone";
    }
}

struct DecayFit {
    FitStatus status = FitStatus::Ok;
    double b_hat = 0.0;
    double exponent = std::numeric_limits<double>::quiet_NaN();
    double prefactor = std::numeric_limits<double>::quiet_NaN();
    double residual = 0.0;
    std::vector<double> radii;
};

namespace detail {

struct LineFit {
    double intercept;
    double slope;
    double rms;
};

inline LineFit least_squares(std::span<const double> x, std::span<const double> y)
{
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0))
        throw PreconditionError("regression design is rank deficient (all abscissae equal)");
    const double slope = sxy / sxx, icpt = my - slope * mx;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - icpt - slope * x[i];
        ss += r * r;
    }
    return {icpt, slope, std::sqrt(ss / n)};
}

inline void require_fit_radii(std::span<const double> radii, std::size_t min_count, const char* who)
{
    if (radii.size() < min_count)
        throw PreconditionError(std::string(who) + ": needs at least " + std::to_string(min_count) + " radii");
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (radii[i] < 2.0)
            throw PreconditionError(std::string(who) + ": radii must be >= 2");
        if (i > 0 && !(radii[i] > radii[i - 1]))
            throw PreconditionError(std::string(who) + ": radii must be strictly increasing");
    }
}

/// Aitken extrapolation on the last three means (exact for b + c r^k on geometric radii).
inline double aitken_limit(std::span<const double> m)
{
    const std::size_t n = m.size();
    const double d1 = m[n - 2] - m[n - 3], d2 = m[n - 1] - m[n - 2];
    if (d2 == d1)
        return m[n - 1];
    return m[n - 1] - d2 * d2 / (d2 - d1);
}

inline bool is_flat(std::span<const double> m, double rel)
{
    double scale = 0.0;
    for (double x : m)
        scale = std::max(scale, std::abs(x));
    for (std::size_t i = 1; i < m.size(); ++i)
        if (std::abs(m[i] - m[i - 1]) > rel * scale)
            return false;
    return true;
}

} // namespace detail

inline DecayFit decay_fit(const AnnulusSamples& s, const PExponents& e, FitMode mode)
{
    detail::require_fit_radii(s.radii, 4, "decay_fit");
    DecayFit fit;
    fit.radii = s.radii;
    const auto& m = s.mean;
    const std::size_t n = m.size();

    if (mode == FitMode::Growth) {
        std::vector<double> mu(n);
        for (std::size_t i = 0; i < n; ++i)
            mu[i] = mu_eval(e, s.radii[i]);
        const auto lf = detail::least_squares(mu, m);
        fit.prefactor = lf.slope;
        fit.b_hat = lf.intercept;
        fit.exponent = e.is_critical() ? 0.0 : e.kappa();
        fit.residual = lf.rms;
        if (detail::is_flat(m, 1e-12))
            fit.status = FitStatus::Degenerate;
        return fit;
    }

    if (detail::is_flat(m, 1e-12)) {
        fit.status = FitStatus::Degenerate;
        fit.b_hat = m.back();
        return fit;
    }
    for (std::size_t i = 2; i < n; ++i)
        if ((m[i] - m[i - 1]) * (m[i - 1] - m[i - 2]) <= 0.0) {
            fit.status = FitStatus::NonMonotone;
            fit.b_hat = m.back();
            fit.residual = std::abs(m[i] - m[i - 1]);
            return fit;
        }
    fit.b_hat = detail::aitken_limit(m);
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < n; ++i) {
        const double dev = std::abs(m[i] - fit.b_hat);
        if (dev > 0.0) {
            lx.push_back(std::log(s.radii[i]));
            ly.push_back(std::log(dev));
        }
    }
    if (lx.size() < 2) {
        fit.status = FitStatus::Degenerate;
        return fit;
    }
    const auto lf = detail::least_squares(lx, ly);
    fit.exponent = lf.slope;
    fit.prefactor = std::exp(lf.intercept);
    fit.residual = lf.rms;
    return fit;
}

struct KelvinEstimate {
    double b_hat;
    double w0_hat;
    double residual;
};

/// Regression of v against |x|^{2-d}: intercept b, slope w(0).
inline KelvinEstimate kelvin_limit_estimate(std::span<const double> radii, std::span<const double> values, int d)
{
    if (d < 3)
        throw PreconditionError("kelvin_limit_estimate: requires d >= 3");
    if (radii.size() != values.size() || radii.size() < 2)
        throw PreconditionError("kelvin_limit_estimate: needs at least two (radius, value) pairs");
    std::vector<double> x(radii.size());
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] > 0.0))
            throw DomainError("kelvin_limit_estimate: radii must be positive");
        x[i] = std::pow(radii[i], 2.0 - d);
    }
    const auto lf = detail::least_squares(x, values);
    return {lf.intercept, lf.slope, lf.rms};
}

// ---------------------------------------------------------------------------
// Dichotomy classifier

struct ConstantLimit {
    double b;
};
struct FundamentalGrowth {
    double c;
    int sign;
};
struct Undetermined {
    std::string reason;
};
using DichotomyVerdict = std::variant<ConstantLimit, FundamentalGrowth, Undetermined>;

inline std::string describe(const DichotomyVerdict& v)
{
    if (auto* c = std::get_if<ConstantLimit>(&v))
        return "ConstantLimit(" + format_number(c->b) + ")";
    if (auto* g = std::get_if<FundamentalGrowth>(&v))
        return "FundamentalGrowth(" + format_number(g->c) + ", " + (g->sign > 0 ? "+1" : "-1") + ")";
    return "Undetermined(" + std::get<Undetermined>(v).reason + ")";
}

struct DichotomyOptions {
    double ratio_threshold = 0.9;      ///< geometric convergence of successive mean differences
    double stabilization = 0.05;       ///< relative spread of the growth coefficient over the last three radii
    double flat_tolerance = 1e-6;      ///< relative; differences below it count as zero
    std::size_t min_radii = 5;
};

inline DichotomyVerdict classify_dichotomy(const AnnulusSamples& s, const PExponents& e,
                                           const DichotomyOptions& opt = {})
{
    const auto& r = s.radii;
    const auto& m = s.mean;
    if (r.size() < opt.min_radii)
        throw PreconditionError("classify_dichotomy: needs at least " + std::to_string(opt.min_radii) + " radii");
    for (std::size_t i = 1; i < r.size(); ++i)
        if (std::abs(r[i] / r[i - 1] - 2.0) > 1e-9)
            throw PreconditionError("classify_dichotomy: radii must be dyadic");

    if (detail::is_flat(m, opt.flat_tolerance))
        return ConstantLimit{m.back()};

    double scale = 0.0;
    for (double x : m)
        scale = std::max(scale, std::abs(x));
    bool geometric = true;
    for (std::size_t i = 2; i < m.size() && geometric; ++i) {
        const double d0 = m[i - 1] - m[i - 2], d1 = m[i] - m[i - 1];
        if (std::abs(d1) <= opt.flat_tolerance * scale)
            continue;
        geometric = d0 != 0.0 && std::abs(d1 / d0) <= opt.ratio_threshold;
    }
    if (geometric)
        return ConstantLimit{detail::aitken_limit(m)};

    if (e.p() < e.d())
        return Undetermined{"no geometric convergence and the growth branch needs p >= d"};

    // incremental ratio of mean to mu_p over the last three radii
    const std::size_t n = m.size();
    std::vector<double> slope;
    for (std::size_t i = n - 3; i + 1 < n; ++i)
        slope.push_back((m[i + 1] - m[i]) / (mu_eval(e, r[i + 1]) - mu_eval(e, r[i])));
    const double c = slope.back();
    const double spread = std::abs(slope[1] - slope[0]);
    if (c != 0.0 && spread <= opt.stabilization * std::abs(c))
        return FundamentalGrowth{std::abs(c), c > 0.0 ? 1 : -1};
    return Undetermined{"growth coefficient did not stabilize (last slopes " + format_number(slope[0]) + ", "
                        + format_number(slope[1]) + ")"};
}

// ---------------------------------------------------------------------------
// Sign condition

struct SignCheck {
    bool holds = true;
    double worst_value = 0.0;   ///< sample with the most negative h(v) v
    double worst_product = 0.0;
};

inline SignCheck sign_condition_check(const BoundaryLaw& law, std::span<const double> samples, double p = 2.0)
{
    SignCheck out;
    if (is_dirichlet(law))
        return out;
    bool first = true;
    for (double v : samples) {
        const double prod = boundary_flux(law, p, v) * v;
        if (first || prod < out.worst_product) {
            out.worst_product = prod;
            out.worst_value = v;
            first = false;
        }
    }
    out.holds = first || out.worst_product >= -1e-14;
    return out;
}

// ---------------------------------------------------------------------------
// Serialisation

inline void write_caccioppoli_csv(std::ostream& os, std::span<const CaccioppoliReport> reps)
{
    os << "r,lhs,rhs,holds\n";
    for (const auto& r : reps)
        os << format_number(r.r) << ',' << format_number(r.lhs) << ',' << format_number(r.rhs) << ','
           << (r.holds ? 1 : 0) << '\n';
}

inline void write_decay_csv(std::ostream& os, const AnnulusSamples& s, const PExponents& e)
{
    os << "r,mean,max,mu\n";
    for (std::size_t i = 0; i < s.radii.size(); ++i)
        os << format_number(s.radii[i]) << ',' << format_number(s.mean[i]) << ',' << format_number(s.max_abs[i])
           << ',' << format_number(mu_eval(e, s.radii[i])) << '\n';
}

} // namespace pharm
