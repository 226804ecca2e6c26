#pragma once

// Radially symmetric p-harmonic boundary-value problems outside a ball.
//
// Every radial p-harmonic function is a + b*mu_p(r), so a radial problem
// reduces to two scalar conditions: one from the far field and one from the
// law on the hole.  The hole normal points out of the domain, i.e. towards
// the origin, so dv/dnu = -v'(r_in) and the boundary operator reads
//     B v = -Phi(v'(r_in)) + h(v(r_in)),   Phi(t) = |t|^{p-2} t.
//
// shoot_radial is an independent oracle: it integrates the conserved flux
// r^{d-1} Phi(v') = F numerically and bisects on F.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pharm/analytic.hpp"
#include "pharm/discretization.hpp"
#include "pharm/errors.hpp"
#include "pharm/quadrature.hpp"

namespace pharm {

struct DirichletValue {
    double g = 0.0;
};

struct NeumannZero {};

/// h(v) = alpha |v|^{p-2} v.
struct RobinPower {
    double alpha = 0.0;
};

/// User-supplied nondecreasing h with h(v) v >= 0.  `primitive` is optional;
/// H(t) = int_0^t h is integrated numerically when it is missing.
struct CustomMonotone {
    std::string name;
    std::function<double(double)> h;
    std::function<double(double)> primitive;
};

using BoundaryLaw = std::variant<DirichletValue, NeumannZero, RobinPower, CustomMonotone>;

inline bool is_dirichlet(const BoundaryLaw& law) noexcept
{
    return std::holds_alternative<DirichletValue>(law);
}

inline std::string describe(const BoundaryLaw& law)
{
    std::ostringstream os;
    os.precision(17);
    if (auto* d = std::get_if<DirichletValue>(&law))
        os << "dirichlet(" << d->g << ")";
    else if (std::holds_alternative<NeumannZero>(law))
        os << "neumann";
    else if (auto* r = std::get_if<RobinPower>(&law))
        os << "robin(" << r->alpha << ")";
    else
        os << "custom(" << std::get<CustomMonotone>(law).name << ")";
    return os.str();
}

inline void validate(const BoundaryLaw& law)
{
    if (auto* r = std::get_if<RobinPower>(&law)) {
        if (!(r->alpha >= 0.0) || !std::isfinite(r->alpha))
            throw ConfigError("RobinPower alpha must be >= 0 so that h(v) v >= 0 (sign condition)");
    }
    if (auto* c = std::get_if<CustomMonotone>(&law)) {
        if (!c->h)
            throw ConfigError("CustomMonotone law '" + c->name + "' has no h");
    }
    if (auto* d = std::get_if<DirichletValue>(&law)) {
        if (!std::isfinite(d->g))
            throw ConfigError("Dirichlet value must be finite");
    }
}

/// h(v) of a Robin/Neumann law.
inline double boundary_flux(const BoundaryLaw& law, double p, double v)
{
    return std::visit(
        [&](const auto& l) -> double {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DirichletValue>)
                throw PreconditionError("boundary_flux: Dirichlet law has no h");
            else if constexpr (std::is_same_v<L, NeumannZero>)
                return 0.0;
            else if constexpr (std::is_same_v<L, RobinPower>)
                return l.alpha * phi_p(v, p);
            else
                return l.h(v);
        },
        law);
}

/// H(v) = int_0^v h(s) ds.
inline double boundary_primitive(const BoundaryLaw& law, double p, double v)
{
    return std::visit(
        [&](const auto& l) -> double {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DirichletValue>)
                throw PreconditionError("boundary_primitive: Dirichlet law has no h");
            else if constexpr (std::is_same_v<L, NeumannZero>)
                return 0.0;
            else if constexpr (std::is_same_v<L, RobinPower>)
                return l.alpha * std::pow(std::abs(v), p) / p;
            else {
                if (l.primitive)
                    return l.primitive(v);
                if (v == 0.0)
                    return 0.0;
                return integrate_interval(l.h, 0.0, v, 8, 10);
            }
        },
        law);
}

/// h'(v).  For RobinPower with p < 2 the derivative blows up at 0; `reg`
/// replaces |v| by sqrt(reg^2 + v^2) there (Newton models only).
inline double boundary_flux_derivative(const BoundaryLaw& law, double p, double v, double reg = 0.0)
{
    return std::visit(
        [&](const auto& l) -> double {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DirichletValue>)
                throw PreconditionError("boundary_flux_derivative: Dirichlet law has no h");
            else if constexpr (std::is_same_v<L, NeumannZero>)
                return 0.0;
            else if constexpr (std::is_same_v<L, RobinPower>) {
                const double s = reg > 0.0 ? std::sqrt(reg * reg + v * v) : std::abs(v);
                if (s == 0.0)
                    return p > 2.0 ? 0.0 : (p == 2.0 ? l.alpha : std::numeric_limits<double>::infinity());
                return l.alpha * (p - 1.0) * std::pow(s, p - 2.0);
            } else {
                const double step = 1e-6 * std::max(1.0, std::abs(v));
                return (l.h(v + step) - l.h(v - step)) / (2.0 * step);
            }
        },
        law);
}

/// lim_{|x| -> inf} v = b.
struct Limit {
    double b = 0.0;
};

/// v = g on the sphere |x| = R.
struct OuterDirichlet {
    double R = 0.0;
    double g = 0.0;
};

/// v ~ c mu_p near infinity.
struct GrowthCoefficient {
    double c = 0.0;
};

using FarField = std::variant<Limit, OuterDirichlet, GrowthCoefficient>;

inline std::string describe(const FarField& far)
{
    std::ostringstream os;
    os.precision(17);
    if (auto* l = std::get_if<Limit>(&far))
        os << "limit(" << l->b << ")";
    else if (auto* o = std::get_if<OuterDirichlet>(&far))
        os << "outer-dirichlet(R=" << o->R << ", g=" << o->g << ")";
    else
        os << "growth(" << std::get<GrowthCoefficient>(far).c << ")";
    return os.str();
}

struct RadialBVP {
    double r_in = 1.0;
    BoundaryLaw inner = NeumannZero{};
    FarField far = Limit{0.0};
    PExponents exps = PExponents::make(2.0, 2);

    void validate() const
    {
        if (!(r_in > 0.0) || !std::isfinite(r_in))
            throw ConfigError("RadialBVP: hole radius must be > 0");
        pharm::validate(inner);
        if (auto* o = std::get_if<OuterDirichlet>(&far)) {
            if (!(o->R > r_in))
                throw ConfigError("RadialBVP: outer radius must exceed the hole radius");
        }
        if (std::holds_alternative<GrowthCoefficient>(far) && exps.p() < exps.d())
            throw ConfigError("RadialBVP: growth far field requires p >= d (mu_p decays for p < d)");
    }
};

namespace detail {

inline double robin_alpha_or(const BoundaryLaw& law, double fallback)
{
    if (auto* r = std::get_if<RobinPower>(&law))
        return r->alpha;
    return fallback;
}

} // namespace detail

struct RootOptions {
    double width = 1e-13;
    int max_expansions = 1100;
    int newton_steps = 4;
    /// Skip the Newton polish when the iterate is within this distance of 0.
    double skip_newton_near_zero = 0.0;
};

/// Safeguarded root of a monotone scalar function: expand a bracket around
/// `guess`, bisect to the requested width, then polish with Newton while the
/// iterate stays inside the bracket and |f| decreases.
template <class F, class DF>
double find_monotone_root(F&& f, DF&& df, double guess, double scale, const std::string& what,
                          const RootOptions& opt = {})
{
    double fg = f(guess);
    if (fg == 0.0)
        return guess;
    double step = std::max(scale, 1e-3);
    double lo = guess - step, hi = guess + step;
    double flo = f(lo), fhi = f(hi);
    int k = 0;
    while (std::signbit(flo) == std::signbit(fhi) && flo != 0.0 && fhi != 0.0) {
        if (++k > opt.max_expansions || !std::isfinite(step)) {
            std::ostringstream os;
            os.precision(6);
            os << what << ": no sign change found; last bracket [" << lo << ", " << hi << "] with f = [" << flo
               << ", " << fhi << "], f(guess=" << guess << ") = " << fg;
            throw SolverError(os.str());
        }
        step *= 2.0;
        lo = guess - step;
        hi = guess + step;
        flo = f(lo);
        fhi = f(hi);
    }
    if (flo == 0.0)
        return lo;
    if (fhi == 0.0)
        return hi;
    // invariant: f(lo) and f(hi) have opposite signs
    const bool lo_negative = flo < 0.0;
    for (int it = 0; it < 2000; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double tol = std::max(opt.width, 4.0 * std::numeric_limits<double>::epsilon() * std::abs(mid));
        if (hi - lo <= tol || mid == lo || mid == hi)
            break;
        const double fm = f(mid);
        if (fm == 0.0)
            return mid;
        if ((fm < 0.0) == lo_negative)
            lo = mid;
        else
            hi = mid;
    }
    double x = 0.5 * (lo + hi);
    double fx = f(x);
    for (int it = 0; it < opt.newton_steps; ++it) {
        if (fx == 0.0 || std::abs(x) < opt.skip_newton_near_zero)
            break;
        const double slope = df(x);
        if (!std::isfinite(slope) || slope == 0.0)
            break;
        const double xn = x - fx / slope;
        const double pad = hi - lo;
        if (!(xn >= lo - pad && xn <= hi + pad))
            break;
        const double fn = f(xn);
        if (!(std::abs(fn) < std::abs(fx)))
            break;
        x = xn;
        fx = fn;
    }
    return x;
}

namespace detail {

inline double dphi_p(double t, double p)
{
    if (t == 0.0)
        return p > 2.0 ? 0.0 : (p == 2.0 ? 1.0 : std::numeric_limits<double>::infinity());
    return (p - 1.0) * std::pow(std::abs(t), p - 2.0);
}

inline RootOptions root_options_for(double p)
{
    RootOptions o;
    if (p < 2.0)
        o.skip_newton_near_zero = 1e-8;
    return o;
}

/// Solve h(t) = target for t (h nondecreasing).
inline double invert_law(const BoundaryLaw& law, double p, double target, const std::string& what)
{
    if (auto* r = std::get_if<RobinPower>(&law)) {
        if (r->alpha > 0.0)
            return phi_p_inverse(target / r->alpha, p);
    }
    return find_monotone_root([&](double t) { return boundary_flux(law, p, t) - target; },
                              [&](double t) { return boundary_flux_derivative(law, p, t); }, 0.0,
                              std::max(1.0, std::abs(target)), what, root_options_for(p));
}

/// Does h vanish identically (Neumann, or Robin with alpha = 0)?
inline bool law_is_flux_free(const BoundaryLaw& law)
{
    return std::holds_alternative<NeumannZero>(law) || (std::holds_alternative<RobinPower>(law) && detail::robin_alpha_or(law, 1.0) == 0.0);
}

inline bool nearly_zero(double x, double scale) { return std::abs(x) <= 1e-12 * std::max(1.0, scale); }

} // namespace detail

/// Value of the hole boundary operator at r_in: v(r_in) - g for Dirichlet,
/// -Phi(v'(r_in)) + h(v(r_in)) otherwise.
inline double boundary_residual(const RadialProfile& v, const BoundaryLaw& law, double r_in)
{
    if (!(r_in > 0.0))
        throw DomainError("boundary_residual: radius must be positive");
    if (auto* d = std::get_if<DirichletValue>(&law))
        return v.eval(r_in) - d->g;
    return -phi_p(v.derivative(r_in), v.exps.p()) + boundary_flux(law, v.exps.p(), v.eval(r_in));
}

/// Exact radial solution a + b mu_p of the problem.
inline RadialProfile solve_radial(const RadialBVP& bvp)
{
    bvp.validate();
    const PExponents& e = bvp.exps;
    const double p = e.p();
    const double mu_in = mu_eval(e, bvp.r_in);
    const double dmu_in = mu_radial_derivative(e, bvp.r_in);
    const auto& law = bvp.inner;
    const RootOptions ropt = detail::root_options_for(p);

    auto inadmissible = [&](const std::string& why) {
        return ConfigError("solve_radial: inner law " + describe(law) + " with far field " + describe(bvp.far)
                           + " is inadmissible: " + why);
    };

    if (auto* lim = std::get_if<Limit>(&bvp.far)) {
        const double a = lim->b;
        if (p >= e.d()) {
            // mu_p is unbounded: only the constant a solves the problem.
            const RadialProfile v{a, 0.0, e};
            const double res = boundary_residual(v, law, bvp.r_in);
            if (!detail::nearly_zero(res, std::abs(a)))
                throw inadmissible("for p >= d a bounded solution is constant, and the constant "
                                   + std::to_string(a) + " violates the hole condition");
            return v;
        }
        if (auto* dir = std::get_if<DirichletValue>(&law))
            return {a, (dir->g - a) / mu_in, e};
        if (detail::law_is_flux_free(law))
            return {a, 0.0, e};
        auto F = [&](double b) { return -phi_p(b * dmu_in, p) + boundary_flux(law, p, a + b * mu_in); };
        auto dF = [&](double b) {
            return -detail::dphi_p(b * dmu_in, p) * dmu_in
                + boundary_flux_derivative(law, p, a + b * mu_in) * mu_in;
        };
        const double b = find_monotone_root(F, dF, 0.0, std::max(1.0, std::abs(a)), "solve_radial (limit far field)", ropt);
        return {a, b, e};
    }

    if (auto* od = std::get_if<OuterDirichlet>(&bvp.far)) {
        const double mu_out = mu_eval(e, od->R);
        if (auto* dir = std::get_if<DirichletValue>(&law)) {
            const double b = (od->g - dir->g) / (mu_out - mu_in);
            return {dir->g - b * mu_in, b, e};
        }
        if (detail::law_is_flux_free(law))
            return {od->g, 0.0, e};
        const double g = od->g, dmu = mu_in - mu_out;
        auto F = [&](double b) { return -phi_p(b * dmu_in, p) + boundary_flux(law, p, g + b * dmu); };
        auto dF = [&](double b) {
            return -detail::dphi_p(b * dmu_in, p) * dmu_in + boundary_flux_derivative(law, p, g + b * dmu) * dmu;
        };
        const double b = find_monotone_root(F, dF, 0.0, std::max(1.0, std::abs(g)), "solve_radial (outer Dirichlet)", ropt);
        return {g - b * mu_out, b, e};
    }

    const double c = std::get<GrowthCoefficient>(bvp.far).c;
    if (auto* dir = std::get_if<DirichletValue>(&law))
        return {dir->g - c * mu_in, c, e};
    const double target = phi_p(c * dmu_in, p);
    if (detail::law_is_flux_free(law)) {
        if (c != 0.0)
            throw inadmissible("a flux-free hole forces the growth coefficient to vanish");
        throw inadmissible("c = 0 with a flux-free hole leaves the offset undetermined");
    }
    // -Phi(c mu'(r_in)) + h(t) = 0 with t = a + c mu(r_in)
    const double t = detail::invert_law(law, p, target, "solve_radial (growth far field)");
    return {t - c * mu_in, c, e};
}

/// Values of a radial solution at the nodes of a grid.
struct SampledProfile {
    std::vector<double> r;
    std::vector<double> v;

    double max_abs_difference(const std::vector<double>& other) const
    {
        double m = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k)
            m = std::max(m, std::abs(v[k] - other[k]));
        return m;
    }
};

namespace detail {

/// int_{a}^{b} s^{-q} ds by Gauss-Legendre on panels uniform in log s.
inline double power_integral(double a, double b, double q)
{
    if (b == a)
        return 0.0;
    const int panels = std::max(1, static_cast<int>(std::ceil(std::log(b / a) / 0.05)));
    const GaussRule& rule = gauss_rule(10);
    const double ratio = std::pow(b / a, 1.0 / panels);
    CompensatedSum acc;
    double lo = a;
    for (int k = 0; k < panels; ++k) {
        const double hi = (k == panels - 1) ? b : lo * ratio;
        for (std::size_t i = 0; i < rule.size(); ++i) {
            const double s = lo + rule.nodes[i] * (hi - lo);
            acc += rule.weights[i] * (hi - lo) * std::pow(s, -q);
        }
        lo = hi;
    }
    return acc.value();
}

/// int_{a}^{inf} s^{-q} ds (q > 1) via s = a e^u and a truncated u-range.
inline double power_tail(double a, double q)
{
    const double decay = q - 1.0;
    const double u_max = 45.0 / decay;
    const int panels = 400;
    const GaussRule& rule = gauss_rule(10);
    const double h = u_max / panels;
    CompensatedSum acc;
    for (int k = 0; k < panels; ++k)
        for (std::size_t i = 0; i < rule.size(); ++i) {
            const double u = (k + rule.nodes[i]) * h;
            acc += rule.weights[i] * h * std::exp(-decay * u);
        }
    return std::pow(a, 1.0 - q) * acc.value();
}

} // namespace detail

/// Independent shooting oracle on `grid` (which must start at the hole radius).
inline SampledProfile shoot_radial(const RadialBVP& bvp, const RadialGrid& grid)
{
    bvp.validate();
    const PExponents& e = bvp.exps;
    const double p = e.p();
    const int d = e.d();
    if (grid.dimension() != d)
        throw PreconditionError("shoot_radial: grid dimension differs from d");
    if (std::abs(grid.inner_radius() - bvp.r_in) > 1e-12 * bvp.r_in)
        throw PreconditionError("shoot_radial: grid must start at the hole radius");

    // v'(r) = Phi^{-1}(F r^{1-d}) = Phi^{-1}(F) r^{-q}, q = (d-1)/(p-1)
    const double q = (d - 1.0) / (p - 1.0);
    const double r0 = bvp.r_in;
    const double surface = std::pow(r0, d - 1);

    std::vector<double> shape(grid.node_count(), 0.0);
    for (std::size_t k = 1; k < shape.size(); ++k)
        shape[k] = shape[k - 1] + detail::power_integral(grid.radii()[k - 1], grid.radii()[k], q);

    const auto& law = bvp.inner;
    const bool dirichlet = is_dirichlet(law);
    const bool flux_free = !dirichlet && detail::law_is_flux_free(law);

    // Hole condition: v(r_in) as a function of the flux constant.
    auto inner_value = [&](double flux) -> double {
        if (auto* dir = std::get_if<DirichletValue>(&law))
            return dir->g;
        return detail::invert_law(law, p, flux / surface, "shoot_radial (inner law)");
    };

    double flux = 0.0, v0 = 0.0;
    auto bisect_flux = [&](auto&& mismatch) {
        double lo = -1.0, hi = 1.0;
        double mlo = mismatch(lo), mhi = mismatch(hi);
        for (int k = 0; std::signbit(mlo) == std::signbit(mhi) && mlo != 0.0 && mhi != 0.0; ++k) {
            if (k > 1000)
                throw OracleError("shoot_radial: flux bracket not found for " + describe(law) + " / "
                                  + describe(bvp.far));
            lo *= 2.0;
            hi *= 2.0;
            mlo = mismatch(lo);
            mhi = mismatch(hi);
        }
        if (mlo == 0.0)
            return lo;
        if (mhi == 0.0)
            return hi;
        const bool lo_neg = mlo < 0.0;
        for (int it = 0; it < 400; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi)
                break;
            const double mm = mismatch(mid);
            if (mm == 0.0)
                return mid;
            ((mm < 0.0) == lo_neg ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };

    if (auto* od = std::get_if<OuterDirichlet>(&bvp.far)) {
        if (flux_free) {
            flux = 0.0;
            v0 = od->g;
        } else {
            const double span_R = detail::power_integral(r0, od->R, q);
            flux = bisect_flux([&](double F) { return inner_value(F) + phi_p_inverse(F, p) * span_R - od->g; });
            v0 = inner_value(flux);
        }
    } else if (auto* lim = std::get_if<Limit>(&bvp.far)) {
        if (p >= d || flux_free) {
            // bounded solutions are constant for p >= d; zero flux for flux-free holes
            flux = 0.0;
            v0 = lim->b;
            if (p >= d) {
                const double res = dirichlet ? std::get<DirichletValue>(law).g - v0 : boundary_flux(law, p, v0);
                if (!detail::nearly_zero(res, std::abs(v0)))
                    throw OracleError("shoot_radial: no bounded solution matches the hole condition");
            }
        } else {
            const double tail = detail::power_tail(r0, q);
            flux = bisect_flux([&](double F) { return inner_value(F) + phi_p_inverse(F, p) * tail - lim->b; });
            v0 = inner_value(flux);
        }
    } else {
        if (p < d)
            throw OracleError("shoot_radial: growth far field requires p >= d");
        const double c = std::get<GrowthCoefficient>(bvp.far).c;
        // r^{d-1} Phi(c mu_p'(r)) is the same at every radius; evaluate at the outer node.
        const double R = grid.outer_radius();
        flux = std::pow(R, d - 1) * phi_p(c * mu_radial_derivative(e, R), p);
        if (flux_free && flux != 0.0)
            throw OracleError("shoot_radial: flux-free hole with nonzero growth");
        if (flux_free)
            throw OracleError("shoot_radial: offset undetermined");
        v0 = inner_value(flux);
    }

    SampledProfile out;
    out.r = grid.radii();
    out.v.resize(shape.size());
    const double slope = phi_p_inverse(flux, p);
    for (std::size_t k = 0; k < shape.size(); ++k)
        out.v[k] = v0 + slope * shape[k];
    return out;
}

/// Samples of a closed-form profile at grid nodes.
inline SampledProfile sample_profile(const RadialProfile& v, const RadialGrid& grid)
{
    SampledProfile s;
    s.r = grid.radii();
    for (double r : s.r)
        s.v.push_back(v.eval(r));
    return s;
}

} // namespace pharm
