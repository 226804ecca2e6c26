#pragma once

// Annular meshes for d = 2, radial grids for any d, nodal fields on both,
// quadrature and circle sampling.
//
// Cells of the annular mesh are exact polar rectangles [r_i, r_{i+1}] x
// [theta_j, theta_{j+1}], so areas and boundary circles are fitted exactly.
// A nodal field is represented on each cell by the bilinear (Q1) element of
// the straight-sided quadrilateral through the same four nodes, transported
// to the polar cell through shared reference coordinates.  Gradients are the
// Q1 gradients, hence exact for fields affine in Cartesian coordinates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pharm/analytic.hpp"
#include "pharm/errors.hpp"
#include "pharm/quadrature.hpp"

namespace pharm {

using Vec2 = std::array<double, 2>;

inline double norm(const Vec2& v) noexcept { return std::hypot(v[0], v[1]); }

enum class Circle { Inner, Outer };

inline Circle parse_circle(const std::string& name)
{
    if (name == "inner")
        return Circle::Inner;
    if (name == "outer")
        return Circle::Outer;
    throw ConfigError("unknown circle selector '" + name + "' (expected inner or outer)");
}

/// r_in = r_0 < ... < r_n = R with spacings growing by `grading` per layer.
inline std::vector<double> graded_radii(double r_in, double r_out, int layers, double grading)
{
    std::vector<double> radii(layers + 1);
    double total = 0.0, h = 1.0;
    for (int k = 0; k < layers; ++k, h *= grading)
        total += h;
    const double h0 = (r_out - r_in) / total;
    radii[0] = r_in;
    h = h0;
    for (int k = 1; k < layers; ++k, h *= grading)
        radii[k] = radii[k - 1] + h;
    radii[layers] = r_out;
    return radii;
}

class AnnularMesh2D {
public:
    /// n_r radial cell layers (n_r + 1 node rings), n_theta nodes per ring.
    static AnnularMesh2D build(double r_in, double r_out, int n_r, int n_theta, double grading)
    {
        std::string err;
        if (!(r_in > 0.0))
            err += "inner radius must be > 0; ";
        if (!(r_out > r_in))
            err += "outer radius must exceed inner radius; ";
        if (n_r < 2)
            err += "n_r must be >= 2; ";
        if (n_theta < 8)
            err += "n_theta must be >= 8; ";
        if (!(grading >= 1.0) || !std::isfinite(grading))
            err += "grading must be >= 1; ";
        if (!err.empty())
            throw ConfigError("build_annular_mesh: " + err.substr(0, err.size() - 2));
        AnnularMesh2D m;
        m.grading_ = grading;
        m.n_theta_ = n_theta;
        m.radii_ = graded_radii(r_in, r_out, n_r, grading);
        m.dtheta_ = 2.0 * std::numbers::pi / n_theta;
        m.cos_.resize(n_theta);
        m.sin_.resize(n_theta);
        for (int j = 0; j < n_theta; ++j) {
            m.cos_[j] = std::cos(j * m.dtheta_);
            m.sin_[j] = std::sin(j * m.dtheta_);
        }
        return m;
    }

    double inner_radius() const noexcept { return radii_.front(); }
    double outer_radius() const noexcept { return radii_.back(); }
    double grading() const noexcept { return grading_; }
    int radial_layers() const noexcept { return static_cast<int>(radii_.size()) - 1; }
    int angular_count() const noexcept { return n_theta_; }
    double dtheta() const noexcept { return dtheta_; }
    const std::vector<double>& radii() const noexcept { return radii_; }

    std::size_t node_count() const noexcept { return radii_.size() * n_theta_; }
    std::size_t cell_count() const noexcept { return radial_layers() * static_cast<std::size_t>(n_theta_); }

    std::size_t node(int ring, int j) const noexcept
    {
        j %= n_theta_;
        if (j < 0)
            j += n_theta_;
        return static_cast<std::size_t>(ring) * n_theta_ + j;
    }
    int node_ring(std::size_t k) const noexcept { return static_cast<int>(k / n_theta_); }
    int node_angle_index(std::size_t k) const noexcept { return static_cast<int>(k % n_theta_); }
    double node_radius(std::size_t k) const noexcept { return radii_[node_ring(k)]; }
    double node_theta(std::size_t k) const noexcept { return node_angle_index(k) * dtheta_; }

    Vec2 node_position(std::size_t k) const noexcept
    {
        const double r = node_radius(k);
        const int j = node_angle_index(k);
        return {r * cos_[j], r * sin_[j]};
    }

    bool on_circle(std::size_t k, Circle c) const noexcept
    {
        return node_ring(k) == (c == Circle::Inner ? 0 : radial_layers());
    }

    /// Cell c = ring * n_theta + j covers [r_ring, r_ring+1] x [theta_j, theta_j+1].
    int cell_ring(std::size_t c) const noexcept { return static_cast<int>(c / n_theta_); }
    int cell_angle_index(std::size_t c) const noexcept { return static_cast<int>(c % n_theta_); }

    /// Counter-clockwise in reference coordinates: (0,0), (1,0), (1,1), (0,1).
    std::array<std::size_t, 4> cell_nodes(std::size_t c) const noexcept
    {
        const int i = cell_ring(c), j = cell_angle_index(c);
        return {node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)};
    }

    double cell_area(std::size_t c) const noexcept
    {
        const int i = cell_ring(c);
        return 0.5 * (radii_[i + 1] * radii_[i + 1] - radii_[i] * radii_[i]) * dtheta_;
    }

    /// Locate (r, theta): returns the cell and reference coordinates.
    struct Location {
        std::size_t cell;
        double xi;
        double eta;
    };

    Location locate(double r, double theta) const
    {
        const double tol = 1e-12 * outer_radius();
        if (r < inner_radius() - tol || r > outer_radius() + tol)
            throw DomainError("radius " + std::to_string(r) + " outside the mesh");
        r = std::clamp(r, inner_radius(), outer_radius());
        auto it = std::upper_bound(radii_.begin(), radii_.end(), r);
        int i = static_cast<int>(it - radii_.begin()) - 1;
        i = std::clamp(i, 0, radial_layers() - 1);
        double t = std::fmod(theta, 2.0 * std::numbers::pi);
        if (t < 0.0)
            t += 2.0 * std::numbers::pi;
        int j = std::min(static_cast<int>(t / dtheta_), n_theta_ - 1);
        return {static_cast<std::size_t>(i) * n_theta_ + j, (r - radii_[i]) / (radii_[i + 1] - radii_[i]),
                (t - j * dtheta_) / dtheta_};
    }

    /// Physical point of reference coordinates (xi, eta) on the polar cell.
    Vec2 polar_point(std::size_t c, double xi, double eta) const noexcept
    {
        const int i = cell_ring(c), j = cell_angle_index(c);
        const double r = radii_[i] + xi * (radii_[i + 1] - radii_[i]);
        const double th = (j + eta) * dtheta_;
        return {r * std::cos(th), r * std::sin(th)};
    }

    /// Q1 basis gradients of the straight quadrilateral at (xi, eta).
    std::array<Vec2, 4> basis_gradients(std::size_t c, double xi, double eta) const noexcept
    {
        const auto nodes = cell_nodes(c);
        std::array<Vec2, 4> p;
        for (int k = 0; k < 4; ++k)
            p[k] = node_position(nodes[k]);
        // reference derivatives of N00, N10, N11, N01
        const double dxi[4] = {-(1 - eta), (1 - eta), eta, -eta};
        const double deta[4] = {-(1 - xi), -xi, xi, (1 - xi)};
        double j11 = 0, j12 = 0, j21 = 0, j22 = 0;
        for (int k = 0; k < 4; ++k) {
            j11 += p[k][0] * dxi[k];
            j12 += p[k][0] * deta[k];
            j21 += p[k][1] * dxi[k];
            j22 += p[k][1] * deta[k];
        }
        const double det = j11 * j22 - j12 * j21;
        std::array<Vec2, 4> g;
        for (int k = 0; k < 4; ++k) {
            // J^{-T} (dxi, deta)
            g[k][0] = (j22 * dxi[k] - j21 * deta[k]) / det;
            g[k][1] = (-j12 * dxi[k] + j11 * deta[k]) / det;
        }
        return g;
    }

    static std::array<double, 4> basis_values(double xi, double eta) noexcept
    {
        return {(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta};
    }

private:
    AnnularMesh2D() = default;

    std::vector<double> radii_;
    std::vector<double> cos_, sin_;
    int n_theta_ = 0;
    double dtheta_ = 0.0;
    double grading_ = 1.0;
};

inline AnnularMesh2D build_annular_mesh(double r_in, double r_out, int n_r, int n_theta, double grading)
{
    return AnnularMesh2D::build(r_in, r_out, n_r, n_theta, grading);
}

/// Tensor Gauss point on a polar cell, carrying its physical data.
struct QuadPoint {
    std::size_t cell;
    double xi;
    double eta;
    Vec2 x;
    double r;
    double weight;
};

/// Tensor Gauss quadrature of `integrand(const QuadPoint&)` over the annulus,
/// restricted radially to [r_lo, r_hi] (cells straddling a cut radius are
/// split exactly, since r depends on xi alone).
template <class F>
double integrate_window(const AnnularMesh2D& mesh, double r_lo, double r_hi, F&& integrand, int order = 2)
{
    const GaussRule& rule = gauss_rule(order);
    const auto& radii = mesh.radii();
    const double dth = mesh.dtheta();
    CompensatedSum acc;
    for (std::size_t c = 0; c < mesh.cell_count(); ++c) {
        const int i = mesh.cell_ring(c);
        const double ra = radii[i], rb = radii[i + 1];
        const double lo = std::max(ra, r_lo), hi = std::min(rb, r_hi);
        if (!(hi > lo))
            continue;
        const double xi0 = (lo - ra) / (rb - ra), xi1 = (hi - ra) / (rb - ra);
        const int j = mesh.cell_angle_index(c);
        for (std::size_t a = 0; a < rule.size(); ++a) {
            const double xi = xi0 + rule.nodes[a] * (xi1 - xi0);
            const double r = ra + xi * (rb - ra);
            for (std::size_t b = 0; b < rule.size(); ++b) {
                const double eta = rule.nodes[b];
                const double th = (j + eta) * dth;
                QuadPoint qp{c, xi, eta, {r * std::cos(th), r * std::sin(th)}, r,
                             rule.weights[a] * rule.weights[b] * (hi - lo) * dth * r};
                acc += qp.weight * integrand(qp);
            }
        }
    }
    return acc.value();
}

template <class F>
double integrate(const AnnularMesh2D& mesh, F&& integrand, int order = 2)
{
    return integrate_window(mesh, mesh.inner_radius(), mesh.outer_radius(), std::forward<F>(integrand), order);
}

/// Trapezoidal rule over the nodes of one boundary circle: sum f(node) * r * dtheta.
template <class F>
double integrate_boundary(const AnnularMesh2D& mesh, Circle circle, F&& integrand)
{
    const int ring = circle == Circle::Inner ? 0 : mesh.radial_layers();
    const double r = mesh.radii()[ring];
    CompensatedSum acc;
    for (int j = 0; j < mesh.angular_count(); ++j)
        acc += integrand(mesh.node(ring, j));
    return acc.value() * r * mesh.dtheta();
}

/// Nodal values on an annular mesh.
class ScalarField {
public:
    ScalarField(std::shared_ptr<const AnnularMesh2D> mesh, std::vector<double> values)
        : mesh_(std::move(mesh)), values_(std::move(values))
    {
        if (!mesh_)
            throw PreconditionError("ScalarField: null mesh");
        if (values_.size() != mesh_->node_count())
            throw PreconditionError("ScalarField: value count does not match node count");
        for (double v : values_)
            if (!std::isfinite(v))
                throw PreconditionError("ScalarField: non-finite nodal value");
    }

    template <class F>
    static ScalarField interpolate(std::shared_ptr<const AnnularMesh2D> mesh, F&& f)
    {
        std::vector<double> v(mesh->node_count());
        for (std::size_t k = 0; k < v.size(); ++k)
            v[k] = f(mesh->node_position(k));
        return ScalarField(std::move(mesh), std::move(v));
    }

    const AnnularMesh2D& mesh() const noexcept { return *mesh_; }
    const std::shared_ptr<const AnnularMesh2D>& mesh_ptr() const noexcept { return mesh_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t k) const noexcept { return values_[k]; }

    double value(std::size_t cell, double xi, double eta) const noexcept
    {
        const auto n = mesh_->cell_nodes(cell);
        const auto w = AnnularMesh2D::basis_values(xi, eta);
        const double u0 = values_[n[0]];
        double s = 0.0;
        for (int k = 1; k < 4; ++k)
            s += w[k] * (values_[n[k]] - u0);
        return u0 + s;
    }

    Vec2 gradient(std::size_t cell, double xi, double eta) const noexcept
    {
        const auto n = mesh_->cell_nodes(cell);
        const auto g = mesh_->basis_gradients(cell, xi, eta);
        const double u0 = values_[n[0]];
        Vec2 s{0.0, 0.0};
        for (int k = 1; k < 4; ++k) {
            s[0] += g[k][0] * (values_[n[k]] - u0);
            s[1] += g[k][1] * (values_[n[k]] - u0);
        }
        return s;
    }

    double value(const QuadPoint& qp) const noexcept { return value(qp.cell, qp.xi, qp.eta); }
    Vec2 gradient(const QuadPoint& qp) const noexcept { return gradient(qp.cell, qp.xi, qp.eta); }

    double value_at(double r, double theta) const
    {
        const auto loc = mesh_->locate(r, theta);
        return value(loc.cell, loc.xi, loc.eta);
    }

    double max_abs() const noexcept
    {
        double m = 0.0;
        for (double v : values_)
            m = std::max(m, std::abs(v));
        return m;
    }

private:
    std::shared_ptr<const AnnularMesh2D> mesh_;
    std::vector<double> values_;
};

/// Per-cell gradient, evaluated at the cell's reference centre.
inline std::vector<Vec2> gradient(const ScalarField& field)
{
    std::vector<Vec2> g(field.mesh().cell_count());
    for (std::size_t c = 0; c < g.size(); ++c)
        g[c] = field.gradient(c, 0.5, 0.5);
    return g;
}

/// Strictly increasing radii r_in = r_0 < ... < r_N in dimension d (radial symmetry).
class RadialGrid {
public:
    RadialGrid(int d, std::vector<double> radii) : d_(d), radii_(std::move(radii))
    {
        if (d_ < 2)
            throw ConfigError("RadialGrid: dimension must be >= 2");
        if (radii_.size() < 3)
            throw ConfigError("RadialGrid: need at least 3 radii (N >= 2)");
        if (!(radii_.front() > 0.0))
            throw ConfigError("RadialGrid: radii must be positive");
        for (std::size_t k = 1; k < radii_.size(); ++k)
            if (!(radii_[k] > radii_[k - 1]))
                throw ConfigError("RadialGrid: radii must be strictly increasing");
    }

    static RadialGrid geometric(int d, double r_in, double r_out, int intervals, double grading)
    {
        if (!(r_in > 0.0) || !(r_out > r_in) || intervals < 2 || !(grading >= 1.0))
            throw ConfigError("RadialGrid::geometric: invalid parameters");
        return RadialGrid(d, graded_radii(r_in, r_out, intervals, grading));
    }

    int dimension() const noexcept { return d_; }
    const std::vector<double>& radii() const noexcept { return radii_; }
    std::size_t node_count() const noexcept { return radii_.size(); }
    std::size_t cell_count() const noexcept { return radii_.size() - 1; }
    double inner_radius() const noexcept { return radii_.front(); }
    double outer_radius() const noexcept { return radii_.back(); }

    /// Surface measure of the sphere of radius r: omega_d r^{d-1}.
    double sphere_measure(double r) const { return omega_d(d_) * std::pow(r, d_ - 1); }

    std::size_t locate(double r) const
    {
        const double tol = 1e-12 * outer_radius();
        if (r < inner_radius() - tol || r > outer_radius() + tol)
            throw DomainError("radius " + std::to_string(r) + " outside the radial grid");
        auto it = std::upper_bound(radii_.begin(), radii_.end(), r);
        const auto i = static_cast<std::ptrdiff_t>(it - radii_.begin()) - 1;
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(cell_count()) - 1));
    }

private:
    int d_;
    std::vector<double> radii_;
};

/// Piecewise-linear radial field on a RadialGrid.
class RadialField {
public:
    RadialField(std::shared_ptr<const RadialGrid> grid, std::vector<double> values)
        : grid_(std::move(grid)), values_(std::move(values))
    {
        if (!grid_)
            throw PreconditionError("RadialField: null grid");
        if (values_.size() != grid_->node_count())
            throw PreconditionError("RadialField: value count does not match node count");
        for (double v : values_)
            if (!std::isfinite(v))
                throw PreconditionError("RadialField: non-finite nodal value");
    }

    template <class F>
    static RadialField interpolate(std::shared_ptr<const RadialGrid> grid, F&& f)
    {
        std::vector<double> v(grid->node_count());
        for (std::size_t k = 0; k < v.size(); ++k)
            v[k] = f(grid->radii()[k]);
        return RadialField(std::move(grid), std::move(v));
    }

    const RadialGrid& grid() const noexcept { return *grid_; }
    const std::shared_ptr<const RadialGrid>& grid_ptr() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t k) const noexcept { return values_[k]; }

    double value_at(double r) const
    {
        const std::size_t i = grid_->locate(r);
        const auto& x = grid_->radii();
        const double t = (r - x[i]) / (x[i + 1] - x[i]);
        return values_[i] + t * (values_[i + 1] - values_[i]);
    }

    double slope(std::size_t cell) const noexcept
    {
        const auto& x = grid_->radii();
        return (values_[cell + 1] - values_[cell]) / (x[cell + 1] - x[cell]);
    }

    double max_abs() const noexcept
    {
        double m = 0.0;
        for (double v : values_)
            m = std::max(m, std::abs(v));
        return m;
    }

private:
    std::shared_ptr<const RadialGrid> grid_;
    std::vector<double> values_;
};

/// Radially symmetric closed-form field (value and radial derivative) in R^d.
struct AnalyticRadialField {
    int d;
    std::function<double(double)> value;
    std::function<double(double)> derivative;
    double r_min;
    double r_max;

    static AnalyticRadialField from_profile(const RadialProfile& v, double r_min, double r_max)
    {
        return {v.exps.d(), [v](double r) { return v.eval(r); }, [v](double r) { return v.derivative(r); },
                r_min, r_max};
    }
};

/// Sample seen by window integrands: quadrature weight, radius, value, |grad v|.
struct FieldPoint {
    double weight;
    double r;
    double value;
    double grad_norm;
};

/// Integrate f(FieldPoint) over { r_lo <= |x| <= r_hi } intersected with the domain.
template <class F>
double integrate_field_window(const ScalarField& v, double r_lo, double r_hi, F&& f, int order = 4)
{
    return integrate_window(
        v.mesh(), r_lo, r_hi,
        [&](const QuadPoint& qp) {
            return f(FieldPoint{qp.weight, qp.r, v.value(qp), norm(v.gradient(qp))});
        },
        order);
}

template <class F>
double integrate_field_window(const RadialField& v, double r_lo, double r_hi, F&& f, int order = 4)
{
    const GaussRule& rule = gauss_rule(order);
    const auto& x = v.grid().radii();
    const double w_d = omega_d(v.grid().dimension());
    const int d = v.grid().dimension();
    CompensatedSum acc;
    for (std::size_t c = 0; c < v.grid().cell_count(); ++c) {
        const double lo = std::max(x[c], r_lo), hi = std::min(x[c + 1], r_hi);
        if (!(hi > lo))
            continue;
        const double g = std::abs(v.slope(c));
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double r = lo + rule.nodes[q] * (hi - lo);
            const double t = (r - x[c]) / (x[c + 1] - x[c]);
            const double val = v[c] + t * (v[c + 1] - v[c]);
            const double w = rule.weights[q] * (hi - lo) * w_d * std::pow(r, d - 1);
            acc += w * f(FieldPoint{w, r, val, g});
        }
    }
    return acc.value();
}

template <class F>
double integrate_field_window(const AnalyticRadialField& v, double r_lo, double r_hi, F&& f, int order = 8)
{
    const double lo = std::max(v.r_min, r_lo), hi = std::min(v.r_max, r_hi);
    if (!(hi > lo))
        return 0.0;
    const double w_d = omega_d(v.d);
    const GaussRule& rule = gauss_rule(order);
    // geometric panels resolve power-law integrands uniformly in log r
    const int panels = 64;
    const double ratio = std::pow(hi / lo, 1.0 / panels);
    CompensatedSum acc;
    double a = lo;
    for (int k = 0; k < panels; ++k) {
        const double b = (k == panels - 1) ? hi : a * ratio;
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double r = a + rule.nodes[q] * (b - a);
            const double w = rule.weights[q] * (b - a) * w_d * std::pow(r, v.d - 1);
            acc += w * f(FieldPoint{w, r, v.value(r), std::abs(v.derivative(r))});
        }
        a = b;
    }
    return acc.value();
}

inline double domain_inner_radius(const ScalarField& v) { return v.mesh().inner_radius(); }
inline double domain_inner_radius(const RadialField& v) { return v.grid().inner_radius(); }
inline double domain_inner_radius(const AnalyticRadialField& v) { return v.r_min; }
inline double domain_outer_radius(const ScalarField& v) { return v.mesh().outer_radius(); }
inline double domain_outer_radius(const RadialField& v) { return v.grid().outer_radius(); }
inline double domain_outer_radius(const AnalyticRadialField& v) { return v.r_max; }
inline int domain_dimension(const ScalarField&) { return 2; }
inline int domain_dimension(const RadialField& v) { return v.grid().dimension(); }
inline int domain_dimension(const AnalyticRadialField& v) { return v.d; }

/// Per-radius circle mean of v and max of |v|.
struct AnnulusSamples {
    std::vector<double> radii;
    std::vector<double> mean;
    std::vector<double> max_abs;
};

namespace detail {

template <class Eval>
AnnulusSamples sample_circles(std::span<const double> radii, int per_circle, Eval&& eval)
{
    if (per_circle < 1)
        throw PreconditionError("sample_on_annuli: need at least one sample per circle");
    AnnulusSamples s;
    for (double r : radii) {
        CompensatedSum sum;
        double mx = 0.0;
        for (int k = 0; k < per_circle; ++k) {
            const double v = eval(r, 2.0 * std::numbers::pi * k / per_circle);
            sum += v;
            mx = std::max(mx, std::abs(v));
        }
        s.radii.push_back(r);
        s.mean.push_back(sum.value() / per_circle);
        s.max_abs.push_back(mx);
    }
    return s;
}

} // namespace detail

inline AnnulusSamples sample_on_annuli(const ScalarField& v, std::span<const double> radii, int per_circle = 64)
{
    return detail::sample_circles(radii, per_circle, [&](double r, double th) { return v.value_at(r, th); });
}

inline AnnulusSamples sample_on_annuli(const RadialField& v, std::span<const double> radii, int per_circle = 1)
{
    return detail::sample_circles(radii, per_circle, [&](double r, double) { return v.value_at(r); });
}

inline AnnulusSamples sample_on_annuli(const RadialProfile& v, std::span<const double> radii, int per_circle = 1)
{
    return detail::sample_circles(radii, per_circle, [&](double r, double) { return v.eval(r); });
}

inline AnnulusSamples sample_on_annuli(const AnalyticRadialField& v, std::span<const double> radii,
                                       int per_circle = 1)
{
    return detail::sample_circles(radii, per_circle, [&](double r, double) {
        if (r < v.r_min || r > v.r_max)
            throw DomainError("radius " + std::to_string(r) + " outside the field's domain");
        return v.value(r);
    });
}

/// Dyadic radii r0, 2 r0, ..., 2^{n-1} r0.
inline std::vector<double> dyadic_radii(double r0, int n)
{
    std::vector<double> r(n);
    for (int k = 0; k < n; ++k)
        r[k] = std::ldexp(r0, k);
    return r;
}

/// Shortest decimal text that round-trips a double (17 significant digits).
inline std::string format_number(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_csv(std::ostream& os, const ScalarField& v)
{
    os << "r,theta,value\n";
    const auto& m = v.mesh();
    for (std::size_t k = 0; k < v.size(); ++k)
        os << format_number(m.node_radius(k)) << ',' << format_number(m.node_theta(k)) << ','
           << format_number(v[k]) << '\n';
}

inline void write_csv(std::ostream& os, const RadialField& v)
{
    os << "r,value\n";
    for (std::size_t k = 0; k < v.size(); ++k)
        os << format_number(v.grid().radii()[k]) << ',' << format_number(v[k]) << '\n';
}

} // namespace pharm
