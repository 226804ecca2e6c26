#pragma once

// Truncated exterior p-harmonic problems solved by minimising the
// regularised energy
//
//     E(v) = int (eps^2 + |grad v|^2)^{p/2} / p dx + int_{Gamma_2} H(v) dH,
//     H(t) = int_0^t h(s) ds,
//
// over nodal fields that match the Dirichlet data on Gamma_1 and on the
// truncation circle |x| = R.  Works on annular meshes (d = 2) and on radial
// grids (any d, radially symmetric data).  Boundary integrals are lumped at
// the nodes (trapezoidal rule), matching integrate_boundary.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pharm/analytic.hpp"
#include "pharm/discretization.hpp"
#include "pharm/errors.hpp"
#include "pharm/quadrature.hpp"
#include "pharm/radial_bvp.hpp"

namespace pharm {

template <class Mesh>
struct mesh_traits;

template <>
struct mesh_traits<AnnularMesh2D> {
    using field_type = ScalarField;
    static constexpr int dim = 2;
    static constexpr int nodes_per_cell = 4;
};

template <>
struct mesh_traits<RadialGrid> {
    using field_type = RadialField;
    static constexpr int dim = 1;
    static constexpr int nodes_per_cell = 2;
};

/// Closed arc [theta_begin, theta_end] of the hole circle carrying one law.
/// Dirichlet arcs form Gamma_1; a node on the seam between a Dirichlet arc
/// and any other arc is Dirichlet.
struct InnerSegment {
    double theta_begin = 0.0;
    double theta_end = 2.0 * std::numbers::pi;
    BoundaryLaw law = NeumannZero{};
};

struct SolverOptions {
    double tau_g = 1e-10;           ///< Euclidean norm of the free-node energy gradient
    double tau_x = 1e-15;           ///< relative max-norm step below which Newton has stalled
    int max_iterations = 200;       ///< per continuation stage
    std::vector<double> epsilon_schedule{1e-1, 1e-3, 1e-6};
    int quadrature_order = 2;
    bool p_continuation = true;     ///< harmonic start, then steps of 1 in p
    std::size_t residual_probes = 20;
};

template <class Mesh>
struct ProblemSpec {
    std::shared_ptr<const Mesh> mesh;
    PExponents exps = PExponents::make(2.0, 2);
    std::vector<InnerSegment> inner{InnerSegment{}};
    double outer_value = 0.0;       ///< Dirichlet value on the truncation circle
    double epsilon = 1e-6;
    SolverOptions options;
};

/// Dirichlet value at |x| = R that stands in for the far-field condition.
inline double truncation_value(const FarField& far, const PExponents& e, double R, double offset = 0.0)
{
    if (auto* l = std::get_if<Limit>(&far))
        return l->b;
    if (auto* o = std::get_if<OuterDirichlet>(&far)) {
        if (std::abs(o->R - R) > 1e-12 * R)
            throw ConfigError("outer Dirichlet radius does not match the truncation radius");
        return o->g;
    }
    return offset + std::get<GrowthCoefficient>(far).c * mu_eval(e, R);
}

struct StageSummary {
    double epsilon;
    double p;
    int iterations;
    double energy;
    double grad_norm;
};

struct TraceRow {
    int iter;
    double energy;
    double grad_norm;
    double step;
    double epsilon;
};

template <class Mesh>
struct SolveReport {
    using Field = typename mesh_traits<Mesh>::field_type;

    explicit SolveReport(Field f) : solution(std::move(f)) {}

    Field solution;
    double energy = 0.0;
    double grad_norm = 0.0;
    double grad_floor = 0.0;  ///< rounding floor; success means grad_norm <= max(tau_g, grad_floor)
    int iterations = 0;
    bool converged = false;
    bool energy_monotone = true;
    std::vector<StageSummary> stages;
    std::vector<TraceRow> trace;
    double weak_residual_max = 0.0;
    std::size_t weak_residual_probes = 0;
};

/// Non-convergence; carries the best iterate found.
template <class Mesh>
class NonConvergenceError : public SolverError {
public:
    NonConvergenceError(const std::string& what, SolveReport<Mesh> best)
        : SolverError(what), best_(std::make_shared<SolveReport<Mesh>>(std::move(best)))
    {
    }
    const SolveReport<Mesh>& best() const noexcept { return *best_; }

private:
    std::shared_ptr<SolveReport<Mesh>> best_;
};

namespace detail {

// For RobinPower with p < 2 the boundary potential alpha |v|^p / p is not C^2
// at 0.  It is smoothed with the same eps as the bulk term,
// H_eps(v) = alpha ((eps^2 + v^2)^{p/2} - eps^p) / p, so H_eps(0) = 0.
// The primitive is evaluated in expm1/log1p form to keep H_eps(0) exact.
inline const RobinPower* smoothed_robin(const BoundaryLaw& law, double p, double eps)
{
    const auto* r = std::get_if<RobinPower>(&law);
    return (r && p < 2.0 && eps > 0.0) ? r : nullptr;
}

inline double smoothed_primitive(const BoundaryLaw& law, double p, double v, double eps)
{
    if (const auto* r = smoothed_robin(law, p, eps)) {
        const double t = v / eps;
        return r->alpha * std::pow(eps, p) * std::expm1(0.5 * p * std::log1p(t * t)) / p;
    }
    return boundary_primitive(law, p, v);
}

inline double smoothed_flux(const BoundaryLaw& law, double p, double v, double eps)
{
    if (const auto* r = smoothed_robin(law, p, eps))
        return r->alpha * std::pow(eps * eps + v * v, 0.5 * (p - 2.0)) * v;
    return boundary_flux(law, p, v);
}

inline double smoothed_flux_derivative(const BoundaryLaw& law, double p, double v, double eps)
{
    if (const auto* r = smoothed_robin(law, p, eps)) {
        const double s = eps * eps + v * v;
        return r->alpha * std::pow(s, 0.5 * (p - 4.0)) * (eps * eps + (p - 1.0) * v * v);
    }
    return boundary_flux_derivative(law, p, v);
}

/// Flattened per-cell element data: node ids, quadrature weights and basis gradients.
template <int Dim, int K>
struct ElementTable {
    std::size_t nodes = 0;
    std::size_t cells = 0;
    std::size_t qp = 0;                 // per cell
    std::vector<std::size_t> cell_nodes; // cells * K
    std::vector<double> weight;          // cells * qp
    std::vector<double> dN;              // cells * qp * K * Dim

    const double* grads(std::size_t c, std::size_t q) const noexcept { return &dN[((c * qp) + q) * K * Dim]; }
};

inline ElementTable<2, 4> build_table(const AnnularMesh2D& m, int order)
{
    ElementTable<2, 4> t;
    const GaussRule& rule = gauss_rule(order);
    t.nodes = m.node_count();
    t.cells = m.cell_count();
    t.qp = rule.size() * rule.size();
    t.cell_nodes.resize(t.cells * 4);
    t.weight.resize(t.cells * t.qp);
    t.dN.resize(t.cells * t.qp * 8);
    const auto& radii = m.radii();
    for (std::size_t c = 0; c < t.cells; ++c) {
        const auto n = m.cell_nodes(c);
        std::copy(n.begin(), n.end(), t.cell_nodes.begin() + c * 4);
        const int i = m.cell_ring(c);
        const double dr = radii[i + 1] - radii[i];
        std::size_t q = 0;
        for (std::size_t a = 0; a < rule.size(); ++a)
            for (std::size_t b = 0; b < rule.size(); ++b, ++q) {
                const double xi = rule.nodes[a], eta = rule.nodes[b];
                const double r = radii[i] + xi * dr;
                t.weight[c * t.qp + q] = rule.weights[a] * rule.weights[b] * dr * m.dtheta() * r;
                const auto g = m.basis_gradients(c, xi, eta);
                double* out = &t.dN[(c * t.qp + q) * 8];
                for (int k = 0; k < 4; ++k) {
                    out[2 * k] = g[k][0];
                    out[2 * k + 1] = g[k][1];
                }
            }
    }
    return t;
}

inline ElementTable<1, 2> build_table(const RadialGrid& g, int order)
{
    ElementTable<1, 2> t;
    const GaussRule& rule = gauss_rule(std::max(order, 3));
    const auto& x = g.radii();
    const double w_d = omega_d(g.dimension());
    t.nodes = g.node_count();
    t.cells = g.cell_count();
    t.qp = rule.size();
    t.cell_nodes.resize(t.cells * 2);
    t.weight.resize(t.cells * t.qp);
    t.dN.resize(t.cells * t.qp * 2);
    for (std::size_t c = 0; c < t.cells; ++c) {
        t.cell_nodes[2 * c] = c;
        t.cell_nodes[2 * c + 1] = c + 1;
        const double h = x[c + 1] - x[c];
        for (std::size_t q = 0; q < t.qp; ++q) {
            const double r = x[c] + rule.nodes[q] * h;
            t.weight[c * t.qp + q] = rule.weights[q] * h * w_d * std::pow(r, g.dimension() - 1);
            t.dN[(c * t.qp + q) * 2] = -1.0 / h;
            t.dN[(c * t.qp + q) * 2 + 1] = 1.0 / h;
        }
    }
    return t;
}

struct BoundaryNode {
    std::size_t node;
    double weight;
    std::size_t law; // index into ProblemSpec::inner
};

} // namespace detail

/// Precomputed discrete problem: element table, constraints and boundary nodes.
template <class Mesh>
class DiscreteProblem {
public:
    static constexpr int Dim = mesh_traits<Mesh>::dim;
    static constexpr int K = mesh_traits<Mesh>::nodes_per_cell;
    using Field = typename mesh_traits<Mesh>::field_type;

    explicit DiscreteProblem(const ProblemSpec<Mesh>& spec) : spec_(spec)
    {
        validate_spec();
        table_ = detail::build_table(*spec_.mesh, spec_.options.quadrature_order);
        fixed_.assign(table_.nodes, false);
        fixed_value_.assign(table_.nodes, 0.0);
        classify_boundary();
        free_index_.assign(table_.nodes, -1);
        for (std::size_t k = 0; k < table_.nodes; ++k)
            if (!fixed_[k])
                free_index_[k] = static_cast<std::ptrdiff_t>(free_count_++);
    }

    const ProblemSpec<Mesh>& spec() const noexcept { return spec_; }
    std::size_t node_count() const noexcept { return table_.nodes; }
    std::size_t free_count() const noexcept { return free_count_; }
    bool is_fixed(std::size_t k) const noexcept { return fixed_[k]; }
    double fixed_value(std::size_t k) const noexcept { return fixed_value_[k]; }
    const std::vector<detail::BoundaryNode>& robin_nodes() const noexcept { return robin_; }
    const BoundaryLaw& law(std::size_t i) const noexcept { return spec_.inner[i].law; }

    void check_constraints(const std::vector<double>& u, const char* who) const
    {
        if (u.size() != table_.nodes)
            throw PreconditionError(std::string(who) + ": field size does not match the mesh");
        for (std::size_t k = 0; k < u.size(); ++k)
            if (fixed_[k] && std::abs(u[k] - fixed_value_[k]) > 1e-12 * std::max(1.0, std::abs(fixed_value_[k])))
                throw PreconditionError(std::string(who) + ": field violates a Dirichlet constraint at node "
                                        + std::to_string(k));
    }

    std::vector<double> constrained_start(double fill) const
    {
        std::vector<double> u(table_.nodes, fill);
        for (std::size_t k = 0; k < u.size(); ++k)
            if (fixed_[k])
                u[k] = fixed_value_[k];
        return u;
    }

    /// Regularised energy at exponent p (ProblemSpec p unless overridden).
    double energy(const std::vector<double>& u, double eps, double p) const
    {
        CompensatedSum acc;
        const double e2 = eps * eps;
        for (std::size_t c = 0; c < table_.cells; ++c)
            for (std::size_t q = 0; q < table_.qp; ++q) {
                double g[Dim];
                cell_gradient(u, c, q, g);
                acc += table_.weight[c * table_.qp + q] * std::pow(e2 + dot(g, g), 0.5 * p) / p;
            }
        for (const auto& b : robin_)
            acc += b.weight * detail::smoothed_primitive(law(b.law), p, u[b.node], eps);
        return acc.value();
    }

    /// Nodal gradient of the energy; zero at constrained nodes.
    std::vector<double> gradient(const std::vector<double>& u, double eps, double p) const
    {
        std::vector<double> out(table_.nodes, 0.0);
        const double e2 = eps * eps;
        for (std::size_t c = 0; c < table_.cells; ++c) {
            const std::size_t* nodes = &table_.cell_nodes[c * K];
            for (std::size_t q = 0; q < table_.qp; ++q) {
                double g[Dim];
                cell_gradient(u, c, q, g);
                const double s = e2 + dot(g, g);
                const double a = s > 0.0 ? std::pow(s, 0.5 * (p - 2.0)) : 0.0;
                const double w = table_.weight[c * table_.qp + q] * a;
                const double* dN = table_.grads(c, q);
                for (int k = 0; k < K; ++k)
                    out[nodes[k]] += w * dot(g, dN + k * Dim);
            }
        }
        for (const auto& b : robin_)
            out[b.node] += b.weight * detail::smoothed_flux(law(b.law), p, u[b.node], eps);
        for (std::size_t k = 0; k < out.size(); ++k)
            if (fixed_[k])
                out[k] = 0.0;
        return out;
    }

    /// Floating-point floor of the free-node gradient norm: first-order
    /// propagation of rounding in the nodal differences through the flux.
    double gradient_floor(const std::vector<double>& u, double eps, double p) const
    {
        constexpr double ulp = std::numeric_limits<double>::epsilon();
        std::vector<double> out(table_.nodes, 0.0);
        const double e2 = eps * eps;
        for (std::size_t c = 0; c < table_.cells; ++c) {
            const std::size_t* nodes = &table_.cell_nodes[c * K];
            for (std::size_t q = 0; q < table_.qp; ++q) {
                double g[Dim];
                cell_gradient(u, c, q, g);
                const double s = e2 + dot(g, g);
                const double* dN = table_.grads(c, q);
                double dg = 0.0;
                for (int k = 0; k < K; ++k) {
                    double len = 0.0;
                    for (int i = 0; i < Dim; ++i)
                        len += std::abs(dN[k * Dim + i]);
                    dg += std::abs(u[nodes[k]]) * len;
                }
                const double w = table_.weight[c * table_.qp + q] * std::max(1.0, p - 1.0)
                    * (s > 0.0 ? std::pow(s, 0.5 * (p - 2.0)) : 0.0) * ulp * dg;
                for (int k = 0; k < K; ++k) {
                    double len = 0.0;
                    for (int i = 0; i < Dim; ++i)
                        len += std::abs(dN[k * Dim + i]);
                    out[nodes[k]] += w * len;
                }
            }
        }
        for (const auto& b : robin_)
            out[b.node] += b.weight * ulp * std::abs(boundary_flux(law(b.law), p, u[b.node]));
        return 10.0 * free_norm(out);
    }

    /// Hessian restricted to the free nodes.
    Eigen::SparseMatrix<double> hessian(const std::vector<double>& u, double eps, double p) const
    {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(table_.cells * K * K + robin_.size());
        const double e2 = eps * eps;
        for (std::size_t c = 0; c < table_.cells; ++c) {
            const std::size_t* nodes = &table_.cell_nodes[c * K];
            double local[K][K] = {};
            for (std::size_t q = 0; q < table_.qp; ++q) {
                double g[Dim];
                cell_gradient(u, c, q, g);
                const double s = e2 + dot(g, g);
                const double wq = table_.weight[c * table_.qp + q];
                const double a = std::pow(s, 0.5 * (p - 2.0));
                const double b = (p - 2.0) * std::pow(s, 0.5 * (p - 4.0));
                const double* dN = table_.grads(c, q);
                double gd[K];
                for (int k = 0; k < K; ++k)
                    gd[k] = dot(g, dN + k * Dim);
                for (int k = 0; k < K; ++k)
                    for (int l = 0; l < K; ++l)
                        local[k][l] += wq * (a * dot(dN + k * Dim, dN + l * Dim) + b * gd[k] * gd[l]);
            }
            for (int k = 0; k < K; ++k) {
                const auto ik = free_index_[nodes[k]];
                if (ik < 0)
                    continue;
                for (int l = 0; l < K; ++l) {
                    const auto il = free_index_[nodes[l]];
                    if (il >= 0)
                        trip.emplace_back(ik, il, local[k][l]);
                }
            }
        }
        for (const auto& bn : robin_) {
            const auto i = free_index_[bn.node];
            const double hd = detail::smoothed_flux_derivative(law(bn.law), p, u[bn.node], eps);
            if (i >= 0 && std::isfinite(hd))
                trip.emplace_back(i, i, bn.weight * hd);
        }
        Eigen::SparseMatrix<double> H(static_cast<Eigen::Index>(free_count_), static_cast<Eigen::Index>(free_count_));
        H.setFromTriplets(trip.begin(), trip.end());
        return H;
    }

    /// Left side of the weak formulation with the unregularised flux.
    double weak_residual(const std::vector<double>& u, const std::vector<double>& test) const
    {
        const double p = spec_.exps.p();
        CompensatedSum acc;
        for (std::size_t c = 0; c < table_.cells; ++c) {
            const std::size_t* nodes = &table_.cell_nodes[c * K];
            for (std::size_t q = 0; q < table_.qp; ++q) {
                double g[Dim], gt[Dim];
                cell_gradient(u, c, q, g);
                cell_gradient(test, c, q, gt);
                const double s = std::sqrt(dot(g, g));
                if (s == 0.0)
                    continue;
                acc += table_.weight[c * table_.qp + q] * std::pow(s, p - 2.0) * dot(g, gt);
            }
            (void)nodes;
        }
        for (const auto& b : robin_)
            acc += b.weight * boundary_flux(law(b.law), p, u[b.node]) * test[b.node];
        return acc.value();
    }

    double free_norm(const std::vector<double>& g) const
    {
        CompensatedSum s;
        for (std::size_t k = 0; k < g.size(); ++k)
            if (!fixed_[k])
                s += g[k] * g[k];
        return std::sqrt(s.value());
    }

private:
    static double dot(const double* a, const double* b) noexcept
    {
        double s = 0.0;
        for (int i = 0; i < Dim; ++i)
            s += a[i] * b[i];
        return s;
    }

    void cell_gradient(const std::vector<double>& u, std::size_t c, std::size_t q, double* g) const noexcept
    {
        const std::size_t* nodes = &table_.cell_nodes[c * K];
        const double* dN = table_.grads(c, q);
        // differences against the first node keep constants exactly flat
        const double u0 = u[nodes[0]];
        for (int i = 0; i < Dim; ++i)
            g[i] = 0.0;
        for (int k = 1; k < K; ++k)
            for (int i = 0; i < Dim; ++i)
                g[i] += (u[nodes[k]] - u0) * dN[k * Dim + i];
    }

    void validate_spec() const
    {
        std::string err;
        if (!spec_.mesh)
            throw ConfigError("ProblemSpec: no mesh");
        if (!(spec_.epsilon > 0.0))
            err += "epsilon must be > 0; ";
        if (spec_.inner.empty())
            err += "the hole boundary needs at least one segment; ";
        if (!std::isfinite(spec_.outer_value))
            err += "outer Dirichlet value must be finite; ";
        if (!(spec_.options.tau_g > 0.0))
            err += "tau_g must be > 0; ";
        if (spec_.options.max_iterations < 1)
            err += "max_iterations must be >= 1; ";
        for (const auto& s : spec_.inner) {
            try {
                pharm::validate(s.law);
            } catch (const ConfigError& e) {
                err += std::string(e.what()) + "; ";
            }
            if (!(s.theta_end >= s.theta_begin))
                err += "segment end angle precedes its start; ";
        }
        if constexpr (std::is_same_v<Mesh, RadialGrid>) {
            if (spec_.inner.size() != 1)
                err += "a radial grid has a single hole boundary point, give exactly one segment; ";
            if (spec_.mesh->dimension() != spec_.exps.d())
                err += "radial grid dimension differs from d; ";
        } else {
            if (spec_.exps.d() != 2)
                err += "annular meshes are two-dimensional, d must be 2; ";
        }
        if (!err.empty())
            throw ConfigError("ProblemSpec: " + err.substr(0, err.size() - 2));
    }

    void classify_boundary()
    {
        const Mesh& m = *spec_.mesh;
        std::vector<std::size_t> outer;
        std::vector<std::pair<std::size_t, double>> inner; // node, theta
        double inner_weight = 0.0;
        if constexpr (std::is_same_v<Mesh, RadialGrid>) {
            inner.emplace_back(0, 0.0);
            inner_weight = m.sphere_measure(m.inner_radius());
            outer.push_back(m.node_count() - 1);
        } else {
            for (int j = 0; j < m.angular_count(); ++j) {
                inner.emplace_back(m.node(0, j), j * m.dtheta());
                outer.push_back(m.node(m.radial_layers(), j));
            }
            inner_weight = m.inner_radius() * m.dtheta();
        }
        for (std::size_t k : outer) {
            fixed_[k] = true;
            fixed_value_[k] = spec_.outer_value;
        }
        const double two_pi = 2.0 * std::numbers::pi;
        const double tol = 1e-12;
        for (auto [node, theta] : inner) {
            std::optional<std::size_t> chosen;
            for (std::size_t s = 0; s < spec_.inner.size(); ++s) {
                const auto& seg = spec_.inner[s];
                const bool hit = (theta >= seg.theta_begin - tol && theta <= seg.theta_end + tol)
                    || (theta + two_pi >= seg.theta_begin - tol && theta + two_pi <= seg.theta_end + tol)
                    || std::is_same_v<Mesh, RadialGrid>;
                if (!hit)
                    continue;
                if (!chosen || (is_dirichlet(seg.law) && !is_dirichlet(spec_.inner[*chosen].law)))
                    chosen = s;
            }
            if (!chosen)
                throw ConfigError("ProblemSpec: hole node at theta = " + std::to_string(theta)
                                  + " is not covered by any boundary segment");
            const auto& law = spec_.inner[*chosen].law;
            if (auto* d = std::get_if<DirichletValue>(&law)) {
                fixed_[node] = true;
                fixed_value_[node] = d->g;
            } else {
                robin_.push_back({node, inner_weight, *chosen});
            }
        }
    }

    ProblemSpec<Mesh> spec_;
    detail::ElementTable<Dim, K> table_;
    std::vector<bool> fixed_;
    std::vector<double> fixed_value_;
    std::vector<std::ptrdiff_t> free_index_;
    std::size_t free_count_ = 0;
    std::vector<detail::BoundaryNode> robin_;
};

namespace detail {

template <class Mesh>
typename mesh_traits<Mesh>::field_type make_field(const ProblemSpec<Mesh>& spec, std::vector<double> values)
{
    return typename mesh_traits<Mesh>::field_type(spec.mesh, std::move(values));
}

template <class Mesh>
const std::vector<double>& values_of(const typename mesh_traits<Mesh>::field_type& f)
{
    return f.values();
}

struct StageResult {
    int iterations = 0;
    double energy = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
    bool monotone = true;
    double floor = 0.0;
    std::string failure;
};

/// Damped Newton with Armijo backtracking; gradient descent when the
/// Newton system fails or does not give a descent direction.
template <class Mesh>
StageResult newton_stage(const DiscreteProblem<Mesh>& prob, std::vector<double>& u, double eps, double p,
                         double tol, int max_iter, double tau_x, std::vector<TraceRow>* trace, int& global_iter)
{
    StageResult res;
    const std::size_t n = prob.node_count();
    std::vector<std::size_t> free_nodes;
    for (std::size_t k = 0; k < n; ++k)
        if (!prob.is_fixed(k))
            free_nodes.push_back(k);

    double E = prob.energy(u, eps, p);
    auto g = prob.gradient(u, eps, p);
    double gn = prob.free_norm(g);
    auto reached = [&] {
        if (gn <= tol)
            return true;
        res.floor = prob.gradient_floor(u, eps, p);
        return gn <= res.floor;
    };
    if (trace)
        trace->push_back({global_iter, E, gn, 0.0, eps});
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    bool analyzed = false;

    for (int it = 0; it < max_iter && free_nodes.size() > 0; ++it) {
        if (reached()) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(free_nodes.size()));
        for (std::size_t i = 0; i < free_nodes.size(); ++i)
            rhs[static_cast<Eigen::Index>(i)] = -g[free_nodes[i]];

        Eigen::VectorXd dir;
        bool newton_ok = false;
        {
            const auto H = prob.hessian(u, eps, p);
            if (!analyzed) {
                ldlt.analyzePattern(H);
                analyzed = true;
            }
            ldlt.factorize(H);
            if (ldlt.info() == Eigen::Success) {
                dir = ldlt.solve(rhs);
                newton_ok = ldlt.info() == Eigen::Success && dir.allFinite() && dir.dot(rhs) > 0.0;
            }
        }
        if (!newton_ok)
            dir = rhs;

        auto try_direction = [&](const Eigen::VectorXd& d, double& t_out, std::vector<double>& u_out,
                                 double& E_out) {
            const double slope = -d.dot(rhs); // g . d < 0
            double t = 1.0;
            for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
                u_out = u;
                for (std::size_t i = 0; i < free_nodes.size(); ++i)
                    u_out[free_nodes[i]] += t * d[static_cast<Eigen::Index>(i)];
                E_out = prob.energy(u_out, eps, p);
                if (E_out <= E + 1e-4 * t * slope) {
                    t_out = t;
                    return true;
                }
                // rounding floor: accept a non-increasing step that reduces the gradient
                if (E_out - E <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(E)) {
                    const double gn_new = prob.free_norm(prob.gradient(u_out, eps, p));
                    if (gn_new < gn) {
                        t_out = t;
                        return true;
                    }
                }
            }
            return false;
        };

        double t = 0.0, E_new = 0.0;
        std::vector<double> u_new;
        bool ok = try_direction(dir, t, u_new, E_new);
        if (!ok && newton_ok) {
            dir = rhs;
            ok = try_direction(dir, t, u_new, E_new);
        }
        if (!ok) {
            std::ostringstream os;
            os << "line search failed at eps=" << eps << ", p=" << p << " with gradient norm " << gn;
            res.failure = os.str();
            break;
        }
        double step = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < free_nodes.size(); ++i) {
            step = std::max(step, std::abs(u_new[free_nodes[i]] - u[free_nodes[i]]));
            scale = std::max(scale, std::abs(u[free_nodes[i]]));
        }
        if (E_new > E)
            res.monotone = E_new - E <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(E);
        u.swap(u_new);
        E = E_new;
        g = prob.gradient(u, eps, p);
        gn = prob.free_norm(g);
        ++res.iterations;
        ++global_iter;
        if (trace)
            trace->push_back({global_iter, E, gn, step, eps});
        if (reached()) {
            res.converged = true;
            break;
        }
        if (step <= tau_x * std::max(1.0, scale)) {
            std::ostringstream os;
            os << "Newton stalled (step " << step << ") at eps=" << eps << ", p=" << p << " with gradient norm "
               << gn;
            res.failure = os.str();
            break;
        }
    }
    if (free_nodes.empty() || reached())
        res.converged = true;
    if (!res.converged && res.failure.empty()) {
        std::ostringstream os;
        os << "iteration cap " << max_iter << " reached at eps=" << eps << ", p=" << p << " with gradient norm "
           << gn;
        res.failure = os.str();
    }
    res.energy = E;
    res.grad_norm = gn;
    return res;
}

inline std::vector<double> epsilon_stages(const std::vector<double>& schedule, double eps)
{
    std::vector<double> out;
    for (double e : schedule)
        if (e > eps)
            out.push_back(e);
    std::sort(out.begin(), out.end(), std::greater<>());
    out.push_back(eps);
    return out;
}

} // namespace detail

template <class Mesh>
double energy(const ProblemSpec<Mesh>& spec, const typename mesh_traits<Mesh>::field_type& field)
{
    DiscreteProblem<Mesh> prob(spec);
    prob.check_constraints(field.values(), "energy");
    return prob.energy(field.values(), spec.epsilon, spec.exps.p());
}

/// Energy with an explicit regularisation (eps = 0 allowed for evaluation).
template <class Mesh>
double energy(const ProblemSpec<Mesh>& spec, const typename mesh_traits<Mesh>::field_type& field, double eps)
{
    DiscreteProblem<Mesh> prob(spec);
    prob.check_constraints(field.values(), "energy");
    return prob.energy(field.values(), eps, spec.exps.p());
}

template <class Mesh>
std::vector<double> energy_gradient(const ProblemSpec<Mesh>& spec, const typename mesh_traits<Mesh>::field_type& field)
{
    DiscreteProblem<Mesh> prob(spec);
    prob.check_constraints(field.values(), "energy_gradient");
    return prob.gradient(field.values(), spec.epsilon, spec.exps.p());
}

/// Left side of the weak formulation for a test field vanishing on Gamma_1
/// and on the truncation circle.
template <class Mesh>
double weak_residual(const ProblemSpec<Mesh>& spec, const typename mesh_traits<Mesh>::field_type& field,
                     const typename mesh_traits<Mesh>::field_type& test)
{
    DiscreteProblem<Mesh> prob(spec);
    if (test.size() != prob.node_count() || field.size() != prob.node_count())
        throw PreconditionError("weak_residual: field size does not match the mesh");
    for (std::size_t k = 0; k < test.size(); ++k)
        if (prob.is_fixed(k) && test.values()[k] != 0.0)
            throw PreconditionError("weak_residual: test field must vanish on Gamma_1 and the truncation circle");
    return prob.weak_residual(field.values(), test.values());
}

/// Initial field: harmonic solve, then unit steps in p towards the target.
template <class Mesh>
typename mesh_traits<Mesh>::field_type default_initial_field(const ProblemSpec<Mesh>& spec)
{
    DiscreteProblem<Mesh> prob(spec);
    double fill = spec.outer_value;
    auto u = prob.constrained_start(fill);
    int it = 0;
    const double p = spec.exps.p();
    const double eps0 = detail::epsilon_stages(spec.options.epsilon_schedule, spec.epsilon).front();
    const double loose = std::max(spec.options.tau_g, 1e-8);
    detail::newton_stage(prob, u, eps0, 2.0, loose, spec.options.max_iterations, spec.options.tau_x, nullptr, it);
    if (spec.options.p_continuation && std::abs(p - 2.0) > 1.0) {
        const double dir = p > 2.0 ? 1.0 : -1.0;
        for (double q = 2.0 + dir; dir * (p - q) > 0.0; q += dir)
            detail::newton_stage(prob, u, eps0, q, loose, spec.options.max_iterations, spec.options.tau_x, nullptr, it);
    }
    return detail::make_field(spec, std::move(u));
}

/// Random unit-norm test fields supported on the free nodes (fixed seed).
template <class Mesh>
std::vector<typename mesh_traits<Mesh>::field_type> random_test_fields(const ProblemSpec<Mesh>& spec, std::size_t count,
                                                                      std::uint64_t seed = 2024)
{
    DiscreteProblem<Mesh> prob(spec);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<typename mesh_traits<Mesh>::field_type> out;
    for (std::size_t s = 0; s < count; ++s) {
        std::vector<double> t(prob.node_count(), 0.0);
        double n2 = 0.0;
        for (std::size_t k = 0; k < t.size(); ++k)
            if (!prob.is_fixed(k)) {
                t[k] = nd(rng);
                n2 += t[k] * t[k];
            }
        if (n2 > 0.0)
            for (double& x : t)
                x /= std::sqrt(n2);
        out.push_back(detail::make_field(spec, std::move(t)));
    }
    return out;
}

/// Minimise the regularised energy with epsilon continuation.
template <class Mesh>
SolveReport<Mesh> solve(const ProblemSpec<Mesh>& spec, std::optional<typename mesh_traits<Mesh>::field_type> initial = {})
{
    DiscreteProblem<Mesh> prob(spec);
    std::vector<double> u;
    if (initial) {
        u = initial->values();
        if (u.size() != prob.node_count())
            throw PreconditionError("solve: initial field size does not match the mesh");
        for (std::size_t k = 0; k < u.size(); ++k)
            if (prob.is_fixed(k))
                u[k] = prob.fixed_value(k);
    } else {
        u = default_initial_field(spec).values();
    }

    SolveReport<Mesh> report(detail::make_field(spec, u));
    int global_iter = 0;
    const double p = spec.exps.p();
    const auto stages = detail::epsilon_stages(spec.options.epsilon_schedule, spec.epsilon);
    std::string failure;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        const bool last = s + 1 == stages.size();
        const double tol = last ? spec.options.tau_g : std::max(spec.options.tau_g, 1e-8);
        auto r = detail::newton_stage(prob, u, stages[s], p, tol, spec.options.max_iterations, spec.options.tau_x,
                                      &report.trace, global_iter);
        report.stages.push_back({stages[s], p, r.iterations, r.energy, r.grad_norm});
        report.energy_monotone = report.energy_monotone && r.monotone;
        report.iterations += r.iterations;
        report.energy = r.energy;
        report.grad_norm = r.grad_norm;
        report.grad_floor = r.floor;
        if (last && !r.converged)
            failure = r.failure;
    }
    report.solution = detail::make_field(spec, u);
    report.converged = failure.empty();

    double worst = 0.0;
    const auto tests = random_test_fields(spec, spec.options.residual_probes);
    for (const auto& t : tests)
        worst = std::max(worst, std::abs(prob.weak_residual(u, t.values())));
    report.weak_residual_max = worst;
    report.weak_residual_probes = tests.size();

    if (!report.converged)
        throw NonConvergenceError<Mesh>("solve: " + failure, std::move(report));
    return report;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace)
{
    os << "iter,energy,grad_norm,step,epsilon\n";
    for (const auto& t : trace)
        os << t.iter << ',' << format_number(t.energy) << ',' << format_number(t.grad_norm) << ','
           << format_number(t.step) << ',' << format_number(t.epsilon) << '\n';
}

} // namespace pharm
