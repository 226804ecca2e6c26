#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pharm/energy_solver.hpp"
#include "pharm/verification.hpp"

using namespace pharm;

namespace {

constexpr double pi = std::numbers::pi;

AnnulusSamples synthetic(std::vector<double> radii, const std::function<double(double)>& f)
{
    AnnulusSamples s;
    s.radii = std::move(radii);
    for (double r : s.radii) {
        s.mean.push_back(f(r));
        s.max_abs.push_back(std::abs(f(r)));
    }
    return s;
}

std::shared_ptr<const AnnularMesh2D> annulus(double r_in, double R, int n_r, int n_theta, double grading = 1.0)
{
    return std::make_shared<const AnnularMesh2D>(build_annular_mesh(r_in, R, n_r, n_theta, grading));
}

} // namespace

TEST(Cutoff, TransitionValues)
{
    const auto c = build_cutoff(TransitionKind::ExpBump, 1.0);
    EXPECT_EQ(c.psi(1.0), 1.0);
    EXPECT_EQ(c.psi(2.0), 0.0);
    EXPECT_NEAR(c.psi(1.5), 0.5, 1e-15);
    EXPECT_EQ(c.value(0.3), 1.0);
    EXPECT_EQ(c.value(2.5), 0.0);
}

TEST(Cutoff, ProfileIsMonotoneAndBounded)
{
    for (auto kind : {TransitionKind::ExpBump, TransitionKind::Cosine}) {
        const auto c = build_cutoff(kind, 3.0);
        double prev = 1.0;
        for (int i = 0; i <= 10000; ++i) {
            const double x = 7.0 * i / 10000;
            const double v = c.value(x);
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
            EXPECT_LE(v, prev);
            prev = v;
        }
    }
}

TEST(Cutoff, StoredSupMatchesDenseSampling)
{
    const auto c = build_cutoff(TransitionKind::ExpBump);
    double m = 0.0;
    for (int i = 0; i <= 1'000'000; ++i) {
        const double s = 1.0 + i * 1e-6;
        // independent central difference of psi
        const double h = 1e-7;
        m = std::max(m, std::abs(c.psi(s + h) - c.psi(s - h)) / (2 * h));
    }
    EXPECT_NEAR(c.sup_grad(), m, 1e-6);
    EXPECT_NEAR(build_cutoff(TransitionKind::Cosine).sup_grad(), pi / 2, 1e-12);
}

TEST(Cutoff, ScaledGradientBound)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int k = 0; k < 1000; ++k) {
        const double r = 0.1 + 20 * u(rng);
        const auto c = build_cutoff(TransitionKind::ExpBump, r);
        const double x = 2.5 * r * u(rng);
        EXPECT_LE(c.grad_norm(x), c.sup_grad() / r * (1 + 1e-12));
    }
    EXPECT_THROW(build_cutoff(TransitionKind::ExpBump, 0.0), PreconditionError);
    EXPECT_THROW(parse_transition("box"), ConfigError);
}

TEST(Caccioppoli, ConstantFieldHoldsTrivially)
{
    const auto mesh = annulus(1, 8, 16, 32);
    const auto v = ScalarField::interpolate(mesh, [](Vec2) { return 4.0; });
    const auto rep = caccioppoli_check(v, 4.0, build_cutoff(TransitionKind::ExpBump, 2.0), PExponents::make(3, 2));
    EXPECT_EQ(rep.lhs, 0.0);
    EXPECT_EQ(rep.rhs, 0.0);
    EXPECT_TRUE(rep.holds);
    EXPECT_GT(rep.C0, 0.0);
}

TEST(Caccioppoli, RadiusPreconditions)
{
    const auto mesh = annulus(1, 8, 16, 32);
    const auto v = ScalarField::interpolate(mesh, [](Vec2) { return 1.0; });
    const auto e = PExponents::make(2, 2);
    EXPECT_THROW(caccioppoli_check(v, 0, build_cutoff(TransitionKind::ExpBump, 1.0), e), PreconditionError);
    EXPECT_THROW(caccioppoli_check(v, 0, build_cutoff(TransitionKind::ExpBump, 4.5), e), PreconditionError);
}

TEST(Caccioppoli, HoldsForConvergedRobinSolutions)
{
    for (double p : {1.5, 2.0, 3.0}) {
        ProblemSpec<AnnularMesh2D> s;
        s.mesh = annulus(1, 16, 48, 64, std::pow(16.0, 1.0 / 48));
        s.exps = PExponents::make(p, 2);
        s.inner = {InnerSegment{0, 2 * pi, RobinPower{1.0}}};
        s.outer_value = 1.0;
        const auto rep = solve(s);
        for (double r : {2.0, 4.0, 8.0}) {
            const auto c = caccioppoli_check(rep.solution, 0.0, build_cutoff(TransitionKind::ExpBump, r), s.exps);
            EXPECT_TRUE(c.holds) << "p=" << p << " r=" << r << " lhs=" << c.lhs << " rhs=" << c.rhs;
            EXPECT_GT(c.lhs, 0.0);
        }
    }
}

TEST(BoundCheck, FundamentalSolutionMatchesClosedForm)
{
    const auto e = PExponents::make(2, 3);
    const auto v = AnalyticRadialField::from_profile(RadialProfile{0, 1, e}, 1.0, 1e4);
    const std::vector<double> radii{2, 4, 8, 16, 32};
    const auto bc = bound_check(v, 0.0, e, radii);
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const double expect = omega_d(3) * annulus_decay_constant(e) * std::pow(radii[i], e.kappa());
        EXPECT_NEAR(bc.values[i] / expect, 1.0, 1e-6);
    }
    EXPECT_DOUBLE_EQ(bc.C1, bc.values.front());
}

TEST(BoundCheck, BoundedFieldBelowSupBound)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    const auto mesh = annulus(1, 32, 40, 64, std::pow(32.0, 1.0 / 40));
    for (double p : {2.0, 3.0}) {
        const auto e = PExponents::make(p, 2);
        const double a = u(rng), f = 1 + 4 * u(rng);
        const auto v = ScalarField::interpolate(mesh, [&](Vec2 x) { return a * std::sin(f * x[0]) * std::cos(x[1]); });
        const std::vector<double> radii{2, 4, 8, 16};
        const auto bc = bound_check(v, 0.0, e, radii);
        for (std::size_t i = 0; i < radii.size(); ++i)
            EXPECT_LE(bc.values[i], sup_bound_constant(e, a, radii[i]));
        // For p >= d the values grow no faster than r^{d-p}
        for (std::size_t i = 0; i < radii.size(); ++i)
            EXPECT_LE(bc.values[i] / std::pow(radii[i], 2 - p), sup_bound_constant(e, a, 1.0));
    }
    const auto c = ScalarField::interpolate(mesh, [](Vec2) { return 2.0; });
    const std::vector<double> radii{2, 4};
    for (double x : bound_check(c, 2.0, PExponents::make(2, 2), radii).values)
        EXPECT_EQ(x, 0.0);
}

TEST(EnergyCap, ConstantFieldIsCapped)
{
    const auto mesh = annulus(1, 32, 16, 32);
    const auto v = ScalarField::interpolate(mesh, [](Vec2) { return -1.0; });
    const auto e = PExponents::make(2, 2);
    const std::vector<double> radii{2, 4, 8};
    const auto cap = energy_cap(v, build_cutoff(TransitionKind::ExpBump), radii, e, 0.0, 0.5);
    EXPECT_TRUE(cap.all_capped());
    EXPECT_TRUE(cap.premise_holds());
    EXPECT_THROW(energy_cap(v, build_cutoff(TransitionKind::ExpBump), radii, e, 1.0, 1.0), PreconditionError);
}

TEST(EnergyCap, LogarithmAnnulusEnergyIsScaleFree)
{
    const auto e = PExponents::make(2, 2);
    const auto exact = AnalyticRadialField::from_profile(RadialProfile{0, 1, e}, 1.0, 1e6);
    const auto mesh = annulus(1, 1024, 160, 256, std::pow(1024.0, 1.0 / 160));
    const auto v = ScalarField::interpolate(mesh, [](Vec2 x) { return std::log(norm(x)); });
    for (double r : dyadic_radii(2.0, 8)) {
        EXPECT_NEAR(annulus_gradient_energy(exact, r, e), 2 * pi * std::log(2.0), 1e-10);
        if (2 * r <= 1024) {
            EXPECT_NEAR(annulus_gradient_energy(v, r, e), 2 * pi * std::log(2.0), 5e-3);
        }
    }
}

TEST(EnergyCap, CertifiedForRobinSolution)
{
    ProblemSpec<AnnularMesh2D> s;
    s.mesh = annulus(1, 32, 60, 64, std::pow(32.0, 1.0 / 60));
    s.exps = PExponents::make(2, 2);
    s.inner = {InnerSegment{0, 2 * pi, RobinPower{1.0}}};
    s.outer_value = 0.5;
    const auto rep = solve(s);
    const std::vector<double> radii{2, 4, 8, 16};
    const auto cutoff = build_cutoff(TransitionKind::ExpBump);
    const auto k = cap_constants(rep.solution, 0.0, cutoff, s.exps, radii);
    EXPECT_DOUBLE_EQ(k.delta, 0.5);
    const auto cap = energy_cap(rep.solution, cutoff, radii, s.exps, k.C, k.delta);
    EXPECT_TRUE(cap.premise_holds());
    EXPECT_TRUE(cap.all_capped());
}

TEST(DecayFit, InverseRadiusTail)
{
    const auto s = synthetic({2, 4, 8, 16}, [](double r) { return 3 + 1 / r; });
    const auto fit = decay_fit(s, PExponents::make(2, 3), FitMode::Limit);
    EXPECT_EQ(fit.status, FitStatus::Ok);
    EXPECT_NEAR(fit.b_hat, 3.0, 1e-6);
    EXPECT_NEAR(fit.exponent, -1.0, 0.05);
}

TEST(DecayFit, ConstantIsDegenerate)
{
    const auto s = synthetic({2, 4, 8, 16}, [](double) { return 1.25; });
    const auto fit = decay_fit(s, PExponents::make(2, 3), FitMode::Limit);
    EXPECT_EQ(fit.status, FitStatus::Degenerate);
    EXPECT_EQ(fit.b_hat, 1.25);
}

TEST(DecayFit, LogGrowthCoefficient)
{
    const auto s = synthetic({2, 4, 8, 16, 32}, [](double r) { return 2 * std::log(r) + 5; });
    const auto fit = decay_fit(s, PExponents::make(2, 2), FitMode::Growth);
    EXPECT_NEAR(fit.prefactor, 2.0, 1e-3);
    EXPECT_NEAR(fit.b_hat, 5.0, 1e-9);
}

TEST(DecayFit, FlagsOscillationAndBadRadii)
{
    const auto s = synthetic({2, 4, 8, 16, 32}, [](double r) { return std::cos(r); });
    EXPECT_EQ(decay_fit(s, PExponents::make(2, 3), FitMode::Limit).status, FitStatus::NonMonotone);
    EXPECT_THROW(decay_fit(synthetic({1, 2, 4, 8}, [](double) { return 0.0; }), PExponents::make(2, 3), FitMode::Limit),
                 PreconditionError);
    EXPECT_THROW(decay_fit(synthetic({2, 4, 8}, [](double) { return 0.0; }), PExponents::make(2, 3), FitMode::Limit),
                 PreconditionError);
}

TEST(DecayFit, ExponentTracksKappa)
{
    for (auto [p, d] : std::vector<std::pair<double, int>>{{1.5, 3}, {2, 3}, {2, 4}, {2.5, 4}, {1.3, 2}}) {
        const auto e = PExponents::make(p, d);
        const auto s = synthetic(dyadic_radii(2.0, 6), [&](double r) { return -0.7 + 2 * mu_eval(e, r); });
        const auto fit = decay_fit(s, e, FitMode::Limit);
        EXPECT_NEAR(fit.exponent, e.kappa(), 0.05);
        EXPECT_NEAR(fit.b_hat, -0.7, 1e-9);
    }
}

TEST(Kelvin, ExactLinearModel)
{
    const std::vector<double> radii{2, 4, 8, 16};
    std::vector<double> v;
    for (double r : radii)
        v.push_back(1 + 1 / r);
    const auto k = kelvin_limit_estimate(radii, v, 3);
    EXPECT_NEAR(k.b_hat, 1.0, 1e-8);
    EXPECT_NEAR(k.w0_hat, 1.0, 1e-8);
}

TEST(Kelvin, HigherOrderTermActsAsNoise)
{
    const std::vector<double> radii{8, 16, 32, 64};
    std::vector<double> v;
    for (double r : radii)
        v.push_back(1 + 1 / r + 1 / (r * r));
    EXPECT_NEAR(kelvin_limit_estimate(radii, v, 3).b_hat, 1.0, 1e-2);
}

TEST(Kelvin, Preconditions)
{
    const std::vector<double> same{4, 4, 4};
    const std::vector<double> v{1, 1, 1};
    EXPECT_THROW(kelvin_limit_estimate(same, v, 3), PreconditionError);
    const std::vector<double> radii{2, 4, 8};
    EXPECT_THROW(kelvin_limit_estimate(radii, v, 2), PreconditionError);
}

TEST(Kelvin, RadialSolveRecoversLimit)
{
    ProblemSpec<RadialGrid> s;
    s.mesh = std::make_shared<const RadialGrid>(RadialGrid::geometric(3, 1.0, 16384, 1400, std::pow(16384.0, 1.0 / 1400)));
    s.exps = PExponents::make(2, 3);
    s.inner = {InnerSegment{0, 2 * pi, DirichletValue{3}}};
    s.outer_value = 1.0;
    const auto rep = solve(s);
    const auto radii = dyadic_radii(32.0, 4);
    std::vector<double> v;
    for (double r : radii)
        v.push_back(rep.solution.value_at(r));
    EXPECT_NEAR(kelvin_limit_estimate(radii, v, 3).b_hat, 1.0, 1e-3);
}

TEST(Dichotomy, Examples)
{
    const auto radii = dyadic_radii(2.0, 6);
    auto v = classify_dichotomy(synthetic(radii, [](double) { return 7.5; }), PExponents::make(2, 2));
    ASSERT_TRUE(std::holds_alternative<ConstantLimit>(v));
    EXPECT_EQ(std::get<ConstantLimit>(v).b, 7.5);

    v = classify_dichotomy(synthetic(radii, [](double r) { return 3 * std::log(r); }), PExponents::make(2, 2));
    ASSERT_TRUE(std::holds_alternative<FundamentalGrowth>(v)) << describe(v);
    EXPECT_NEAR(std::get<FundamentalGrowth>(v).c, 3.0, 1e-12);
    EXPECT_EQ(std::get<FundamentalGrowth>(v).sign, 1);

    const auto e = PExponents::make(3, 2);
    v = classify_dichotomy(synthetic(radii, [&](double r) { return -2 * mu_eval(e, r) + 1 / r; }), e);
    ASSERT_TRUE(std::holds_alternative<FundamentalGrowth>(v)) << describe(v);
    EXPECT_NEAR(std::get<FundamentalGrowth>(v).c, 2.0, 0.1);
    EXPECT_EQ(std::get<FundamentalGrowth>(v).sign, -1);

    v = classify_dichotomy(synthetic(radii, [](double r) { return 5 + 1 / r; }), PExponents::make(3, 2));
    ASSERT_TRUE(std::holds_alternative<ConstantLimit>(v));
    EXPECT_NEAR(std::get<ConstantLimit>(v).b, 5.0, 1e-12);

    v = classify_dichotomy(synthetic(radii, [](double r) { return std::sin(r); }), PExponents::make(3, 2));
    EXPECT_TRUE(std::holds_alternative<Undetermined>(v));
    EXPECT_THROW(classify_dichotomy(synthetic({2, 4, 8, 16}, [](double) { return 1.0; }), e), PreconditionError);
    EXPECT_THROW(classify_dichotomy(synthetic({2, 4, 8, 16, 30}, [](double) { return 1.0; }), e), PreconditionError);
}

TEST(Dichotomy, ScaleEquivariant)
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    const auto radii = dyadic_radii(2.0, 6);
    for (int k = 0; k < 50; ++k) {
        const double p = 2 + 2 * u(rng);
        const auto e = PExponents::make(p, 2);
        const double c = 4 * u(rng) - 2, b = 4 * u(rng) - 2, lambda = 0.01 + 100 * u(rng);
        std::function<double(double)> f;
        if (k % 2)
            f = [&](double r) { return c * mu_eval(e, r) + 1 / r; };
        else
            f = [&](double r) { return b + c / (r * r); };
        const auto base = classify_dichotomy(synthetic(radii, f), e);
        const auto scaled = classify_dichotomy(synthetic(radii, [&](double r) { return lambda * f(r); }), e);
        ASSERT_EQ(base.index(), scaled.index()) << describe(base) << " vs " << describe(scaled);
        if (auto* cl = std::get_if<ConstantLimit>(&base)) {
            EXPECT_NEAR(std::get<ConstantLimit>(scaled).b, lambda * cl->b, 1e-9 * lambda * (1 + std::abs(cl->b)));
        }
        if (auto* g = std::get_if<FundamentalGrowth>(&base)) {
            EXPECT_NEAR(std::get<FundamentalGrowth>(scaled).c, lambda * g->c, 1e-9 * lambda * g->c);
            EXPECT_EQ(std::get<FundamentalGrowth>(scaled).sign, g->sign);
        }
    }
}

TEST(SignCondition, Examples)
{
    std::vector<double> samples;
    for (int i = 0; i <= 200; ++i)
        samples.push_back(-10 + 0.1 * i);
    for (double alpha : {0.0, 0.5, 3.0})
        for (double p : {1.5, 2.0, 4.0})
            EXPECT_TRUE(sign_condition_check(RobinPower{alpha}, samples, p).holds);

    const BoundaryLaw anti = CustomMonotone{"anti", [](double v) { return -v; }, {}};
    const std::vector<double> one{1.0};
    const auto bad = sign_condition_check(anti, one);
    EXPECT_FALSE(bad.holds);
    EXPECT_EQ(bad.worst_value, 1.0);
    EXPECT_EQ(bad.worst_product, -1.0);

    const BoundaryLaw cubic = CustomMonotone{"cubic", [](double v) { return v * v * v; }, {}};
    EXPECT_TRUE(sign_condition_check(cubic, samples).holds);
}

TEST(Serialisation, CsvHeaders)
{
    std::ostringstream a, b;
    const std::vector<CaccioppoliReport> reps{{2.0, 0.0, 1.0, 2.0, 3.0, 0.5, 0.5, true}};
    write_caccioppoli_csv(a, reps);
    EXPECT_EQ(a.str(), "r,lhs,rhs,holds\n2,1,2,1\n");
    write_decay_csv(b, synthetic({2, 4}, [](double r) { return r; }), PExponents::make(2, 2));
    EXPECT_EQ(b.str().substr(0, 14), "r,mean,max,mu\n");
}
