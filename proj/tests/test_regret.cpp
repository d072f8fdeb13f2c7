#include "shapeopt/regret.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "shapeopt/errors.hpp"

using namespace shapeopt;

namespace {

constexpr double kPi = std::numbers::pi;

MeshPtr half_annulus() {
  return build_annulus(
      {BoundaryCurve::circle({0, 0}, 2.0, 80), BoundaryLabel::Sigma},
      {{BoundaryCurve::circle({0, 0}, 1.75, 70), BoundaryLabel::OmegaOuter},
       {BoundaryCurve::circle({0, 0}, 1.0, 60), BoundaryLabel::OmegaInner}},
      {BoundaryCurve::circle({0, 0}, 0.75, 50), BoundaryLabel::GammaPhi});
}

double reference_gd(Vec2 p) { return 0.1 * std::cos(2.0 * kPi * p.x) * std::sin(2.0 * kPi * p.y); }

BoundaryTrace random_trace(const MeshPtr& mesh, std::mt19937& rng, double amp) {
  std::uniform_real_distribution<double> dist(-amp, amp);
  auto t = constant_trace(mesh, BoundaryLabel::Sigma, 0.0);
  for (int i = 0; i < t.size(); ++i) t.values[i] = dist(rng);
  return t;
}

RegretParams params_with_eps(double eps) {
  RegretParams p;
  p.eps = eps;
  return p;
}

// per-node grid search over 201 candidate levels in the box
double fenchel_grid_oracle(const BoundaryTrace& y, const RegretParams& p) {
  const Eigen::VectorXd m = lumped_loop_mass(y);
  double total = 0.0;
  for (int i = 0; i < y.size(); ++i) {
    double best = -1e300;
    for (int j = 0; j <= 200; ++j) {
      const double g = p.g_a + (p.g_b - p.g_a) * j / 200.0;
      best = std::max(best, y.values[i] * g - 0.5 * p.eps * g * g);
    }
    total += m[i] * best;
  }
  return total;
}

}  // namespace

TEST_CASE("project_box clamps pointwise") {
  const auto mesh = half_annulus();
  const auto zero = constant_trace(mesh, BoundaryLabel::Sigma, 0.0);
  CHECK(project_box(zero, 1.0, -0.2, 0.2).values.lpNorm<Eigen::Infinity>() == 0.0);

  const auto y = constant_trace(mesh, BoundaryLabel::Sigma, 0.1);
  const auto interior = project_box(y, 1.0, -0.2, 0.2);
  CHECK(interior.values.minCoeff() == 0.1);
  CHECK(interior.values.maxCoeff() == 0.1);

  const auto clamped = project_box(y, 0.1, -0.2, 0.2);
  CHECK(clamped.values.minCoeff() == 0.2);
  CHECK(clamped.values.maxCoeff() == 0.2);
}

TEST_CASE("projection is idempotent and nonexpansive") {
  const auto mesh = half_annulus();
  std::mt19937 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_trace(mesh, rng, 0.5);
    const auto b = random_trace(mesh, rng, 0.5);
    const auto pa = project_box(a, 1.0, -0.2, 0.2);
    const auto pb = project_box(b, 1.0, -0.2, 0.2);
    const auto ppa = project_box(pa, 1.0, -0.2, 0.2);
    CHECK((ppa.values - pa.values).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((pa.values - pb.values).lpNorm<Eigen::Infinity>() <=
          (a.values - b.values).lpNorm<Eigen::Infinity>() + 1e-15);
    BoundaryTrace diff_p = pa, diff = a;
    diff_p.values = pa.values - pb.values;
    diff.values = a.values - b.values;
    CHECK(trace_norm(diff_p) <= trace_norm(diff) + 1e-12);
  }
}

TEST_CASE("fenchel transform closed forms") {
  const auto mesh = half_annulus();
  const RegretParams p = params_with_eps(0.5);

  const auto zero = constant_trace(mesh, BoundaryLabel::Sigma, 0.0);
  const auto at_zero = fenchel(zero, p);
  CHECK(at_zero.value == 0.0);
  CHECK(at_zero.maximizer_norm == 0.0);

  // boundary case y = eps*g_b: maximizer g_b, value eps/2 g_b^2 |Sigma|
  const auto y = constant_trace(mesh, BoundaryLabel::Sigma, p.eps * p.g_b);
  const auto fr = fenchel(y, p);
  CHECK(fr.maximizer.values.minCoeff() == 0.2);
  const double sigma_len = lumped_loop_mass(y).sum();
  CHECK(fr.value == doctest::Approx(0.5 * p.eps * 0.04 * sigma_len).epsilon(1e-12));
  CHECK(fr.value == doctest::Approx(0.5 * p.eps * 0.04 * 4.0 * kPi).epsilon(1e-3));
  CHECK(fr.maximizer_norm == doctest::Approx(0.2 * std::sqrt(4.0 * kPi)).epsilon(1e-3));
}

TEST_CASE("fenchel matches the per-node grid-search oracle") {
  // small loop so the 201-level grid resolves the parabola within 1e-6
  const auto toy = build_annulus({BoundaryCurve::circle({0, 0}, 0.2, 16), BoundaryLabel::Sigma}, {},
                                 {BoundaryCurve::circle({0, 0}, 0.05, 8), BoundaryLabel::GammaPhi});
  const RegretParams p = params_with_eps(0.5);
  std::mt19937 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto y = random_trace(toy, rng, 0.3);
    const double oracle = fenchel_grid_oracle(y, p);
    const double exact = fenchel(y, p).value;
    CHECK(exact >= oracle - 1e-12);
    CHECK(std::abs(exact - oracle) <= 1e-6);
  }
}

TEST_CASE("fenchel value is nonnegative, monotone in eps, and convex in y") {
  const auto mesh = half_annulus();
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto y = random_trace(mesh, rng, 0.4);
    const auto a = random_trace(mesh, rng, 0.4);
    const auto b = random_trace(mesh, rng, 0.4);
    const double eps1 = 0.125, eps2 = 2.0;
    CHECK(fenchel(y, params_with_eps(eps1)).value >= fenchel(y, params_with_eps(eps2)).value - 1e-15);
    CHECK(fenchel(y, params_with_eps(eps1)).value >= 0.0);
    BoundaryTrace mid = a;
    mid.values = 0.5 * (a.values + b.values);
    const RegretParams p = params_with_eps(0.5);
    CHECK(fenchel(mid, p).value <=
          0.5 * (fenchel(a, p).value + fenchel(b, p).value) + 1e-12);
  }
}

TEST_CASE("fenchel Frechet derivative bound") {
  const auto mesh = half_annulus();
  std::mt19937 rng(13);
  const RegretParams p = params_with_eps(0.5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto y = random_trace(mesh, rng, 0.3);
    const auto delta = random_trace(mesh, rng, 0.05);
    const auto gbar = project_box(y, p.eps, p.g_a, p.g_b);
    BoundaryTrace shifted = y;
    shifted.values = y.values + delta.values;
    const double lhs = std::abs(fenchel(shifted, p).value - fenchel(y, p).value -
                                trace_dot(gbar, delta));
    CHECK(lhs <= (1.0 / p.eps) * trace_dot(delta, delta) + 1e-14);
  }
}

TEST_CASE("clamp-free fenchel equals the quadratic form exactly") {
  const auto mesh = half_annulus();
  std::mt19937 rng(17);
  const double eps = 1e6;  // large eps keeps y/eps strictly inside the box
  const auto y = random_trace(mesh, rng, 0.4);
  const auto fr = fenchel(y, params_with_eps(eps));
  const Eigen::VectorXd m = lumped_loop_mass(y);
  const double quad = (m.array() * y.values.array().square()).sum() / (2.0 * eps);
  CHECK(fr.value == doctest::Approx(quad).epsilon(1e-14));
}

TEST_CASE("tracking functional values") {
  const auto mesh = half_annulus();
  SystemWorkspace ws(mesh);
  const auto one = make_field(mesh, [](Vec2) { return 1.0; });
  StatePair fake{one, zero_field(mesh)};
  CHECK(eval_Jtilde(fake, one) == 0.0);
  CHECK(eval_Jtilde(fake, zero_field(mesh)) ==
        doctest::Approx(0.5 * kPi * (1.75 * 1.75 - 1.0)).epsilon(0.01));
}

TEST_CASE("J_eps vanishes at the nominal deformation itself") {
  const auto mesh = half_annulus();
  SystemWorkspace ws(mesh);
  const auto f = make_field(mesh, [](Vec2) { return 1.0; });
  const auto gd = make_trace(mesh, BoundaryLabel::Sigma, reference_gd);
  const auto u_d = make_field(mesh, [](Vec2 p) { return 0.05 * p.x * p.y; });
  const auto state = solve_state(ws, f, gd, u_d);
  NominalData nominal;
  nominal.jtilde = eval_Jtilde(state, u_d);
  nominal.flux_sigma = state_flux_on_sigma(ws, state, u_d);
  const auto breakdown = eval_Jeps(ws, state, u_d, nominal, params_with_eps(0.5));
  CHECK(breakdown.jeps == 0.0);
  CHECK(breakdown.fenchel_value == 0.0);
  CHECK(breakdown.gbar_norm == 0.0);
}

TEST_CASE("J_star dominates J_eps and obeys the eps gap bound") {
  const auto mesh = half_annulus();
  std::mt19937 rng(23);
  const auto one = constant_trace(mesh, BoundaryLabel::Sigma, 1.0);
  const double sigma_len = lumped_loop_mass(one).sum();
  for (int trial = 0; trial < 20; ++trial) {
    const auto y = random_trace(mesh, rng, 0.5);
    for (double eps : {0.0625, 0.5, 2.0, 8.0}) {
      const RegretParams p = params_with_eps(eps);
      // bang-bang linear maximizer vs penalized maximizer, same gap trace
      BoundaryTrace gstar = y;
      for (int i = 0; i < y.size(); ++i) gstar.values[i] = y.values[i] < 0.0 ? p.g_a : p.g_b;
      const double linear = trace_dot(y, gstar);
      const double fen = fenchel(y, p).value;
      CHECK(linear >= fen - 1e-12);
      CHECK(linear - fen <= 0.5 * std::max(p.g_a * p.g_a, p.g_b * p.g_b) * sigma_len * eps + 1e-12);
    }
  }
}

TEST_CASE("J with explicit missing data reduces to Jtilde at zero") {
  const auto mesh = half_annulus();
  SystemWorkspace ws(mesh);
  const auto f = make_field(mesh, [](Vec2) { return 1.0; });
  const auto gd = make_trace(mesh, BoundaryLabel::Sigma, reference_gd);
  const auto u_d = make_field(mesh, [](Vec2 p) { return 0.03 * p.x; });
  const auto state = solve_state(ws, f, gd, u_d);
  const auto zero_delta = constant_trace(mesh, BoundaryLabel::Sigma, 0.0);
  CHECK(eval_J_with_delta(mesh, zero_delta, u_d, f, gd) ==
        doctest::Approx(eval_Jtilde(state, u_d)).epsilon(1e-12));
}

TEST_CASE("invalid parameters are rejected") {
  RegretParams p;
  p.eps = -1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = RegretParams{};
  p.g_a = 0.1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = RegretParams{};
  p.sigma = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
