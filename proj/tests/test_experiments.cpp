#include "shapeopt/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "shapeopt/errors.hpp"

using namespace shapeopt;

namespace {

int count_lines(const std::string& path) {
  std::ifstream in(path);
  int n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("gdelta stress family") {
  const auto mesh = make_working_mesh(Resolutions{}.coarsened());
  for (int i = 1; i <= 10; ++i) {
    const auto g = make_gdelta(i, mesh);
    CHECK(g.values.maxCoeff() <= 0.2);
    CHECK(g.values.minCoeff() >= -0.2);
  }
  CHECK_THROWS_AS(make_gdelta(0, mesh), IndexOutOfRange);
  CHECK_THROWS_AS(make_gdelta(11, mesh), IndexOutOfRange);

  // direct evaluation at (2, 0): x1 x2 = 0, 0.02 cos(8 pi) cos(0) = 0.02
  const auto g1 = make_gdelta(1, mesh);
  const auto& loop = mesh->loop(BoundaryLabel::Sigma);
  REQUIRE(norm(mesh->nodes[loop[0]] - Vec2{2.0, 0.0}) <= 1e-12);
  CHECK(g1.values[0] == doctest::Approx(0.02).epsilon(1e-12));

  // i = 10: denominator 0.3, heavy clamping toward bang-bang data
  const auto g10 = make_gdelta(10, mesh);
  int clamped = 0;
  for (int i = 0; i < g10.size(); ++i) {
    if (std::abs(g10.values[i]) >= 0.2 - 1e-12) ++clamped;
  }
  CHECK(clamped >= static_cast<int>(0.8 * g10.size()));
}

TEST_CASE("target profiles") {
  const Resolutions res = Resolutions{}.coarsened();
  const auto working = make_working_mesh(res);

  SUBCASE("zero data give a zero target") {
    const auto u_d = make_target({TargetKind::Circle, 2}, res, working,
                                 [](Vec2) { return 0.0; }, [](Vec2) { return 0.0; });
    CHECK(u_d.values.lpNorm<Eigen::Infinity>() == 0.0);
  }

  SUBCASE("reference targets are finite, deterministic, and interpolate stably") {
    const auto u_d = make_target({TargetKind::Circle, 2}, res, working, default_source, default_dirichlet);
    REQUIRE(u_d.values.allFinite());
    const auto again = make_target({TargetKind::Circle, 2}, res, working, default_source, default_dirichlet);
    CHECK((u_d.values - again.values).lpNorm<Eigen::Infinity>() == 0.0);

    const auto arrow = make_target({TargetKind::Arrowhead, 2}, res, working, default_source, default_dirichlet);
    REQUIRE(arrow.values.allFinite());
    // the arrowhead hole is larger, so less source accumulates in omega
    double circle_max = 0.0, arrow_max = 0.0;
    for (int i = 0; i < working->num_nodes(); ++i) {
      if (!working->omegabar_node[i]) continue;
      circle_max = std::max(circle_max, std::abs(u_d.values[i]));
      arrow_max = std::max(arrow_max, std::abs(arrow.values[i]));
    }
    CHECK(circle_max > arrow_max);
    // regression magnitude on the coarsened mesh
    CHECK(circle_max == doctest::Approx(0.45954).epsilon(0.02));
  }

  SUBCASE("round-trip interpolation error is small") {
    const auto target_mesh = make_target_mesh({TargetKind::Circle, 2}, res);
    const auto source = make_field(target_mesh, default_source);
    const auto gd = make_trace(target_mesh, BoundaryLabel::Sigma, default_dirichlet);
    const auto v = solve_dirichlet(target_mesh, source,
                                   {{BoundaryLabel::Sigma, 0.0, &gd},
                                    {BoundaryLabel::GammaD, 0.0, nullptr}});
    const auto down = interpolate(v, working);
    // probe strictly inside omega so every node lies in both triangulations
    const auto probe = build_annulus(
        {BoundaryCurve::circle({0, 0}, 1.7, 90), BoundaryLabel::Sigma}, {},
        {BoundaryCurve::circle({0, 0}, 1.05, 60), BoundaryLabel::GammaPhi});
    const auto direct = interpolate(v, probe);
    const auto via_working = interpolate(down, probe);
    double err = 0.0;
    const double scale = direct.values.lpNorm<Eigen::Infinity>();
    err = (via_working.values - direct.values).lpNorm<Eigen::Infinity>();
    CHECK(err <= 0.01 * scale);
  }
}

TEST_CASE("regret study smoke test with isolated failures") {
  Problem problem = make_problem({TargetKind::Circle, 2}, Resolutions{}.coarsened());
  RegretParams params;
  params.alpha = default_alpha(*problem.mesh0);
  params.max_iter = 8;

  Objective obj;
  obj.mode = ObjectiveMode::Nominal;
  const auto nom = optimize(problem, params, obj);
  SystemWorkspace ws(nom.final_mesh);
  const auto f = make_field(nom.final_mesh, problem.f);
  const auto gd = make_trace(nom.final_mesh, BoundaryLabel::Sigma, problem.g_d);
  const auto state = solve_state(ws, f, gd, nom.u_d_final);
  NominalData nominal;
  nominal.jtilde = eval_Jtilde(state, nom.u_d_final);
  nominal.flux_sigma = state_flux_on_sigma(ws, state, nom.u_d_final);
  nominal.flux_sigma.node_ids = problem.mesh0->loop(BoundaryLabel::Sigma);
  problem.nominal = nominal;

  auto sweep = epsilon_sweep(problem, {2.0, 0.5}, params, 2);
  SweepEntry broken;
  broken.eps = 1.0;
  broken.error = "synthetic failure";
  sweep.push_back(broken);

  const auto study = regret_study(problem, sweep, {1, 2}, params, 2);
  REQUIRE(study.cells.size() == 6);
  int ok = 0, failed = 0;
  for (const auto& cell : study.cells) {
    if (cell.error.empty()) {
      ++ok;
      CHECK(std::isfinite(cell.diff));
      CHECK(cell.diff == doctest::Approx(cell.j_lowregret - cell.j_opt).epsilon(1e-15));
    } else {
      ++failed;
    }
  }
  CHECK(ok == 4);
  CHECK(failed == 2);

  write_regret_table(study, "regret_table_test.csv");
  CHECK(count_lines("regret_table_test.csv") == 1 + ok);
  std::remove("regret_table_test.csv");

  write_sweep_table(sweep, "sweep_table_test.csv");
  CHECK(count_lines("sweep_table_test.csv") == 1 + 2);
  std::remove("sweep_table_test.csv");
}

TEST_CASE("report emission contracts") {
  namespace fs = std::filesystem;
  const std::string dir = "report_test";

  SUBCASE("empty inputs still produce a well-formed file") {
    ReportInputs inputs;
    inputs.target = "circle";
    emit_report(inputs, dir);
    std::ifstream in(dir + "/boundaries_circle.svg");
    REQUIRE(in.good());
    std::string first;
    std::getline(in, first);
    CHECK(first.find("<svg") != std::string::npos);
    fs::remove_all(dir);
  }

  SUBCASE("overlays include every boundary") {
    ReportInputs inputs;
    inputs.target = "circle";
    inputs.gamma_d = hidden_boundary_curve(TargetKind::Circle, 40).sample();
    inputs.gamma_nominal = BoundaryCurve::circle({0, 0}, 0.5, 40).sample();
    inputs.gamma_eps.emplace_back(0.5, BoundaryCurve::circle({0, 0}, 0.55, 40).sample());
    inputs.gamma_eps.emplace_back(2.0, BoundaryCurve::circle({0, 0}, 0.52, 40).sample());
    emit_report(inputs, dir);
    std::ifstream in(dir + "/boundaries_circle.svg");
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(std::count(all.begin(), all.end(), '\n') > 4);
    int polylines = 0;
    for (std::size_t pos = 0; (pos = all.find("<polyline", pos)) != std::string::npos; ++pos) ++polylines;
    CHECK(polylines == 4);
    fs::remove_all(dir);
  }
}
