#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "siparray/paramfit.hpp"

using namespace siparray;

namespace {
DistanceSeries make_series(FitForm form, double a, double l, int n,
                           double noise = 0, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  DistanceSeries s;
  for (int i = 0; i < n; ++i) {
    const double d = 6 + 2.0 * i;
    double y = form == FitForm::exponential ? a * std::exp(-d / l)
                                            : a / (1 + d / l);
    if (noise > 0) y *= 1 + noise * g(rng);
    s.points.emplace_back(d, y);
  }
  return s;
}
}  // namespace

TEST_CASE("noiseless exponential recovery") {
  const auto s = make_series(FitForm::exponential, 0.050, 3.0, 8);
  const auto f = fit_exponential(s);
  CHECK(std::abs(f.amplitude - 0.050) / 0.050 < 1e-9);
  CHECK(std::abs(f.length - 3.0) / 3.0 < 1e-9);
  CHECK(f.rms_residual < 1e-12);
  CHECK(f.converged);
}

TEST_CASE("noiseless rational recovery") {
  const auto s = make_series(FitForm::rational, 0.030, 4.0, 8);
  const auto f = fit_rational(s);
  CHECK(std::abs(f.amplitude - 0.030) / 0.030 < 1e-9);
  CHECK(std::abs(f.length - 4.0) / 4.0 < 1e-9);
}

TEST_CASE("decay length within 5 percent under 1 percent noise") {
  int fails = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const auto s =
        make_series(FitForm::exponential, 0.050, 3.0, 8, 0.01, 100 + draw);
    const auto f = fit_exponential(s);
    if (std::abs(f.length - 3.0) / 3.0 > 0.05) ++fails;
  }
  CHECK(fails == 0);
}

TEST_CASE("degenerate and invalid series") {
  DistanceSeries flat;
  for (int i = 0; i < 5; ++i) flat.points.emplace_back(6 + i, 0.02);
  CHECK_THROWS_AS(fit_exponential(flat), FitError);

  DistanceSeries signs;
  signs.points = {{6, 0.01}, {8, -0.005}, {10, 0.002}};
  CHECK_THROWS_AS(fit_exponential(signs), FitError);
  CHECK_THROWS_AS(fit_rational(signs), FitError);

  DistanceSeries two;
  two.points = {{6, 0.01}, {8, 0.005}};
  CHECK_THROWS_AS(fit_exponential(two), FitError);
}

TEST_CASE("negative series keeps its sign") {
  auto s = make_series(FitForm::exponential, 0.040, 2.5, 6);
  for (auto& [d, y] : s.points) y = -y;
  const auto f = fit_exponential(s);
  CHECK(f.amplitude < 0);
  CHECK(std::abs(f.amplitude + 0.040) < 1e-9);
  CHECK(f.evaluate(8.0) < 0);
}

TEST_CASE("rational form identity at d=0") {
  FitResult f;
  f.form = FitForm::rational;
  f.amplitude = 0.025;
  f.length = 5;
  CHECK(f.evaluate(0) == 0.025);
}

TEST_CASE("model selection prefers the generating form") {
  const auto sr = make_series(FitForm::rational, 0.030, 2.0, 9);
  const auto selr = select_form(sr);
  CHECK(selr.selected.form == FitForm::rational);
  CHECK(selr.rational.rms_residual * 5 <= selr.exponential.rms_residual);

  const auto se = make_series(FitForm::exponential, 0.030, 3.0, 9);
  const auto sele = select_form(se);
  CHECK(sele.selected.form == FitForm::exponential);
}

TEST_CASE("scale equivariance") {
  const auto s = make_series(FitForm::exponential, 0.050, 3.0, 8, 0.01, 7);
  auto s2 = s;
  for (auto& [d, y] : s2.points) y *= 3.0;
  const auto f1 = fit_exponential(s);
  const auto f2 = fit_exponential(s2);
  CHECK(std::abs(f2.amplitude - 3 * f1.amplitude) < 1e-7);
  CHECK(std::abs(f2.length - f1.length) < 1e-6);

  const auto r1 = fit_rational(make_series(FitForm::rational, 0.02, 4, 8,
                                           0.01, 9));
  auto sr2 = make_series(FitForm::rational, 0.02, 4, 8, 0.01, 9);
  for (auto& [d, y] : sr2.points) y *= 3.0;
  const auto r2 = fit_rational(sr2);
  CHECK(std::abs(r2.amplitude - 3 * r1.amplitude) < 1e-7);
  CHECK(std::abs(r2.length - r1.length) < 1e-6);
}

TEST_CASE("exponential shift equivariance in d") {
  const double delta = 2.0;
  const auto s = make_series(FitForm::exponential, 0.050, 3.0, 8, 0.01, 11);
  auto s2 = s;
  for (auto& [d, y] : s2.points) d += delta;
  const auto f1 = fit_exponential(s);
  const auto f2 = fit_exponential(s2);
  CHECK(std::abs(f2.length - f1.length) < 1e-8);
  CHECK(std::abs(f2.amplitude - f1.amplitude * std::exp(delta / f1.length)) <
        1e-8);
}

TEST_CASE("refinement does not worsen the initialization") {
  // rms after Gauss-Newton must not exceed the log-linear initialization rms
  const auto s = make_series(FitForm::exponential, 0.050, 3.0, 8, 0.05, 13);
  const auto f = fit_exponential(s);
  double sd = 0, sl = 0, sdd = 0, sdl = 0;
  const int n = static_cast<int>(s.points.size());
  for (const auto& [d, y] : s.points) {
    sd += d;
    sl += std::log(y);
    sdd += d * d;
    sdl += d * std::log(y);
  }
  const double slope = (n * sdl - sd * sl) / (n * sdd - sd * sd);
  const double a0 = std::exp((sl - slope * sd) / n);
  double acc = 0;
  for (const auto& [d, y] : s.points) {
    const double r = a0 * std::exp(slope * d) - y;
    acc += r * r;
  }
  CHECK(f.rms_residual <= std::sqrt(acc / n) + 1e-15);
}

TEST_CASE("spectrum reconstruction consistency") {
  FitResult t_fit{FitForm::exponential, 0.004, 3.0, 0, {}, true};
  FitResult l_fit{FitForm::exponential, 0.012, 6.0, 0, {}, true};
  const std::vector<double> grid = {8, 10, 12, 14};
  const auto c = reconstruct_dimer(t_fit, l_fit, 1.079, grid);
  REQUIRE(c.levels.size() == grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    const double t = t_fit.evaluate(grid[i]);
    const double l = l_fit.evaluate(grid[i]);
    CHECK_THAT(c.levels[i](0),
               Catch::Matchers::WithinAbs(1.079 - l - t, 1e-14));
    CHECK_THAT(c.levels[i](1),
               Catch::Matchers::WithinAbs(1.079 - l + t, 1e-14));
  }
  // lower dimer level rises monotonically with d
  for (size_t i = 1; i < grid.size(); ++i)
    CHECK(c.levels[i](0) > c.levels[i - 1](0));

  FitResult li{FitForm::exponential, 0.020, 5.0, 0, {}, true};
  FitResult lo{FitForm::exponential, 0.010, 5.0, 0, {}, true};
  const auto ct = reconstruct_trimer(t_fit, li, lo, 1.079, grid);
  for (size_t i = 0; i < grid.size(); ++i)
    CHECK_THAT(ct.levels[i](1),
               Catch::Matchers::WithinAbs(1.079 - lo.evaluate(grid[i]), 1e-14));
}
