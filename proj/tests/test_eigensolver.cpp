#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "siparray/eigensolver.hpp"
#include "siparray/planes.hpp"

using namespace siparray;

namespace {

// Dense Hermitian operator with a prescribed spectrum: H = Q diag(ev) Q^H
// for a Haar-ish random unitary Q. The exact eigenpairs are kept for checks.
struct DenseOp {
  Eigen::MatrixXd hre, him;
  Eigen::MatrixXf hre_f, him_f;
  Eigen::VectorXd ev;
  Eigen::MatrixXcd q;

  Eigen::Index dim() const { return hre.rows(); }

  template <typename T>
  void apply(const Planes<T>& x, Planes<T>& y, T alpha = T(1),
             T beta = T(0)) const {
    const auto& re = [&]() -> const auto& {
      if constexpr (std::is_same_v<T, float>) return hre_f;
      else return hre;
    }();
    const auto& im = [&]() -> const auto& {
      if constexpr (std::is_same_v<T, float>) return him_f;
      else return him;
    }();
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    Mat yre = re * x.re - im * x.im;
    Mat yim = re * x.im + im * x.re;
    if (beta == T(0)) {
      y.resize(x.rows(), x.cols());
      y.re = alpha * yre;
      y.im = alpha * yim;
    } else {
      y.re = alpha * yre + beta * y.re;
      y.im = alpha * yim + beta * y.im;
    }
  }
};

DenseOp make_op(const Eigen::VectorXd& ev, std::uint64_t seed) {
  const Eigen::Index n = ev.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXcd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = {g(rng), g(rng)};
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a);
  DenseOp op;
  op.q = qr.householderQ() * Eigen::MatrixXcd::Identity(n, n);
  op.ev = ev;
  const Eigen::MatrixXcd h = op.q * ev.asDiagonal() * op.q.adjoint();
  op.hre = h.real();
  op.him = h.imag();
  op.hre_f = op.hre.cast<float>();
  op.him_f = op.him.cast<float>();
  return op;
}

// Spectrum with a dense band below, a sparse in-gap manifold given as exact
// Kramers pairs, and a dense band above.
Eigen::VectorXd gapped_spectrum(const std::vector<double>& gap_pairs,
                                int n_below = 300, int n_above = 300) {
  Eigen::VectorXd ev(n_below + 2 * gap_pairs.size() + n_above);
  Eigen::Index at = 0;
  for (int i = 0; i < n_below; ++i)
    ev(at++) = -20.0 + 18.0 * i / (n_below - 1);  // [-20, -2]
  for (double e : gap_pairs) {
    ev(at++) = e;
    ev(at++) = e;
  }
  for (int i = 0; i < n_above; ++i)
    ev(at++) = 3.0 + 20.0 * i / (n_above - 1);  // [3, 23]
  return ev;
}

const std::vector<double> kGapLevels = {0.30, 0.62, 0.80, 1.00,
                                        1.15, 1.30, 1.45, 1.70, 2.45};

// Rigid energy shift of a base operator: H' = H + c.
struct ShiftedOp {
  const DenseOp& base;
  double c;
  Eigen::Index dim() const { return base.dim(); }
  template <typename T>
  void apply(const Planes<T>& x, Planes<T>& y, T alpha = T(1),
             T beta = T(0)) const {
    base.apply(x, y, alpha, beta);
    y.re += (alpha * static_cast<T>(c)) * x.re;
    y.im += (alpha * static_cast<T>(c)) * x.im;
  }
};

SolverSettings base_settings() {
  SolverSettings s;
  s.k = 12;
  s.window_lo = 0.7;
  s.window_hi = 1.9;
  s.tol = 1e-8;
  s.seed = 41;
  return s;
}

void check_against_oracle(const DenseOp& op, const EigenSet& out,
                          const std::vector<double>& want,
                          double val_tol = 1e-8) {
  REQUIRE(out.values.size() == static_cast<Eigen::Index>(2 * want.size()));
  for (size_t i = 0; i < want.size(); ++i) {
    CHECK_THAT(out.values(2 * i), Catch::Matchers::WithinAbs(want[i], val_tol));
    CHECK_THAT(out.values(2 * i + 1),
               Catch::Matchers::WithinAbs(want[i], val_tol));
  }
  // orthonormal vectors with certified residuals
  const Eigen::MatrixXcd g = blk::gram(out.vectors, out.vectors);
  CHECK((g - Eigen::MatrixXcd::Identity(g.rows(), g.cols()))
            .cwiseAbs()
            .maxCoeff() < 1e-10);
  Planes<double> hv;
  op.apply(out.vectors, hv);
  for (Eigen::Index j = 0; j < out.values.size(); ++j) {
    const double rr =
        (hv.re.col(j) - out.values(j) * out.vectors.re.col(j)).squaredNorm() +
        (hv.im.col(j) - out.values(j) * out.vectors.im.col(j)).squaredNorm();
    CHECK(std::sqrt(rr) <= out.residual_norms(j) + 1e-10);
  }
}

}  // namespace

TEST_CASE("spin pairing detects Kramers structure") {
  Eigen::VectorXd good(4);
  good << 1.0, 1.0 + 1e-9, 1.5, 1.5;
  const auto p = spin_pairing(good);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == std::pair<int, int>(0, 1));
  CHECK(p[1] == std::pair<int, int>(2, 3));

  Eigen::VectorXd bad(4);
  bad << 1.0, 1.1, 1.5, 1.5;
  CHECK_THROWS_WITH(spin_pairing(bad),
                    Catch::Matchers::ContainsSubstring("unpaired"));
  Eigen::VectorXd odd(3);
  odd << 1, 1, 2;
  CHECK_THROWS_AS(spin_pairing(odd), EigensolverError);
}

TEST_CASE("settings validation") {
  const auto op = make_op(gapped_spectrum({1.0}, 20, 20), 3);
  auto s = base_settings();
  s.k = 1;
  CHECK_THROWS_AS(solve_gap_states(op, s), EigensolverError);
  s = base_settings();
  s.window_hi = s.window_lo;
  CHECK_THROWS_AS(solve_gap_states(op, s), EigensolverError);
  s = base_settings();
  s.tol = 1e-2;
  CHECK_THROWS_AS(solve_gap_states(op, s), EigensolverError);
  s = base_settings();
  s.memory_budget_gb = 1e-6;
  CHECK_THROWS_AS(solve_gap_states(op, s), EigensolverError);
}

TEST_CASE("Lanczos spectral bounds bracket the spectrum") {
  const auto op = make_op(gapped_spectrum(kGapLevels), 11);
  const auto [lo, hi] = detail::spectral_bounds(op, 5);
  CHECK(lo <= -20.0);
  CHECK(hi >= 23.0);
  CHECK(lo > -25.0);
  CHECK(hi < 28.0);
}

TEST_CASE("double-precision path recovers the in-gap manifold exactly") {
  const auto op = make_op(gapped_spectrum(kGapLevels), 1001);
  const auto s = base_settings();
  const auto out = solve_gap_states(op, s);
  CHECK(out.converged);
  CHECK(out.window_full);
  // in-window levels: 0.80 .. 1.70, six Kramers pairs
  check_against_oracle(op, out, {0.80, 1.00, 1.15, 1.30, 1.45, 1.70});
  REQUIRE(out.pairing.size() == 6);
  CHECK(out.stats.h_applies > 0);
  CHECK(out.stats.seconds > 0);
}

TEST_CASE("mixed-precision path matches the double path") {
  const auto op = make_op(gapped_spectrum(kGapLevels), 1001);
  auto s = base_settings();
  s.force_mixed = true;
  s.refine_chunk = 4;
  s.tol = 1e-6;  // the tolerance the mixed path is used with in production
  const auto out = solve_gap_states(op, s);
  CHECK(out.converged);
  check_against_oracle(op, out, {0.80, 1.00, 1.15, 1.30, 1.45, 1.70}, 1e-6);
}

TEST_CASE("solver is deterministic for fixed settings") {
  const auto op = make_op(gapped_spectrum(kGapLevels), 77);
  const auto s = base_settings();
  const auto a = solve_gap_states(op, s);
  const auto b = solve_gap_states(op, s);
  REQUIRE(a.values.size() == b.values.size());
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.vectors.re - b.vectors.re).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.vectors.im - b.vectors.im).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("warm start from a previous solution stays correct") {
  const auto op = make_op(gapped_spectrum(kGapLevels), 99);
  const auto s = base_settings();
  const auto cold = solve_gap_states(op, s);
  const auto warm = solve_gap_states(op, s, &cold.vectors);
  CHECK(warm.converged);
  CHECK((warm.values - cold.values).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("global energy shift moves the solved values rigidly") {
  const auto op = make_op(gapped_spectrum(kGapLevels), 31);
  const double c = 0.7;
  const ShiftedOp shifted{op, c};
  auto s = base_settings();
  const auto a = solve_gap_states(op, s);
  s.window_lo += c;
  s.window_hi += c;
  const auto b = solve_gap_states(shifted, s);
  REQUIRE(a.values.size() == b.values.size());
  CHECK((b.values.array() - a.values.array() - c).abs().maxCoeff() < 1e-7);
}

TEST_CASE("sparse window is reported as not full") {
  // only two pairs inside the requested window
  const auto op = make_op(gapped_spectrum({0.9, 1.2, 2.6}), 13);
  auto s = base_settings();
  s.k = 12;
  const auto out = solve_gap_states(op, s);
  CHECK_FALSE(out.window_full);
  CHECK(out.values.size() == 4);
  CHECK_THAT(out.values(0), Catch::Matchers::WithinAbs(0.9, 1e-7));
  CHECK_THAT(out.values(2), Catch::Matchers::WithinAbs(1.2, 1e-7));
  CHECK(!out.diagnostics.empty());
}

TEST_CASE("selection never truncates inside a degenerate cluster") {
  // four-fold level at 1.2 straddles the k = 4 cutoff
  std::vector<double> pairs = {1.0, 1.2, 1.2, 1.6};
  const auto op = make_op(gapped_spectrum(pairs), 29);
  auto s = base_settings();
  s.k = 4;
  s.sigma = 0.9;  // fold order favors the 1.0 and 1.2 levels
  const auto out = solve_gap_states(op, s);
  REQUIRE(out.values.size() >= 6);
  CHECK_THAT(out.values(1), Catch::Matchers::WithinAbs(1.0, 1e-7));
  for (int j = 2; j < 6; ++j)
    CHECK_THAT(out.values(j), Catch::Matchers::WithinAbs(1.2, 1e-7));
}

TEST_CASE("explicit sigma reproduces the auto choice") {
  const auto op = make_op(gapped_spectrum(kGapLevels), 55);
  auto s = base_settings();
  const auto a = solve_gap_states(op, s);
  s.sigma = 1.1;
  const auto b = solve_gap_states(op, s);
  REQUIRE(a.values.size() == b.values.size());
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-8);
}
