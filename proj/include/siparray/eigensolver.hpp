#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "siparray/planes.hpp"

namespace siparray {

struct SolverSettings {
  int k = 12;                   // converged in-gap pairs requested
  double window_lo = 0.0;       // eV
  double window_hi = 0.0;       // eV
  double tol = 1e-8;            // residual tolerance, relative to |H| bound
  std::uint64_t seed = 1234;
  double sigma = std::numeric_limits<double>::quiet_NaN();  // NaN = auto
  int block_extra = 8;          // buffer columns beyond k
  int filter_degree = 120;      // Chebyshev degree per restart
  int max_restarts = 400;
  int refine_chunk = 16;        // double-precision refinement chunk size
  bool force_double = false;    // skip the single-precision stage
  bool force_mixed = false;     // use it even on small problems
  double degeneracy_threshold = 1e-6;  // eV, spin-pair detection
  double memory_budget_gb = 4.2;
  std::ostream* log = nullptr;
};

struct SolverStats {
  std::int64_t h_applies = 0;  // single-vector equivalent H applications
  double seconds = 0;
  double effective_gbps = 0;
  int restarts = 0;
};

struct EigenSet {
  Eigen::VectorXd values;          // ascending, inside the gap window
  Planes<double> vectors;          // orthonormal columns matching values
  Eigen::VectorXd residual_norms;  // ||Hv - lambda v||_2 per column
  double window_lo = 0, window_hi = 0;
  std::vector<std::pair<int, int>> pairing;  // spin-conjugate index pairs
  bool converged = true;   // all requested pairs reached tolerance
  bool window_full = true; // window contained at least k states
  std::string diagnostics;
  SolverStats stats;
};

class EigensolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Consecutive-pair spin pairing with a degeneracy threshold. Throws with a
// gap listing when the Kramers structure is broken.
inline std::vector<std::pair<int, int>> spin_pairing(
    const Eigen::VectorXd& values, double threshold = 1e-6) {
  if (values.size() % 2 != 0)
    throw EigensolverError("spin_pairing: odd state count");
  std::vector<std::pair<int, int>> pairs;
  std::ostringstream bad;
  for (Eigen::Index i = 0; i + 1 < values.size(); i += 2) {
    if (std::abs(values(i + 1) - values(i)) > threshold)
      bad << "  states " << i << "," << i + 1 << ": gap "
          << values(i + 1) - values(i) << " eV\n";
    pairs.emplace_back(static_cast<int>(i), static_cast<int>(i + 1));
  }
  if (bad.tellp() > 0)
    throw EigensolverError("spin_pairing: unpaired states detected\n" +
                           bad.str());
  return pairs;
}

namespace detail {

// Lanczos estimate of the extreme eigenvalues of a Hermitian operator.
template <typename Op>
std::pair<double, double> spectral_bounds(const Op& op, std::uint64_t seed,
                                          int steps = 60) {
  const Eigen::Index n = op.dim();
  Planes<double> v(n, 1), w(n, 1), prev(n, 1);
  blk::fill_random(v, seed ^ 0x5bd1e995);
  double nv = blk::column_norms(v)(0);
  v.re /= nv;
  v.im /= nv;
  prev.setZero();
  Eigen::VectorXd alpha(steps), beta(steps);
  double beta_prev = 0;
  int done = 0;
  for (int j = 0; j < steps; ++j) {
    op.apply(v, w);
    const double a = (v.re.col(0).dot(w.re.col(0)) +
                      v.im.col(0).dot(w.im.col(0)));
    alpha(j) = a;
    w.re.col(0) -= a * v.re.col(0) + beta_prev * prev.re.col(0);
    w.im.col(0) -= a * v.im.col(0) + beta_prev * prev.im.col(0);
    const double b = blk::column_norms(w)(0);
    done = j + 1;
    if (b < 1e-10) break;
    beta(j) = b;
    prev = v;
    v.re = w.re / b;
    v.im = w.im / b;
    beta_prev = b;
  }
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(done, done);
  for (int j = 0; j < done; ++j) {
    t(j, j) = alpha(j);
    if (j + 1 < done) t(j, j + 1) = t(j + 1, j) = beta(j);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t, Eigen::EigenvaluesOnly);
  const double spread = es.eigenvalues()(done - 1) - es.eigenvalues()(0);
  return {es.eigenvalues()(0) - 0.01 * spread,
          es.eigenvalues()(done - 1) + 0.01 * spread};
}

}  // namespace detail

// Interior eigensolver: Chebyshev-filtered subspace iteration on the folded
// operator (H - sigma)^2, with locking, a single-precision filtering stage
// and double-precision chunked refinement. The contract is the EigenSet
// post-condition, not the method.
template <typename Op>
class GapStateSolver {
 public:
  GapStateSolver(const Op& op, SolverSettings s) : op_(op), s_(std::move(s)) {
    if (s_.k < 2) throw EigensolverError("solve_gap_states: k must be >= 2");
    if (!(s_.window_lo < s_.window_hi))
      throw EigensolverError("solve_gap_states: empty gap window");
    if (s_.tol < 1e-10 || s_.tol > 1e-4)
      throw EigensolverError("solve_gap_states: tol outside [1e-10, 1e-4]");
    dim_ = op_.dim();
  }

  EigenSet solve(const Planes<double>* guess = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    auto [lam_lo, lam_hi] = detail::spectral_bounds(op_, s_.seed);
    applies_ += 60;
    scale_ = std::max(std::abs(lam_lo), std::abs(lam_hi));
    tol_abs_ = s_.tol * scale_;
    sigma_ = std::isnan(s_.sigma)
                 ? s_.window_hi - std::max(0.10, 0.15 * (s_.window_hi -
                                                         s_.window_lo))
                 : s_.sigma;
    fold_ub_ = std::pow(
        std::max(std::abs(lam_lo - sigma_), std::abs(lam_hi - sigma_)) * 1.02,
        2.0);
    log() << "# solver dim=" << dim_ << " k=" << s_.k << " sigma=" << sigma_
          << " window=[" << s_.window_lo << "," << s_.window_hi
          << "] tol_abs=" << tol_abs_ << " fold_ub=" << fold_ub_ << "\n";

    const int m = s_.k + s_.block_extra;
    check_memory(m);

    Planes<double> qd;  // refined double-precision vectors
    if (s_.force_double || (dim_ < 60000 && !s_.force_mixed)) {
      run_stage<double>(m, guess, tol_abs_, qd);
    } else {
      Planes<float> qf;
      const double sp_floor = std::max(tol_abs_, 2e-6 * scale_);
      run_stage<float>(m, guess, sp_floor, qf);
      refine_double(qf, qd);
    }

    return finalize(qd, t0);
  }

 private:
  std::ostream& log() {
    static std::ostream null_stream(nullptr);
    return s_.log ? *s_.log : null_stream;
  }

  void check_memory(int m) const {
    // 3 filter blocks + locked storage, split-complex
    const double bytes = 3.0 * 2 * dim_ * m * 4 + 2.0 * dim_ * m * 4 +
                         2.0 * dim_ * (s_.k + 4) * 8 * 3;
    if (bytes > s_.memory_budget_gb * 1e9)
      throw EigensolverError(
          "solve_gap_states: estimated working set " +
          std::to_string(bytes / 1e9) + " GB exceeds budget " +
          std::to_string(s_.memory_budget_gb) + " GB");
  }

  double fold(double lambda) const {
    const double d = lambda - sigma_;
    return d * d;
  }

  // One Chebyshev-filtered subspace iteration stage in precision T.
  // On return q_out holds the locked Ritz vectors ordered by folded value,
  // followed by unconverged active columns if locking fell short.
  template <typename T>
  void run_stage(int m, const Planes<double>* guess, double target,
                 Planes<T>& q_out) {
    Planes<T> x(dim_, m), t(dim_, m), prev(dim_, m);
    Planes<T> locked;
    locked.resize(dim_, 0);
    Eigen::VectorXd locked_vals(0);

    int have = 0;
    if (guess) {
      const int g = std::min<int>(guess->cols(), m);
      x.re.leftCols(g) = guess->re.leftCols(g).template cast<T>();
      x.im.leftCols(g) = guess->im.leftCols(g).template cast<T>();
      have = g;
    }
    if (have < m) {
      Planes<T> r(dim_, m - have);
      blk::fill_random(r, s_.seed);
      x.re.rightCols(m - have) = r.re;
      x.im.rightCols(m - have) = r.im;
    }
    blk::cholesky_qr(x, s_.seed + 7);

    double cut = fold_ub_ / 100.0;  // refined after first Rayleigh-Ritz
    int stalled = 0;
    double best_res = 1e30;
    for (int restart = 0; restart < s_.max_restarts; ++restart) {
      chebyshev_filter(x, t, prev, cut, s_.filter_degree);
      blk::project_out(x, locked);
      blk::cholesky_qr(x, s_.seed + restart);

      // Rayleigh-Ritz in H
      op_.apply(x, t);
      applies_ += x.cols();
      Eigen::MatrixXcd sh = blk::gram(x, t);
      sh = ((sh + sh.adjoint()) * 0.5).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(sh);
      Eigen::VectorXd theta = es.eigenvalues();
      Eigen::MatrixXcd v = es.eigenvectors();
      // sort Ritz pairs by folded distance
      std::vector<int> order(theta.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return fold(theta(a)) < fold(theta(b));
      });
      Eigen::MatrixXcd vs(v.rows(), v.cols());
      Eigen::VectorXd ts(theta.size());
      for (int j = 0; j < static_cast<int>(order.size()); ++j) {
        vs.col(j) = v.col(order[j]);
        ts(j) = theta(order[j]);
      }
      blk::multiply_inplace(x, vs);
      blk::multiply_inplace(t, vs);

      // residuals r_j = ||(HX)_j - theta_j X_j||
      Eigen::VectorXd res(ts.size());
      for (Eigen::Index j = 0; j < ts.size(); ++j) {
        const double rr =
            (t.re.col(j).template cast<double>() -
             ts(j) * x.re.col(j).template cast<double>())
                .squaredNorm() +
            (t.im.col(j).template cast<double>() -
             ts(j) * x.im.col(j).template cast<double>())
                .squaredNorm();
        res(j) = std::sqrt(rr);
      }

      const int wanted_total = s_.k + 2;
      const int still_needed =
          std::max(0, wanted_total - static_cast<int>(locked.cols()));
      // converged prefix in fold order
      int prefix = 0;
      while (prefix < res.size() && res(prefix) <= target) ++prefix;

      const double max_need =
          still_needed > 0 ? res.head(std::min<int>(still_needed, res.size()))
                                 .maxCoeff()
                           : 0.0;
      log() << "restart " << restart << " prec=" << (sizeof(T) == 4 ? "sp" : "dp")
            << " deg=" << s_.filter_degree << " locked=" << locked.cols()
            << " cut=" << cut << " res_head=" << max_need << "\n";
      for (Eigen::Index j = 0; j < ts.size(); ++j)
        log() << "  ritz " << j << " value=" << ts(j) << " res=" << res(j)
              << "\n";

      // lock converged prefix pairs (keep pairs together)
      prefix = std::min(prefix, still_needed);
      prefix -= prefix % 2;
      if (prefix > 0) {
        const Eigen::Index old = locked.cols();
        locked.re.conservativeResize(dim_, old + prefix);
        locked.im.conservativeResize(dim_, old + prefix);
        locked.re.rightCols(prefix) = x.re.leftCols(prefix);
        locked.im.rightCols(prefix) = x.im.leftCols(prefix);
        locked_vals.conservativeResize(old + prefix);
        locked_vals.tail(prefix) = ts.head(prefix);
        // drop locked columns from the active block, keep block size by
        // appending the next Ritz columns plus random fill
        const int keep = static_cast<int>(x.cols()) - prefix;
        Planes<T> nx(dim_, x.cols());
        nx.re.leftCols(keep) = x.re.rightCols(keep);
        nx.im.leftCols(keep) = x.im.rightCols(keep);
        Planes<T> r(dim_, prefix);
        blk::fill_random(r, s_.seed + 1000 + restart);
        nx.re.rightCols(prefix) = r.re;
        nx.im.rightCols(prefix) = r.im;
        x = std::move(nx);
        Eigen::VectorXd ts2 = ts.tail(keep).eval();
        ts = ts2;
      }

      if (static_cast<int>(locked.cols()) >= wanted_total) break;
      if (max_need < best_res * 0.7) {
        best_res = max_need;
        stalled = 0;
      } else if (++stalled >= 6) {
        log() << "# stage stalled at res=" << max_need << "\n";
        break;
      }

      // next suppression cutoff: just above the active block's fold values
      double active_max = 0;
      for (Eigen::Index j = 0; j < ts.size(); ++j)
        active_max = std::max(active_max, fold(ts(j)));
      cut = std::min(std::max(active_max * 1.05, 1e-8), fold_ub_ / 4.0);
      ++restarts_;
    }

    if (static_cast<int>(locked.cols()) >= s_.k + 2) {
      q_out = std::move(locked);
      return;
    }
    // locking fell short; hand over the active block as well
    const Eigen::Index total = locked.cols() + x.cols();
    q_out.resize(dim_, total);
    q_out.re.leftCols(locked.cols()) = locked.re;
    q_out.im.leftCols(locked.cols()) = locked.im;
    q_out.re.rightCols(x.cols()) = x.re;
    q_out.im.rightCols(x.cols()) = x.im;
  }

  // Scaled three-term Chebyshev recurrence on the folded operator, mapping
  // [cut, fold_ub] to [-1, 1].
  template <typename T>
  void chebyshev_filter(Planes<T>& x, Planes<T>& t, Planes<T>& prev,
                        double cut, int degree) {
    const double c = 0.5 * (fold_ub_ + cut);
    const double e = 0.5 * (fold_ub_ - cut);
    const double s2 = sigma_;

    // first step: prev <- x, x <- (F x - c x)/e with F = (H - sigma)^2
    prev.re = x.re;
    prev.im = x.im;
    {
      op_.apply(x, t);  // t = H x_old
      op_.apply(t, x, static_cast<T>(1.0 / e), static_cast<T>(0.0));
      applies_ += 2 * x.cols();
      const double a1 = (1.0 / e) * (-2.0 * s2);
      const double a0 = (1.0 / e) * (s2 * s2 - c);
      x.re.noalias() += static_cast<T>(a1) * t.re;
      x.im.noalias() += static_cast<T>(a1) * t.im;
      x.re.noalias() += static_cast<T>(a0) * prev.re;
      x.im.noalias() += static_cast<T>(a0) * prev.im;
    }

    for (int j = 1; j < degree; ++j) {
      // prev <- (2/e)(F x) - prev - (2c/e) x ; then swap(prev, x)
      op_.apply(x, t);
      op_.apply(t, prev, static_cast<T>(2.0 / e), static_cast<T>(-1.0));
      applies_ += 2 * x.cols();
      const double a1 = (2.0 / e) * (-2.0 * s2);
      const double a0 = (2.0 / e) * (s2 * s2 - c);
      prev.re.noalias() += static_cast<T>(a1) * t.re;
      prev.im.noalias() += static_cast<T>(a1) * t.im;
      prev.re.noalias() += static_cast<T>(a0) * x.re;
      prev.im.noalias() += static_cast<T>(a0) * x.im;
      std::swap(x.re, prev.re);
      std::swap(x.im, prev.im);

      // guard against overflow of the unnormalized polynomial iterates
      if ((j & 15) == 0 || j + 1 == degree) {
        const double mx = std::max<double>(
            std::abs(static_cast<double>(x.re.maxCoeff())),
            std::abs(static_cast<double>(x.re.minCoeff())));
        const double limit = sizeof(T) == 4 ? 1e12 : 1e100;
        if (mx > limit) {
          const T s = static_cast<T>(1.0 / mx);
          x.re *= s;
          x.im *= s;
          prev.re *= s;
          prev.im *= s;
        }
      }
    }
  }

  // Double-precision refinement of single-precision Ritz vectors, processed
  // in fold-ordered chunks with deflation against already-refined columns.
  void refine_double(const Planes<float>& qf, Planes<double>& qd) {
    const Eigen::Index total = qf.cols();
    qd.resize(dim_, total);
    Eigen::Index done = 0;
    // deflate against already-refined columns without copying them
    auto project_refined = [&](Planes<double>& xx) {
      if (done == 0) return;
      const auto qre = qd.re.leftCols(done);
      const auto qim = qd.im.leftCols(done);
      const Eigen::MatrixXd gre =
          qre.transpose() * xx.re + qim.transpose() * xx.im;
      const Eigen::MatrixXd gim =
          qre.transpose() * xx.im - qim.transpose() * xx.re;
      xx.re.noalias() -= qre * gre;
      xx.re.noalias() += qim * gim;
      xx.im.noalias() -= qre * gim;
      xx.im.noalias() -= qim * gre;
    };
    while (done < total) {
      Eigen::Index nc = std::min<Eigen::Index>(s_.refine_chunk, total - done);
      Planes<double> x(dim_, nc);
      x.re = qf.re.middleCols(done, nc).cast<double>();
      x.im = qf.im.middleCols(done, nc).cast<double>();

      Planes<double> t(dim_, nc), prev(dim_, nc);
      double cut = fold_ub_ / 100.0;
      for (int it = 0; it < 30; ++it) {
        project_refined(x);
        blk::cholesky_qr(x, s_.seed + 40000 + it);
        op_.apply(x, t);
        applies_ += nc;
        Eigen::MatrixXcd sh = blk::gram(x, t);
        sh = ((sh + sh.adjoint()) * 0.5).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(sh);
        Eigen::VectorXd theta = es.eigenvalues();
        Eigen::MatrixXcd v = es.eigenvectors();
        std::vector<int> order(theta.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
          return fold(theta(a)) < fold(theta(b));
        });
        Eigen::MatrixXcd vs(v.rows(), v.cols());
        Eigen::VectorXd ts(theta.size());
        for (int j = 0; j < static_cast<int>(order.size()); ++j) {
          vs.col(j) = v.col(order[j]);
          ts(j) = theta(order[j]);
        }
        blk::multiply_inplace(x, vs);
        blk::multiply_inplace(t, vs);
        double worst = 0;
        double active_max = 0;
        for (Eigen::Index j = 0; j < nc; ++j) {
          const double rr = (t.re.col(j) - ts(j) * x.re.col(j)).squaredNorm() +
                            (t.im.col(j) - ts(j) * x.im.col(j)).squaredNorm();
          worst = std::max(worst, std::sqrt(rr));
          active_max = std::max(active_max, fold(ts(j)));
        }
        log() << "refine chunk@" << done << " it=" << it << " res=" << worst
              << "\n";
        if (worst <= tol_abs_) break;
        cut = std::min(std::max(active_max * 1.05, 1e-8), fold_ub_ / 4.0);
        chebyshev_filter(x, t, prev, cut, std::max(40, s_.filter_degree / 2));
      }
      qd.re.middleCols(done, nc) = x.re;
      qd.im.middleCols(done, nc) = x.im;
      done += nc;
    }
  }

  EigenSet finalize(Planes<double>& qd,
                    std::chrono::steady_clock::time_point t0) {
    // global orthonormalization + Rayleigh-Ritz + certified residuals
    blk::cholesky_qr(qd, s_.seed + 77);
    const Eigen::Index total = qd.cols();
    Planes<double> hx(dim_, total);
    op_.apply(qd, hx);
    applies_ += total;
    Eigen::MatrixXcd sh = blk::gram(qd, hx);
    sh = ((sh + sh.adjoint()) * 0.5).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(sh);
    Eigen::VectorXd theta = es.eigenvalues();  // ascending in energy
    blk::multiply_inplace(qd, es.eigenvectors());
    blk::multiply_inplace(hx, es.eigenvectors());

    Eigen::VectorXd res(total);
    for (Eigen::Index j = 0; j < total; ++j)
      res(j) = std::sqrt(
          (hx.re.col(j) - theta(j) * qd.re.col(j)).squaredNorm() +
          (hx.im.col(j) - theta(j) * qd.im.col(j)).squaredNorm());

    // select states inside the window, ascending
    std::vector<Eigen::Index> in_window;
    for (Eigen::Index j = 0; j < total; ++j)
      if (theta(j) >= s_.window_lo && theta(j) <= s_.window_hi &&
          res(j) <= 100 * tol_abs_)
        in_window.push_back(j);

    Eigen::Index take = std::min<Eigen::Index>(s_.k, in_window.size());
    // never truncate inside a degenerate cluster
    const double cluster_tol = 10 * s_.tol * scale_ + s_.degeneracy_threshold;
    while (take > 0 && take < static_cast<Eigen::Index>(in_window.size()) &&
           theta(in_window[take]) - theta(in_window[take - 1]) < cluster_tol)
      ++take;

    EigenSet out;
    out.window_lo = s_.window_lo;
    out.window_hi = s_.window_hi;
    out.values.resize(take);
    out.residual_norms.resize(take);
    out.vectors.resize(dim_, take);
    for (Eigen::Index j = 0; j < take; ++j) {
      const Eigen::Index src = in_window[j];
      out.values(j) = theta(src);
      out.residual_norms(j) = res(src);
      out.vectors.re.col(j) = qd.re.col(src);
      out.vectors.im.col(j) = qd.im.col(src);
    }
    out.window_full = static_cast<Eigen::Index>(in_window.size()) >= s_.k;
    out.converged =
        take > 0 && out.residual_norms.head(std::min<Eigen::Index>(take, s_.k))
                            .maxCoeff() <= tol_abs_ * 1.0000001;
    if (!out.window_full)
      out.diagnostics += "window contained fewer states than requested; ";
    if (!out.converged) out.diagnostics += "not all pairs reached tolerance; ";
    try {
      if (take % 2 == 0)
        out.pairing = spin_pairing(out.values, std::max(s_.degeneracy_threshold,
                                                        100 * tol_abs_));
    } catch (const EigensolverError& err) {
      out.diagnostics += err.what();
    }

    const auto t1 = std::chrono::steady_clock::now();
    out.stats.h_applies = applies_;
    out.stats.seconds = std::chrono::duration<double>(t1 - t0).count();
    out.stats.restarts = restarts_;
    // bytes per single-vector apply: read x blocks ~5x + write y, split planes
    const double bytes = static_cast<double>(applies_) * dim_ * 2 * 8 * 6;
    out.stats.effective_gbps = bytes / 1e9 / std::max(1e-9, out.stats.seconds);
    log() << "# done applies=" << applies_ << " seconds=" << out.stats.seconds
          << " approx_GBps=" << out.stats.effective_gbps << "\n";
    return out;
  }

  const Op& op_;
  SolverSettings s_;
  Eigen::Index dim_ = 0;
  double sigma_ = 0, fold_ub_ = 0, scale_ = 1, tol_abs_ = 0;
  std::int64_t applies_ = 0;
  int restarts_ = 0;
};

template <typename Op>
EigenSet solve_gap_states(const Op& op, const SolverSettings& s,
                          const Planes<double>* guess = nullptr) {
  GapStateSolver<Op> solver(op, s);
  return solver.solve(guess);
}

}  // namespace siparray
