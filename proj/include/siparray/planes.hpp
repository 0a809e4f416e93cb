#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace siparray {

// Block of complex vectors stored as split real/imaginary planes. The split
// layout lets the Hamiltonian apply its real bond blocks with real GEMMs.
template <typename T>
struct Planes {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> re, im;

  Planes() = default;
  Planes(Eigen::Index rows, Eigen::Index cols) { resize(rows, cols); }

  void resize(Eigen::Index rows, Eigen::Index cols) {
    re.resize(rows, cols);
    im.resize(rows, cols);
  }
  void setZero() {
    re.setZero();
    im.setZero();
  }
  Eigen::Index rows() const { return re.rows(); }
  Eigen::Index cols() const { return re.cols(); }

  template <typename U>
  Planes<U> cast() const {
    Planes<U> out;
    out.re = re.template cast<U>();
    out.im = im.template cast<U>();
    return out;
  }

  Eigen::VectorXcd column(Eigen::Index j) const {
    Eigen::VectorXcd v(rows());
    for (Eigen::Index r = 0; r < rows(); ++r)
      v(r) = std::complex<double>(re(r, j), im(r, j));
    return v;
  }

  void set_column(Eigen::Index j, const Eigen::VectorXcd& v) {
    for (Eigen::Index r = 0; r < rows(); ++r) {
      re(r, j) = static_cast<T>(v(r).real());
      im(r, j) = static_cast<T>(v(r).imag());
    }
  }
};

namespace blk {

// G = X^H Y, accumulated in double regardless of the plane precision.
template <typename T>
Eigen::MatrixXcd gram(const Planes<T>& x, const Planes<T>& y) {
  const Eigen::MatrixXd rr = (x.re.transpose() * y.re).template cast<double>();
  const Eigen::MatrixXd ii = (x.im.transpose() * y.im).template cast<double>();
  const Eigen::MatrixXd ri = (x.re.transpose() * y.im).template cast<double>();
  const Eigen::MatrixXd ir = (x.im.transpose() * y.re).template cast<double>();
  Eigen::MatrixXcd g(x.cols(), y.cols());
  g.real() = rr + ii;
  g.imag() = ri - ir;
  return g;
}

// Y = X * C with complex coefficient matrix C.
template <typename T>
Planes<T> multiply(const Planes<T>& x, const Eigen::MatrixXcd& c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  const Mat cre = c.real().cast<T>();
  const Mat cim = c.imag().cast<T>();
  Planes<T> y(x.rows(), c.cols());
  y.re.noalias() = x.re * cre;
  y.re.noalias() -= x.im * cim;
  y.im.noalias() = x.re * cim;
  y.im.noalias() += x.im * cre;
  return y;
}

// X <- X * C in place, processing row chunks to bound temporary memory.
template <typename T>
void multiply_inplace(Planes<T>& x, const Eigen::MatrixXcd& c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  if (c.rows() != x.cols() || c.cols() > c.rows())
    throw std::invalid_argument("multiply_inplace: bad coefficient shape");
  const Mat cre = c.real().cast<T>();
  const Mat cim = c.imag().cast<T>();
  const Eigen::Index chunk = 1 << 16;
  Mat tre, tim;
  for (Eigen::Index r0 = 0; r0 < x.rows(); r0 += chunk) {
    const Eigen::Index nr = std::min(chunk, x.rows() - r0);
    tre.noalias() = x.re.middleRows(r0, nr) * cre;
    tre.noalias() -= x.im.middleRows(r0, nr) * cim;
    tim.noalias() = x.re.middleRows(r0, nr) * cim;
    tim.noalias() += x.im.middleRows(r0, nr) * cre;
    if (c.cols() < x.cols()) {
      x.re.middleRows(r0, nr).leftCols(c.cols()) = tre;
      x.im.middleRows(r0, nr).leftCols(c.cols()) = tim;
    } else {
      x.re.middleRows(r0, nr) = tre;
      x.im.middleRows(r0, nr) = tim;
    }
  }
  if (c.cols() < x.cols()) {
    x.re.conservativeResize(Eigen::NoChange, c.cols());
    x.im.conservativeResize(Eigen::NoChange, c.cols());
  }
}

// Y += X * C.
template <typename T>
void add_multiply(Planes<T>& y, const Planes<T>& x, const Eigen::MatrixXcd& c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  const Mat cre = c.real().cast<T>();
  const Mat cim = c.imag().cast<T>();
  y.re.noalias() += x.re * cre;
  y.re.noalias() -= x.im * cim;
  y.im.noalias() += x.re * cim;
  y.im.noalias() += x.im * cre;
}

template <typename T>
Eigen::VectorXd column_norms(const Planes<T>& x) {
  Eigen::VectorXd n(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    n(j) = std::sqrt(x.re.col(j).template cast<double>().squaredNorm() +
                     x.im.col(j).template cast<double>().squaredNorm());
  return n;
}

template <typename T>
void fill_random(Planes<T>& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      x.re(r, j) = static_cast<T>(dist(rng));
      x.im(r, j) = static_cast<T>(dist(rng));
    }
}

// Project the span of q out of x: x <- x - q (q^H x).
template <typename T>
void project_out(Planes<T>& x, const Planes<T>& q) {
  if (q.cols() == 0) return;
  const Eigen::MatrixXcd g = gram(q, x);
  add_multiply(x, q, (-g).eval());
}

// Orthonormalize x in place with shifted Cholesky QR (two passes). Returns
// false if the block was numerically rank-deficient and had to be repaired
// with random fill-ins.
template <typename T>
bool cholesky_qr(Planes<T>& x, std::uint64_t repair_seed = 12345) {
  bool clean = true;
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::MatrixXcd g = gram(x, x);
    const double shift =
        std::numeric_limits<T>::epsilon() * g.real().trace() * 4.0;
    g.diagonal().array() += shift;
    Eigen::LLT<Eigen::MatrixXcd> llt(g);
    if (llt.info() != Eigen::Success) {
      clean = false;
      Planes<T> fix(x.rows(), x.cols());
      fill_random(fix, repair_seed + pass);
      x.re += fix.re * static_cast<T>(1e-3);
      x.im += fix.im * static_cast<T>(1e-3);
      g = gram(x, x);
      g.diagonal().array() += shift;
      llt.compute(g);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("cholesky_qr: rank-deficient block");
    }
    const Eigen::MatrixXcd linv_t = llt.matrixL()
                                        .solve(Eigen::MatrixXcd::Identity(
                                            x.cols(), x.cols()))
                                        .adjoint();
    multiply_inplace(x, linv_t);
  }
  return clean;
}

}  // namespace blk
}  // namespace siparray
