#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace siparray {

class SiteModelError : public std::runtime_error {
 public:
  explicit SiteModelError(const std::string& msg, double discriminant = 0)
      : std::runtime_error(msg), discriminant(discriminant) {}
  double discriminant;
};

// Few-level Hamiltonians in the dopant-site basis. Conventions: hoppings
// enter as -t off-diagonal with t >= 0 for the dimer and trimer; the square
// diagonal coupling beta is unconstrained in sign.

struct DimerParams {
  double eps_P;   // single-dopant class energy, eV
  double t;       // nearest-neighbor tunneling, eV
  double lambda;  // on-site shift from the partner's Coulomb tail, eV
};

struct TrimerParams {
  double eps_P;
  double t;
  double lambda_i;  // inner-site shift
  double lambda_o;  // outer-site shift
};

struct SquareParams {
  double eps_P;
  double t;      // side coupling
  double beta;   // diagonal coupling, may be negative
  double lambda;
};

template <int N>
struct SiteEigen {
  Eigen::Matrix<double, N, 1> values;   // ascending
  Eigen::Matrix<double, N, N> vectors;  // columns match values
};

inline Eigen::Matrix2d dimer_hamiltonian(const DimerParams& p) {
  Eigen::Matrix2d h;
  h << p.eps_P - p.lambda, -p.t, -p.t, p.eps_P - p.lambda;
  return h;
}

// eps^- = eps_P - lambda - t (symmetric), eps^+ = eps_P - lambda + t
inline SiteEigen<2> dimer_eigen(const DimerParams& p) {
  SiteEigen<2> e;
  e.values << p.eps_P - p.lambda - p.t, p.eps_P - p.lambda + p.t;
  const double s = 1.0 / std::sqrt(2.0);
  e.vectors << s, s, s, -s;
  return e;
}

inline Eigen::Matrix3d trimer_hamiltonian(const TrimerParams& p) {
  // basis: outer, inner, outer
  Eigen::Matrix3d h;
  h << p.eps_P - p.lambda_o, -p.t, 0,
       -p.t, p.eps_P - p.lambda_i, -p.t,
       0, -p.t, p.eps_P - p.lambda_o;
  return h;
}

// eps^0 = eps_P - lambda_o with zero inner-site amplitude;
// eps^{+-1} = eps_P - (lambda_i + lambda_o)/2 -+ sqrt(2t^2 + ((li-lo)/2)^2)
inline SiteEigen<3> trimer_eigen(const TrimerParams& p) {
  SiteEigen<3> e;
  const double mean = p.eps_P - 0.5 * (p.lambda_i + p.lambda_o);
  const double half = 0.5 * (p.lambda_i - p.lambda_o);
  const double root = std::sqrt(2.0 * p.t * p.t + half * half);
  const double e_m = mean - root, e_0 = p.eps_P - p.lambda_o,
               e_p = mean + root;
  e.values << e_m, e_0, e_p;
  // in-plane pair from the 2x2 block on {(outer+outer)/sqrt2, inner}
  const double s = 1.0 / std::sqrt(2.0);
  auto sym_vec = [&](double ev) {
    // (a, b): ((eps_P - lambda_o) - ev) a = sqrt(2) t b
    Eigen::Vector2d v(std::sqrt(2.0) * p.t, (p.eps_P - p.lambda_o) - ev);
    if (v.norm() < 1e-300) v << 1, 0;
    v.normalize();
    return Eigen::Vector3d(s * v(0), v(1), s * v(0));
  };
  e.vectors.col(0) = sym_vec(e_m);
  e.vectors.col(1) << s, 0, -s;
  e.vectors.col(2) = sym_vec(e_p);
  return e;
}

inline Eigen::Matrix4d square_hamiltonian(const SquareParams& p) {
  // basis: corners in cyclic order; sides couple -t, diagonals -beta
  const double d = p.eps_P - p.lambda;
  Eigen::Matrix4d h;
  h << d, -p.t, -p.beta, -p.t,
       -p.t, d, -p.t, -p.beta,
       -p.beta, -p.t, d, -p.t,
       -p.t, -p.beta, -p.t, d;
  return h;
}

// eps^{-1} = eps_P - lambda - 2t - beta (uniform vector),
// eps^0 = eps_P - lambda + beta (doubly degenerate),
// eps^{+1} = eps_P - lambda + 2t - beta (alternating vector)
inline SiteEigen<4> square_eigen(const SquareParams& p) {
  SiteEigen<4> e;
  const double d = p.eps_P - p.lambda;
  Eigen::Vector4d raw(d - 2 * p.t - p.beta, d + p.beta, d + p.beta,
                      d + 2 * p.t - p.beta);
  Eigen::Matrix4d v;
  const double h = 0.5, s = 1.0 / std::sqrt(2.0);
  v.col(0) << h, h, h, h;
  v.col(1) << s, 0, -s, 0;
  v.col(2) << 0, s, 0, -s;
  v.col(3) << h, -h, h, -h;
  // keep ascending order when t < 0 or large |beta| reorders levels
  std::array<int, 4> idx = {0, 1, 2, 3};
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return raw(a) < raw(b); });
  for (int j = 0; j < 4; ++j) {
    e.values(j) = raw(idx[j]);
    e.vectors.col(j) = v.col(idx[j]);
  }
  return e;
}

inline DimerParams invert_dimer(double e_minus, double e_plus, double eps_P) {
  if (e_minus > e_plus)
    throw SiteModelError("invert_dimer: eps- must not exceed eps+");
  return {eps_P, 0.5 * (e_plus - e_minus),
          eps_P - 0.5 * (e_plus + e_minus)};
}

inline TrimerParams invert_trimer(double e_m1, double e_0, double e_p1,
                                  double eps_P) {
  if (!(e_m1 <= e_0 && e_0 <= e_p1))
    throw SiteModelError("invert_trimer: energies must be ordered");
  const double lambda_o = eps_P - e_0;
  const double lambda_i = 2 * eps_P - (e_p1 + e_m1) - lambda_o;
  const double half_span = 0.5 * (e_p1 - e_m1);
  const double half_diff = 0.5 * (lambda_i - lambda_o);
  const double disc = half_span * half_span - half_diff * half_diff;
  if (disc < 0)
    throw SiteModelError(
        "invert_trimer: inconsistent level triple, discriminant " +
            std::to_string(disc),
        disc);
  return {eps_P, std::sqrt(disc / 2.0), lambda_i, lambda_o};
}

inline SquareParams invert_square(double e_m1, double e_0, double e_p1,
                                  double eps_P) {
  if (e_m1 > e_p1)
    throw SiteModelError("invert_square: eps-1 must not exceed eps+1");
  const double t = 0.25 * (e_p1 - e_m1);
  const double beta = 0.25 * (2 * e_0 - e_p1 - e_m1);
  const double lambda = eps_P - e_0 + beta;
  return {eps_P, t, beta, lambda};
}

// Overload taking the doubly degenerate pair; splits above the threshold
// are reported through *split_warning (eV) without failing the inversion.
inline SquareParams invert_square(double e_m1, double e_0a, double e_0b,
                                  double e_p1, double eps_P,
                                  double split_threshold,
                                  double* split_warning) {
  const double split = std::abs(e_0b - e_0a);
  if (split_warning) *split_warning = split > split_threshold ? split : 0.0;
  return invert_square(e_m1, 0.5 * (e_0a + e_0b), e_p1, eps_P);
}

}  // namespace siparray
