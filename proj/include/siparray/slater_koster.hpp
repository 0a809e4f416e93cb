#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "siparray/tbparams.hpp"

namespace siparray {

// Orbital index convention used throughout: s, px, py, pz, dxy, dyz, dzx,
// d(x2-y2), d(3z2-r2), s*.
enum Orbital : int {
  kS = 0,
  kPx = 1,
  kPy = 2,
  kPz = 3,
  kDxy = 4,
  kDyz = 5,
  kDzx = 6,
  kDx2y2 = 7,
  kDz2 = 8,
  kSstar = 9
};

using Matrix10d = Eigen::Matrix<double, 10, 10>;

// Two-center nearest-neighbor block H(i,j) for a bond pointing from atom i
// to atom j along the unit vector (l,m,n). Reversing the direction yields
// the transpose.
inline Matrix10d slater_koster_block(const Eigen::Vector3d& dir,
                                     const TBParameterSet& tb) {
  const double norm = dir.norm();
  if (std::abs(norm - 1.0) > 1e-12)
    throw std::invalid_argument("slater_koster_block: direction not unit");
  const double l = dir.x(), m = dir.y(), n = dir.z();
  const double l2 = l * l, m2 = m * m, n2 = n * n;
  const double r3 = std::sqrt(3.0);

  Matrix10d h = Matrix10d::Zero();

  // s and s* rows: diagonal-family terms first.
  h(kS, kS) = tb.V_sssigma;
  h(kSstar, kSstar) = tb.V_sstarsstarsigma;
  h(kS, kSstar) = tb.V_ssstarsigma;
  h(kSstar, kS) = tb.V_ssstarsigma;

  // s-p and s*-p (odd parity under bond reversal).
  const double dc[3] = {l, m, n};
  for (int c = 0; c < 3; ++c) {
    h(kS, kPx + c) = dc[c] * tb.V_spsigma;
    h(kPx + c, kS) = -dc[c] * tb.V_spsigma;
    h(kSstar, kPx + c) = dc[c] * tb.V_sstarpsigma;
    h(kPx + c, kSstar) = -dc[c] * tb.V_sstarpsigma;
  }

  // s-d and s*-d (even parity).
  const double sd[5] = {r3 * l * m, r3 * m * n, r3 * l * n,
                        0.5 * r3 * (l2 - m2), n2 - 0.5 * (l2 + m2)};
  for (int c = 0; c < 5; ++c) {
    h(kS, kDxy + c) = sd[c] * tb.V_sdsigma;
    h(kDxy + c, kS) = sd[c] * tb.V_sdsigma;
    h(kSstar, kDxy + c) = sd[c] * tb.V_sstardsigma;
    h(kDxy + c, kSstar) = sd[c] * tb.V_sstardsigma;
  }

  // p-p.
  {
    const double sg = tb.V_ppsigma, pi = tb.V_pppi;
    h(kPx, kPx) = l2 * sg + (1 - l2) * pi;
    h(kPy, kPy) = m2 * sg + (1 - m2) * pi;
    h(kPz, kPz) = n2 * sg + (1 - n2) * pi;
    h(kPx, kPy) = h(kPy, kPx) = l * m * (sg - pi);
    h(kPx, kPz) = h(kPz, kPx) = l * n * (sg - pi);
    h(kPy, kPz) = h(kPz, kPy) = m * n * (sg - pi);
  }

  // p-d (odd parity).
  {
    const double sg = tb.V_pdsigma, pi = tb.V_pdpi;
    double pd[3][5];
    pd[0][0] = r3 * l2 * m * sg + m * (1 - 2 * l2) * pi;          // x,xy
    pd[0][1] = r3 * l * m * n * sg - 2 * l * m * n * pi;          // x,yz
    pd[0][2] = r3 * l2 * n * sg + n * (1 - 2 * l2) * pi;          // x,zx
    pd[1][0] = r3 * m2 * l * sg + l * (1 - 2 * m2) * pi;          // y,xy
    pd[1][1] = r3 * m2 * n * sg + n * (1 - 2 * m2) * pi;          // y,yz
    pd[1][2] = r3 * l * m * n * sg - 2 * l * m * n * pi;          // y,zx
    pd[2][0] = r3 * l * m * n * sg - 2 * l * m * n * pi;          // z,xy
    pd[2][1] = r3 * n2 * m * sg + m * (1 - 2 * n2) * pi;          // z,yz
    pd[2][2] = r3 * n2 * l * sg + l * (1 - 2 * n2) * pi;          // z,zx
    pd[0][3] = 0.5 * r3 * l * (l2 - m2) * sg + l * (1 - l2 + m2) * pi;
    pd[1][3] = 0.5 * r3 * m * (l2 - m2) * sg - m * (1 + l2 - m2) * pi;
    pd[2][3] = 0.5 * r3 * n * (l2 - m2) * sg - n * (l2 - m2) * pi;
    pd[0][4] = l * (n2 - 0.5 * (l2 + m2)) * sg - r3 * l * n2 * pi;
    pd[1][4] = m * (n2 - 0.5 * (l2 + m2)) * sg - r3 * m * n2 * pi;
    pd[2][4] = n * (n2 - 0.5 * (l2 + m2)) * sg + r3 * n * (l2 + m2) * pi;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 5; ++b) {
        h(kPx + a, kDxy + b) = pd[a][b];
        h(kDxy + b, kPx + a) = -pd[a][b];
      }
  }

  // d-d.
  {
    const double sg = tb.V_ddsigma, pi = tb.V_ddpi, dl = tb.V_dddelta;
    auto set = [&](int a, int b, double v) {
      h(a, b) = v;
      h(b, a) = v;
    };
    set(kDxy, kDxy,
        3 * l2 * m2 * sg + (l2 + m2 - 4 * l2 * m2) * pi + (n2 + l2 * m2) * dl);
    set(kDyz, kDyz,
        3 * m2 * n2 * sg + (m2 + n2 - 4 * m2 * n2) * pi + (l2 + m2 * n2) * dl);
    set(kDzx, kDzx,
        3 * n2 * l2 * sg + (n2 + l2 - 4 * n2 * l2) * pi + (m2 + n2 * l2) * dl);
    set(kDxy, kDyz,
        3 * l * m2 * n * sg + l * n * (1 - 4 * m2) * pi + l * n * (m2 - 1) * dl);
    set(kDxy, kDzx,
        3 * l2 * m * n * sg + m * n * (1 - 4 * l2) * pi + m * n * (l2 - 1) * dl);
    set(kDyz, kDzx,
        3 * m * n2 * l * sg + m * l * (1 - 4 * n2) * pi + m * l * (n2 - 1) * dl);
    set(kDxy, kDx2y2, 1.5 * l * m * (l2 - m2) * sg + 2 * l * m * (m2 - l2) * pi +
                          0.5 * l * m * (l2 - m2) * dl);
    set(kDyz, kDx2y2,
        1.5 * m * n * (l2 - m2) * sg - m * n * (1 + 2 * (l2 - m2)) * pi +
            m * n * (1 + 0.5 * (l2 - m2)) * dl);
    set(kDzx, kDx2y2,
        1.5 * n * l * (l2 - m2) * sg + n * l * (1 - 2 * (l2 - m2)) * pi -
            n * l * (1 - 0.5 * (l2 - m2)) * dl);
    set(kDxy, kDz2, r3 * l * m * (n2 - 0.5 * (l2 + m2)) * sg -
                        2 * r3 * l * m * n2 * pi +
                        0.5 * r3 * l * m * (1 + n2) * dl);
    set(kDyz, kDz2, r3 * m * n * (n2 - 0.5 * (l2 + m2)) * sg +
                        r3 * m * n * (l2 + m2 - n2) * pi -
                        0.5 * r3 * m * n * (l2 + m2) * dl);
    set(kDzx, kDz2, r3 * l * n * (n2 - 0.5 * (l2 + m2)) * sg +
                        r3 * l * n * (l2 + m2 - n2) * pi -
                        0.5 * r3 * l * n * (l2 + m2) * dl);
    set(kDx2y2, kDx2y2, 0.75 * (l2 - m2) * (l2 - m2) * sg +
                            (l2 + m2 - (l2 - m2) * (l2 - m2)) * pi +
                            (n2 + 0.25 * (l2 - m2) * (l2 - m2)) * dl);
    set(kDx2y2, kDz2,
        0.5 * r3 * (l2 - m2) * (n2 - 0.5 * (l2 + m2)) * sg +
            r3 * n2 * (m2 - l2) * pi + 0.25 * r3 * (1 + n2) * (l2 - m2) * dl);
    set(kDz2, kDz2, (n2 - 0.5 * (l2 + m2)) * (n2 - 0.5 * (l2 + m2)) * sg +
                        3 * n2 * (l2 + m2) * pi +
                        0.75 * (l2 + m2) * (l2 + m2) * dl);
  }

  return h;
}

// On-site orbital energies as a 10-vector in the same orbital order.
inline Eigen::Matrix<double, 10, 1> onsite_energies(const TBParameterSet& tb) {
  Eigen::Matrix<double, 10, 1> e;
  e << tb.E_s, tb.E_p, tb.E_p, tb.E_p, tb.E_d, tb.E_d, tb.E_d, tb.E_d, tb.E_d,
      tb.E_sstar;
  return e;
}

// On-site spin-orbit term (Delta_p/3) L.sigma restricted to the p shell,
// expressed in the 20x20 spin-orbital basis with index 10*spin + orbital.
inline Eigen::Matrix<std::complex<double>, 20, 20> spin_orbit_block(
    double delta_p) {
  using cd = std::complex<double>;
  Eigen::Matrix<cd, 20, 20> so = Eigen::Matrix<cd, 20, 20>::Zero();
  const double lam = delta_p / 3.0;
  const cd i(0.0, 1.0);
  auto up = [](int orb) { return orb; };
  auto dn = [](int orb) { return 10 + orb; };
  // up-up block: lam * Lz
  so(up(kPx), up(kPy)) = -i * lam;
  so(up(kPy), up(kPx)) = i * lam;
  // down-down block: -lam * Lz
  so(dn(kPx), dn(kPy)) = i * lam;
  so(dn(kPy), dn(kPx)) = -i * lam;
  // up-down block: lam * (Lx - i Ly)
  so(up(kPx), dn(kPz)) = lam;
  so(up(kPy), dn(kPz)) = -i * lam;
  so(up(kPz), dn(kPx)) = -lam;
  so(up(kPz), dn(kPy)) = i * lam;
  // down-up block: hermitian conjugate
  so(dn(kPz), up(kPx)) = lam;
  so(dn(kPz), up(kPy)) = i * lam;
  so(dn(kPx), up(kPz)) = -lam;
  so(dn(kPy), up(kPz)) = -i * lam;
  return so;
}

}  // namespace siparray
