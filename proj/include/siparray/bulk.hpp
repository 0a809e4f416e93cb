#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "siparray/geometry.hpp"
#include "siparray/slater_koster.hpp"
#include "siparray/tbparams.hpp"

namespace siparray {

// Bloch Hamiltonian of bulk Si for wavevector k given in units of 2*pi/a0.
// Basis: two atoms per conventional-cell primitive basis, 20 spin-orbitals
// each; phases use atom positions so band energies are convention-free.
inline Eigen::MatrixXcd bulk_bloch_hamiltonian(const Eigen::Vector3d& k,
                                               const TBParameterSet& tb) {
  using cd = std::complex<double>;
  const auto e10 = onsite_energies(tb);
  const auto so = spin_orbit_block(tb.Delta_p);

  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(40, 40);
  for (int a = 0; a < 2; ++a) {
    for (int sp = 0; sp < 2; ++sp)
      for (int o = 0; o < 10; ++o) h(20 * a + 10 * sp + o, 20 * a + 10 * sp + o) = e10(o);
    h.block<20, 20>(20 * a, 20 * a) += so;
  }

  Eigen::Matrix<cd, 20, 20> t = Eigen::Matrix<cd, 20, 20>::Zero();
  for (int b = 0; b < 4; ++b) {
    const Eigen::Vector3d delta = bond_quarters()[b].cast<double>() / 4.0;
    const Matrix10d sk = slater_koster_block(delta.normalized(), tb);
    const cd phase = std::exp(cd(0.0, 2.0 * std::numbers::pi * k.dot(delta)));
    for (int sp = 0; sp < 2; ++sp)
      t.block<10, 10>(10 * sp, 10 * sp) += phase * sk;
  }
  h.block<20, 20>(0, 20) = t;
  h.block<20, 20>(20, 0) = t.adjoint();
  return h;
}

inline Eigen::VectorXd bulk_bands_at(const Eigen::Vector3d& k,
                                     const TBParameterSet& tb) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
      bulk_bloch_hamiltonian(k, tb), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

struct BulkBandEdges {
  double valence_max_ev = 0;     // at Gamma
  double conduction_min_ev = 0;  // on the Delta line
  double valley_k_2pi_a0 = 0;    // position of the conduction minimum
  double gap_ev = 0;
  bool indirect = false;
};

// Scans Gamma-X for the conduction minimum and takes the valence maximum at
// Gamma. With spin, bands 0..7 are valence and band 8 is the lowest
// conduction band.
inline BulkBandEdges bulk_band_edges(const TBParameterSet& tb,
                                     int n_scan = 401) {
  BulkBandEdges out;
  out.valence_max_ev = bulk_bands_at(Eigen::Vector3d::Zero(), tb)(7);

  double best_e = 1e30, best_k = 0;
  double cond_at_gamma = 0;
  for (int i = 0; i < n_scan; ++i) {
    const double kx = static_cast<double>(i) / (n_scan - 1);
    const Eigen::VectorXd bands =
        bulk_bands_at(Eigen::Vector3d(kx, 0, 0), tb);
    if (i == 0) cond_at_gamma = bands(8);
    if (bands(8) < best_e) {
      best_e = bands(8);
      best_k = kx;
    }
  }
  out.conduction_min_ev = best_e;
  out.valley_k_2pi_a0 = best_k;
  out.gap_ev = out.conduction_min_ev - out.valence_max_ev;
  out.indirect = best_k > 0.05 && best_e < cond_at_gamma - 1e-6;
  return out;
}

}  // namespace siparray
