#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <vector>

#include "siparray/constants.hpp"
#include "siparray/geometry.hpp"
#include "siparray/planes.hpp"
#include "siparray/slater_koster.hpp"
#include "siparray/tbparams.hpp"

namespace siparray {

// Matrix-free sparse Hamiltonian in the 20-spin-orbital-per-site basis.
// Row layout: global index = 20*site + 10*spin + orbital. All bond blocks
// are one of eight direction matrices (four bonds and their transposes), so
// only the diagonal potential and the surface passivation blocks are stored
// per site. Hermiticity is exact by construction.
class HamiltonianOperator {
 public:
  HamiltonianOperator(const Supercell& cell, const TBParameterSet& tb,
                      const ImpurityPotential& pot)
      : n_sites_(cell.n_sites()),
        onsite_(onsite_energies(tb)),
        so_lambda_(tb.Delta_p / 3.0) {
    for (const auto& p : pot.dopant_positions) {
      const Eigen::Vector3i q(static_cast<int>(std::lround(4 * p.x())),
                              static_cast<int>(std::lround(4 * p.y())),
                              static_cast<int>(std::lround(4 * p.z())));
      if (cell.find_site(q) < 0)
        throw GeometryError("assemble: dopant position not a cell site");
    }

    const auto& bonds = bond_quarters();
    for (int b = 0; b < 4; ++b) {
      const Eigen::Vector3d dir = bonds[b].cast<double>().normalized();
      sk_[b] = slater_koster_block(dir, tb);
      sk_[b + 4] = sk_[b].transpose();
    }
    for (int b = 0; b < 8; ++b) skf_[b] = sk_[b].cast<float>();

    nbr_.resize(4ull * n_sites_);
    dir_.resize(4ull * n_sites_);
    potential_.resize(n_sites_);
    surface_block_.assign(n_sites_, -1);
    for (int i = 0; i < n_sites_; ++i) {
      const Eigen::Vector3d ri = cell.sites[i].position();
      potential_[i] = pot.value_at(ri);
      Matrix10d pass = Matrix10d::Zero();
      bool dangling = false;
      for (int b = 0; b < 4; ++b) {
        nbr_[4 * i + b] = cell.neighbors[i][b];
        dir_[4 * i + b] = cell.neighbor_dir[i][b];
        if (cell.neighbors[i][b] < 0) {
          dangling = true;
          const Eigen::Vector3i q = cell.sites[i].sublattice == Sublattice::A
                                        ? bonds[b]
                                        : Eigen::Vector3i(-bonds[b]);
          const Eigen::Vector3d d = q.cast<double>().normalized();
          // sp3 hybrid pointing into the dangling bond
          Eigen::Matrix<double, 10, 1> h = Eigen::Matrix<double, 10, 1>::Zero();
          h(kS) = 0.5;
          h(kPx) = 0.5 * std::sqrt(3.0) * d.x();
          h(kPy) = 0.5 * std::sqrt(3.0) * d.y();
          h(kPz) = 0.5 * std::sqrt(3.0) * d.z();
          pass += kPassivationShiftEv * (h * h.transpose());
        }
      }
      if (dangling) {
        surface_block_[i] = static_cast<int>(surf_.size());
        surf_.push_back(pass);
        surff_.push_back(pass.cast<float>());
      }
    }

    // spin-orbit entries as (row, col, value) in the 20x20 on-site block
    const auto so = spin_orbit_block(tb.Delta_p);
    for (int r = 0; r < 20; ++r)
      for (int c = 0; c < 20; ++c)
        if (std::abs(so(r, c)) > 0)
          so_entries_.push_back({r, c, so(r, c)});
  }

  Eigen::Index dim() const {
    return static_cast<Eigen::Index>(kSpinOrbitalsPerAtom) * n_sites_;
  }
  int n_sites() const { return n_sites_; }
  const std::vector<double>& site_potential() const { return potential_; }

  // Crude spectral radius bound from Gershgorin discs over the block rows.
  double norm_bound() const {
    double bond = 0;
    for (int b = 0; b < 4; ++b)
      bond = std::max(bond, sk_[b].cwiseAbs().rowwise().sum().maxCoeff());
    double pot_lo = 0, pot_hi = 0;
    for (double u : potential_) {
      pot_lo = std::min(pot_lo, u);
      pot_hi = std::max(pot_hi, u);
    }
    const double e_lo = onsite_.minCoeff() + pot_lo - 4 * bond - 1.0;
    const double e_hi = onsite_.maxCoeff() + pot_hi + 4 * bond +
                        kPassivationShiftEv * 4 + 1.0;
    return std::max(std::abs(e_lo), std::abs(e_hi));
  }

  // y = alpha*H*x + beta*y; beta = 0 overwrites y (which may be unsized)
  template <typename T>
  void apply(const Planes<T>& x, Planes<T>& y, T alpha = T(1),
             T beta = T(0)) const {
    const Eigen::Index m = x.cols();
    if (beta == T(0)) y.resize(x.rows(), m);
    using Mat10 = Eigen::Matrix<T, 10, 10>;
    using Buf = Eigen::Matrix<T, 20, Eigen::Dynamic>;
    Buf lre(20, m), lim(20, m);
    Eigen::Matrix<T, 20, 1> diag;
    for (int i = 0; i < n_sites_; ++i) {
      const Eigen::Index row0 = 20ll * i;
      diag.template head<10>() =
          (onsite_.array() + potential_[i]).template cast<T>();
      diag.template tail<10>() = diag.template head<10>();
      lre.noalias() = diag.asDiagonal() * x.re.middleRows(row0, 20);
      lim.noalias() = diag.asDiagonal() * x.im.middleRows(row0, 20);
      for (const auto& e : so_entries_) {
        const T vre = static_cast<T>(e.val.real());
        const T vim = static_cast<T>(e.val.imag());
        lre.row(e.row) +=
            vre * x.re.row(row0 + e.col) - vim * x.im.row(row0 + e.col);
        lim.row(e.row) +=
            vre * x.im.row(row0 + e.col) + vim * x.re.row(row0 + e.col);
      }
      if (surface_block_[i] >= 0) {
        const Mat10& s = surf_mat<T>(surface_block_[i]);
        for (int sp = 0; sp < 2; ++sp) {
          lre.middleRows(10 * sp, 10).noalias() +=
              s * x.re.middleRows(row0 + 10 * sp, 10);
          lim.middleRows(10 * sp, 10).noalias() +=
              s * x.im.middleRows(row0 + 10 * sp, 10);
        }
      }
      for (int b = 0; b < 4; ++b) {
        const std::int32_t j = nbr_[4 * i + b];
        if (j < 0) continue;
        const Mat10& skb = sk_mat<T>(dir_[4 * i + b]);
        const Eigen::Index jrow = 20ll * j;
        for (int sp = 0; sp < 2; ++sp) {
          lre.middleRows(10 * sp, 10).noalias() +=
              skb * x.re.middleRows(jrow + 10 * sp, 10);
          lim.middleRows(10 * sp, 10).noalias() +=
              skb * x.im.middleRows(jrow + 10 * sp, 10);
        }
      }
      if (beta == T(0)) {
        y.re.middleRows(row0, 20) = alpha * lre;
        y.im.middleRows(row0, 20) = alpha * lim;
      } else {
        y.re.middleRows(row0, 20) =
            alpha * lre + beta * y.re.middleRows(row0, 20);
        y.im.middleRows(row0, 20) =
            alpha * lim + beta * y.im.middleRows(row0, 20);
      }
    }
  }

  Eigen::VectorXcd matvec(const Eigen::VectorXcd& x) const {
    Planes<double> px(dim(), 1), py;
    px.set_column(0, x);
    apply(px, py);
    return py.column(0);
  }

  Eigen::VectorXcd column(Eigen::Index k) const {
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(dim());
    e(k) = 1.0;
    return matvec(e);
  }

  const Matrix10d& sk_block(int dir_index) const { return sk_[dir_index]; }

 private:
  struct SOEntry {
    int row, col;
    std::complex<double> val;
  };

  template <typename T>
  const Eigen::Matrix<T, 10, 10>& sk_mat(int d) const {
    if constexpr (std::is_same_v<T, float>)
      return skf_[d];
    else
      return sk_[d];
  }
  template <typename T>
  const Eigen::Matrix<T, 10, 10>& surf_mat(int idx) const {
    if constexpr (std::is_same_v<T, float>)
      return surff_[idx];
    else
      return surf_[idx];
  }

  int n_sites_;
  Eigen::Matrix<double, 10, 1> onsite_;
  double so_lambda_;
  std::array<Matrix10d, 8> sk_;
  std::array<Eigen::Matrix<float, 10, 10>, 8> skf_;
  std::vector<std::int32_t> nbr_;
  std::vector<std::int8_t> dir_;
  std::vector<double> potential_;
  std::vector<int> surface_block_;
  std::vector<Matrix10d> surf_;
  std::vector<Eigen::Matrix<float, 10, 10>> surff_;
  std::vector<SOEntry> so_entries_;
};

}  // namespace siparray
