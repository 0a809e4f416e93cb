#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "siparray/constants.hpp"

namespace siparray {

enum class Sublattice : std::uint8_t { A, B };
enum class Species : std::uint8_t { Si, P };

// Positions are stored as integer multiples of a0/4; exact lattice
// arithmetic, no floating-point snapping ambiguity.
struct LatticeSite {
  std::int32_t index = -1;
  Eigen::Vector3i pos_quarter;  // units of a0/4
  Sublattice sublattice = Sublattice::A;
  Species species = Species::Si;

  Eigen::Vector3d position() const {
    return pos_quarter.cast<double>() / 4.0;
  }
};

// The four A->B bond vectors of the diamond lattice, in units of a0/4.
inline const std::array<Eigen::Vector3i, 4>& bond_quarters() {
  static const std::array<Eigen::Vector3i, 4> b = {
      Eigen::Vector3i(1, 1, 1), Eigen::Vector3i(1, -1, -1),
      Eigen::Vector3i(-1, 1, -1), Eigen::Vector3i(-1, -1, 1)};
  return b;
}

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Supercell {
  Eigen::Vector3i extent;
  std::vector<LatticeSite> sites;
  // 4 neighbor slots per site; -1 where the bond dangles at the surface.
  // dir is 0..3 for A->B bonds, 4..7 for the reversed B->A bonds.
  std::vector<std::array<std::int32_t, 4>> neighbors;
  std::vector<std::array<std::int8_t, 4>> neighbor_dir;
  std::unordered_map<std::uint64_t, std::int32_t> site_lookup;

  static std::uint64_t pack(const Eigen::Vector3i& q) {
    // components fit easily in 20 bits after offsetting
    const std::uint64_t ox = static_cast<std::uint32_t>(q.x() + 4) & 0xfffff;
    const std::uint64_t oy = static_cast<std::uint32_t>(q.y() + 4) & 0xfffff;
    const std::uint64_t oz = static_cast<std::uint32_t>(q.z() + 4) & 0xfffff;
    return (ox << 40) | (oy << 20) | oz;
  }

  std::int32_t find_site(const Eigen::Vector3i& q) const {
    auto it = site_lookup.find(pack(q));
    return it == site_lookup.end() ? -1 : it->second;
  }

  int n_sites() const { return static_cast<int>(sites.size()); }

  bool is_surface(int i) const {
    for (int b = 0; b < 4; ++b)
      if (neighbors[i][b] < 0) return true;
    return false;
  }
};

inline Supercell build_supercell(const Eigen::Vector3i& extent) {
  for (int c = 0; c < 3; ++c)
    if (extent[c] < 4)
      throw GeometryError("build_supercell: each extent must be >= 4");

  static const std::array<Eigen::Vector3i, 4> fcc = {
      Eigen::Vector3i(0, 0, 0), Eigen::Vector3i(0, 2, 2),
      Eigen::Vector3i(2, 0, 2), Eigen::Vector3i(2, 2, 0)};

  Supercell cell;
  cell.extent = extent;
  cell.sites.reserve(8ull * extent.x() * extent.y() * extent.z());
  for (int cx = 0; cx < extent.x(); ++cx)
    for (int cy = 0; cy < extent.y(); ++cy)
      for (int cz = 0; cz < extent.z(); ++cz) {
        const Eigen::Vector3i origin(4 * cx, 4 * cy, 4 * cz);
        for (const auto& f : fcc) {
          LatticeSite a;
          a.pos_quarter = origin + f;
          a.sublattice = Sublattice::A;
          a.index = static_cast<std::int32_t>(cell.sites.size());
          cell.sites.push_back(a);
          LatticeSite b;
          b.pos_quarter = origin + f + Eigen::Vector3i(1, 1, 1);
          b.sublattice = Sublattice::B;
          b.index = static_cast<std::int32_t>(cell.sites.size());
          cell.sites.push_back(b);
        }
      }

  cell.site_lookup.reserve(cell.sites.size() * 2);
  for (const auto& s : cell.sites)
    cell.site_lookup.emplace(Supercell::pack(s.pos_quarter), s.index);

  cell.neighbors.assign(cell.sites.size(), {-1, -1, -1, -1});
  cell.neighbor_dir.assign(cell.sites.size(), {-1, -1, -1, -1});
  const auto& bonds = bond_quarters();
  for (const auto& s : cell.sites) {
    for (int b = 0; b < 4; ++b) {
      const Eigen::Vector3i delta =
          s.sublattice == Sublattice::A ? bonds[b] : Eigen::Vector3i(-bonds[b]);
      const std::int32_t j = cell.find_site(s.pos_quarter + delta);
      cell.neighbors[s.index][b] = j;
      cell.neighbor_dir[s.index][b] =
          static_cast<std::int8_t>(s.sublattice == Sublattice::A ? b : b + 4);
    }
  }
  return cell;
}

enum class ArrayFamily { dimer_100, dimer_110, trimer_100, square_diag_100 };

inline std::string family_name(ArrayFamily f) {
  switch (f) {
    case ArrayFamily::dimer_100: return "dimer_100";
    case ArrayFamily::dimer_110: return "dimer_110";
    case ArrayFamily::trimer_100: return "trimer_100";
    case ArrayFamily::square_diag_100: return "square_diag_100";
  }
  return "?";
}

inline std::optional<ArrayFamily> family_from_name(const std::string& s) {
  if (s == "dimer_100") return ArrayFamily::dimer_100;
  if (s == "dimer_110") return ArrayFamily::dimer_110;
  if (s == "trimer_100") return ArrayFamily::trimer_100;
  if (s == "square_diag_100") return ArrayFamily::square_diag_100;
  return std::nullopt;
}

struct ArrayGeometry {
  ArrayFamily family = ArrayFamily::dimer_100;
  double requested_d = 0;  // a0
  double actual_d = 0;     // a0, from snapped positions
  std::vector<std::int32_t> dopant_sites;
};

namespace detail {

// Nearest A-sublattice site to an arbitrary point (a0 units).
inline std::int32_t snap_to_a_site(const Supercell& cell,
                                   const Eigen::Vector3d& pos_a0,
                                   double max_dist_a0 = 0.5) {
  const Eigen::Vector3d q = pos_a0 * 4.0;
  std::int32_t best = -1;
  double best_d2 = std::numeric_limits<double>::max();
  for (int dx = -4; dx <= 4; ++dx)
    for (int dy = -4; dy <= 4; ++dy)
      for (int dz = -4; dz <= 4; ++dz) {
        Eigen::Vector3i cand(static_cast<int>(std::lround(q.x())) + dx,
                             static_cast<int>(std::lround(q.y())) + dy,
                             static_cast<int>(std::lround(q.z())) + dz);
        const std::int32_t idx = cell.find_site(cand);
        if (idx < 0) continue;
        if (cell.sites[idx].sublattice != Sublattice::A) continue;
        const double d2 = (cell.sites[idx].position() - pos_a0).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = idx;
        }
      }
  if (best < 0 || std::sqrt(best_d2) > max_dist_a0)
    throw GeometryError("place_dopants: no valid substitutional site within " +
                        std::to_string(max_dist_a0) + " a0 of requested position");
  return best;
}

}  // namespace detail

// Places substitutional P dopants for one of the array families, snapped to
// A-sublattice sites and centered in the supercell. min_margin_a0 < 0 selects
// the default boundary margin of extent/4.
inline ArrayGeometry place_dopants(Supercell& cell, ArrayFamily family,
                                   double requested_d,
                                   double min_margin_a0 = -1.0) {
  const Eigen::Vector3d ext = cell.extent.cast<double>();
  if (requested_d < 4.0)
    throw GeometryError("place_dopants: requested_d must be at least 4 a0");
  // with the default margin of extent/4 this caps d at extent/2; an explicit
  // margin relaxes the cap and the boundary check below governs instead
  if (min_margin_a0 < 0 && requested_d > ext.minCoeff() / 2.0)
    throw GeometryError(
        "place_dopants: requested_d must lie between 4 a0 and extent/2 a0");

  const Eigen::Vector3d center = ext / 2.0;
  std::vector<Eigen::Vector3d> ideal;
  switch (family) {
    case ArrayFamily::dimer_100:
      ideal = {center - Eigen::Vector3d(requested_d / 2, 0, 0),
               center + Eigen::Vector3d(requested_d / 2, 0, 0)};
      break;
    case ArrayFamily::dimer_110: {
      const double h = requested_d / (2.0 * std::sqrt(2.0));
      ideal = {center - Eigen::Vector3d(h, h, 0),
               center + Eigen::Vector3d(h, h, 0)};
      break;
    }
    case ArrayFamily::trimer_100:
      ideal = {center, center - Eigen::Vector3d(requested_d, 0, 0),
               center + Eigen::Vector3d(requested_d, 0, 0)};
      break;
    case ArrayFamily::square_diag_100: {
      const double r = requested_d / std::sqrt(2.0);
      ideal = {center + Eigen::Vector3d(r, 0, 0),
               center + Eigen::Vector3d(0, r, 0),
               center - Eigen::Vector3d(r, 0, 0),
               center - Eigen::Vector3d(0, r, 0)};
      break;
    }
  }

  ArrayGeometry geo;
  geo.family = family;
  geo.requested_d = requested_d;
  for (const auto& p : ideal)
    geo.dopant_sites.push_back(detail::snap_to_a_site(cell, p));

  const double margin =
      min_margin_a0 >= 0 ? min_margin_a0 : ext.minCoeff() / 4.0;
  for (const auto idx : geo.dopant_sites) {
    const Eigen::Vector3d p = cell.sites[idx].position();
    for (int c = 0; c < 3; ++c)
      if (p[c] < margin - 1e-9 || p[c] > ext[c] - margin + 1e-9)
        throw GeometryError("place_dopants: dopants too close to boundary");
  }

  auto dist = [&](int a, int b) {
    return (cell.sites[geo.dopant_sites[a]].position() -
            cell.sites[geo.dopant_sites[b]].position())
        .norm();
  };
  switch (family) {
    case ArrayFamily::dimer_100:
    case ArrayFamily::dimer_110:
      geo.actual_d = dist(0, 1);
      break;
    case ArrayFamily::trimer_100:
      geo.actual_d = 0.5 * (dist(0, 1) + dist(0, 2));
      break;
    case ArrayFamily::square_diag_100:
      geo.actual_d = 0.25 * (dist(0, 1) + dist(1, 2) + dist(2, 3) + dist(3, 0));
      break;
  }

  for (const auto idx : geo.dopant_sites) cell.sites[idx].species = Species::P;
  return geo;
}

// Screened Coulomb impurity potential with on-site central-cell correction.
struct ImpurityPotential {
  std::vector<Eigen::Vector3d> dopant_positions;  // a0
  double epsilon_si = kDefaultEpsilonSi;
  double u_ccc_ev = kDefaultUcccEv;

  double coulomb_tail(double r_a0) const {
    return -kCoulombEvA0 / (epsilon_si * r_a0);
  }

  // Potential at an arbitrary point; on a dopant nucleus the diverging
  // self-term is replaced by the central-cell correction.
  double value_at(const Eigen::Vector3d& r_a0, double same_site_tol = 1e-9) const {
    double u = 0;
    for (const auto& rp : dopant_positions) {
      const double r = (r_a0 - rp).norm();
      u += r < same_site_tol ? u_ccc_ev : coulomb_tail(r);
    }
    return u;
  }

  // Sum of Coulomb tails only, skipping any dopant within tol of the point.
  double tails_at(const Eigen::Vector3d& r_a0, double same_site_tol = 1e-9) const {
    double u = 0;
    for (const auto& rp : dopant_positions) {
      const double r = (r_a0 - rp).norm();
      if (r >= same_site_tol) u += coulomb_tail(r);
    }
    return u;
  }
};

inline ImpurityPotential make_potential(const Supercell& cell,
                                        const ArrayGeometry& geo,
                                        double epsilon_si = kDefaultEpsilonSi,
                                        double u_ccc_ev = kDefaultUcccEv) {
  ImpurityPotential pot;
  pot.epsilon_si = epsilon_si;
  pot.u_ccc_ev = u_ccc_ev;
  for (auto idx : geo.dopant_sites)
    pot.dopant_positions.push_back(cell.sites[idx].position());
  return pot;
}

struct PotentialSection {
  std::vector<std::pair<double, double>> samples;  // (arc length a0, U eV)
  std::vector<std::pair<double, double>> spikes;   // samples on dopant nuclei
};

// Samples the total impurity potential along a straight segment. Points that
// coincide with a dopant nucleus are reported separately with the
// central-cell value included.
inline PotentialSection potential_section(const Supercell& cell,
                                          const ImpurityPotential& pot,
                                          const Eigen::Vector3d& from_a0,
                                          const Eigen::Vector3d& to_a0,
                                          int n_samples) {
  const Eigen::Vector3d ext = cell.extent.cast<double>();
  for (const auto& p : {from_a0, to_a0})
    for (int c = 0; c < 3; ++c)
      if (p[c] < -1e-9 || p[c] > ext[c] + 1e-9)
        throw GeometryError("potential_section: endpoint outside supercell");
  if (n_samples < 2)
    throw GeometryError("potential_section: need at least 2 samples");

  PotentialSection sec;
  const double len = (to_a0 - from_a0).norm();
  const double coincide_tol = 1e-6;
  for (int i = 0; i < n_samples; ++i) {
    const double f = static_cast<double>(i) / (n_samples - 1);
    const Eigen::Vector3d p = from_a0 + f * (to_a0 - from_a0);
    bool on_nucleus = false;
    for (const auto& rp : pot.dopant_positions)
      if ((p - rp).norm() < coincide_tol) on_nucleus = true;
    if (on_nucleus)
      sec.spikes.emplace_back(f * len, pot.value_at(p, coincide_tol));
    else
      sec.samples.emplace_back(f * len, pot.tails_at(p, coincide_tol));
  }
  return sec;
}

}  // namespace siparray
