#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "siparray/eigensolver.hpp"
#include "siparray/geometry.hpp"
#include "siparray/hamiltonian.hpp"
#include "siparray/planes.hpp"

namespace siparray {

class OverlapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RefType { A1 = 0, T2 = 1, E = 2 };

inline std::string ref_type_name(RefType t) {
  switch (t) {
    case RefType::A1: return "A1";
    case RefType::T2: return "T2";
    case RefType::E: return "E";
  }
  return "?";
}

// The 12 lowest bound states of a single dopant, solved in the array's own
// supercell so the orbital bases match exactly.
struct ReferenceStateSet {
  int dopant_site = -1;              // site index of the lone dopant
  Eigen::VectorXd energies;          // 12 values, ascending
  Planes<double> states;             // 12 columns
  std::vector<RefType> types;        // per state: A1 x2, T2 x6, E x4
  std::vector<std::string> labels;   // e.g. "T2.1up"
  SolverStats stats;
};

// Validates the valley-split multiplicity pattern by locating the two
// largest gaps within the sorted 12-state manifold.
inline std::vector<RefType> label_single_dopant_manifold(
    const Eigen::VectorXd& e) {
  if (e.size() != 12)
    throw OverlapError("single-dopant manifold must contain 12 states, got " +
                       std::to_string(e.size()));
  int g1 = -1, g2 = -1;
  double b1 = -1, b2 = -1;
  for (int i = 1; i < 12; ++i) {
    const double g = e(i) - e(i - 1);
    if (g > b1) {
      b2 = b1; g2 = g1;
      b1 = g; g1 = i;
    } else if (g > b2) {
      b2 = g; g2 = i;
    }
  }
  const int lo = std::min(g1, g2), hi = std::max(g1, g2);
  if (lo != 2 || hi != 8) {
    std::string vals;
    for (int i = 0; i < 12; ++i)
      vals += (i ? " " : "") + std::to_string(e(i));
    throw OverlapError(
        "single-dopant multiplicity pattern is not 2/6/4; dominant gaps at "
        "indices " + std::to_string(lo) + "," + std::to_string(hi) +
        " (check box size and passivation); energies: " + vals);
  }
  std::vector<RefType> types(12);
  for (int i = 0; i < 12; ++i)
    types[i] = i < 2 ? RefType::A1 : (i < 8 ? RefType::T2 : RefType::E);
  return types;
}

template <typename Op>
ReferenceStateSet compute_reference_states(const Op& h, int dopant_site,
                                           const SolverSettings& base,
                                           const Planes<double>* guess =
                                               nullptr) {
  SolverSettings s = base;
  s.k = 12;
  EigenSet sol = solve_gap_states(h, s, guess);
  if (sol.values.size() < 12)
    throw OverlapError("single-dopant solve found only " +
                       std::to_string(sol.values.size()) +
                       " gap states; " + sol.diagnostics);
  ReferenceStateSet ref;
  ref.dopant_site = dopant_site;
  ref.energies = sol.values.head(12);
  ref.states.resize(sol.vectors.rows(), 12);
  ref.states.re = sol.vectors.re.leftCols(12);
  ref.states.im = sol.vectors.im.leftCols(12);
  ref.types = label_single_dopant_manifold(ref.energies);
  static const char* base_names[12] = {"A1", "A1", "T2.1", "T2.1", "T2.2",
                                       "T2.2", "T2.3", "T2.3", "E.1", "E.1",
                                       "E.2", "E.2"};
  for (int i = 0; i < 12; ++i)
    ref.labels.push_back(std::string(base_names[i]) +
                         (i % 2 == 0 ? "up" : "dn"));
  ref.stats = sol.stats;
  return ref;
}

// Unitary within the span of a spin-conjugate reference pair that best
// aligns it with a target pair (orthogonal Procrustes via 2x2 SVD).
inline Eigen::Matrix2cd spin_align_rotation(const Eigen::Matrix2cd& cross) {
  Eigen::JacobiSVD<Eigen::Matrix2cd> svd(
      cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

// Rotates the reference pair (columns) to maximize the diagonal overlaps
// with the target pair. Returns the rotated pair.
inline Planes<double> spin_align(const Planes<double>& ref_pair,
                                 const Planes<double>& target_pair) {
  if (ref_pair.cols() != 2 || target_pair.cols() != 2)
    throw OverlapError("spin_align expects 2-column pairs");
  const Eigen::Matrix2cd cross = blk::gram(ref_pair, target_pair);
  const Eigen::Matrix2cd w = spin_align_rotation(cross);
  return blk::multiply(ref_pair, w);
}

// M[k][i] = |<Phi_i | Psi_k>|^2 per dopant site, Kramers pairs aligned
// blockwise before taking moduli.
struct OverlapMap {
  int alpha = 0;                 // index into the reference list
  int dopant_site = -1;
  Eigen::MatrixXd m;             // n_array_states x 12
  double worst_alignment = 1.0;  // min diagonal pair overlap encountered
};

inline OverlapMap overlap_map_for_site(const EigenSet& array_states,
                                       const ReferenceStateSet& ref,
                                       int alpha) {
  const Eigen::Index nk = array_states.values.size();
  if (array_states.vectors.rows() != ref.states.rows())
    throw OverlapError("overlap_map: basis dimension mismatch");
  if (nk % 2 != 0)
    throw OverlapError("overlap_map: array state count must be even");
  OverlapMap map;
  map.alpha = alpha;
  map.dopant_site = ref.dopant_site;
  map.m.setZero(nk, 12);
  // cross-overlap of all references against all array states, then a 2x2
  // alignment rotation per (reference pair, array pair) block
  const Eigen::MatrixXcd cross =
      blk::gram(ref.states, array_states.vectors);  // 12 x nk
  for (Eigen::Index q = 0; q < 6; ++q) {
    for (Eigen::Index p = 0; p < nk / 2; ++p) {
      const Eigen::Matrix2cd b = cross.block<2, 2>(2 * q, 2 * p);
      const Eigen::Matrix2cd w = spin_align_rotation(b);
      const Eigen::Matrix2cd aligned = w.adjoint() * b;
      for (int a = 0; a < 2; ++a)
        for (int k = 0; k < 2; ++k)
          map.m(2 * p + k, 2 * q + a) = std::norm(aligned(a, k));
      // alignment quality: how much of the block the rotation brought onto
      // the diagonal; negligible blocks carry no spin information
      const double bnorm = b.norm();
      if (bnorm > 1e-8) {
        const double diag = std::sqrt(std::norm(aligned(0, 0)) +
                                      std::norm(aligned(1, 1))) / bnorm;
        map.worst_alignment = std::min(map.worst_alignment, diag);
      }
    }
  }
  return map;
}

inline std::vector<OverlapMap> overlap_map(
    const EigenSet& array_states,
    const std::vector<ReferenceStateSet>& refs) {
  std::vector<OverlapMap> maps;
  for (int a = 0; a < static_cast<int>(refs.size()); ++a)
    maps.push_back(overlap_map_for_site(array_states, refs[a], a));
  return maps;
}

// Hybridization class: the array spin pairs built from one single-dopant
// orbital type, plus the sub-class split within degenerate types.
struct StateClass {
  std::string label;              // A1, T2, T2', T2'', E, E', mixed
  RefType type = RefType::A1;
  bool mixed = false;
  std::vector<int> member_pairs;  // 1-based spin-pair indices, ascending
  std::vector<double> energies;   // mean pair energy per member, eV
};

struct Classification {
  std::vector<StateClass> classes;
  std::vector<std::string> pair_labels;  // per spin pair
  std::vector<std::string> warnings;
};

namespace detail {

// Splits the pairs of one degenerate type into sub-classes of expected size
// by greedy cosine matching of their reference-component weight vectors.
inline std::vector<std::vector<int>> split_subclasses(
    const std::vector<int>& pairs, const std::vector<Eigen::VectorXd>& weights,
    int group_size) {
  std::vector<std::vector<int>> groups;
  std::vector<bool> used(pairs.size(), false);
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    std::vector<int> g = {static_cast<int>(i)};
    while (static_cast<int>(g.size()) < group_size) {
      int best = -1;
      double bs = -2;
      for (size_t j = 0; j < pairs.size(); ++j) {
        if (used[j]) continue;
        double sim = 0;
        for (int gi : g)
          sim += weights[gi].normalized().dot(weights[j].normalized());
        if (sim > bs) {
          bs = sim;
          best = static_cast<int>(j);
        }
      }
      if (best < 0) break;
      used[best] = true;
      g.push_back(best);
    }
    std::vector<int> members;
    for (int gi : g) members.push_back(pairs[gi]);
    std::sort(members.begin(), members.end());
    groups.push_back(members);
  }
  // order sub-classes by their lowest member index
  std::sort(groups.begin(), groups.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return groups;
}

}  // namespace detail

// Assigns each spin pair the reference type with the largest summed overlap
// across dopant sites, requiring dominance over the runner-up; splits T2 and
// E classes into sub-classes expected to couple through one site Hamiltonian.
inline Classification classify(const std::vector<OverlapMap>& maps,
                               const Eigen::VectorXd& energies,
                               double dominance_threshold = 2.0) {
  if (maps.empty()) throw OverlapError("classify: no overlap maps");
  const Eigen::Index nk = maps[0].m.rows();
  const int n_pairs = static_cast<int>(nk / 2);
  const int n_sites = static_cast<int>(maps.size());

  Classification out;
  out.pair_labels.assign(n_pairs, "mixed");

  // per pair: summed overlap per type, and a 6-component weight vector over
  // reference orbitals (spin collapsed) used for sub-class matching
  Eigen::MatrixXd type_sum = Eigen::MatrixXd::Zero(n_pairs, 3);
  std::vector<Eigen::VectorXd> weights(n_pairs,
                                       Eigen::VectorXd::Zero(6 * n_sites));
  for (int a = 0; a < n_sites; ++a)
    for (int p = 0; p < n_pairs; ++p)
      for (int i = 0; i < 12; ++i) {
        const double v = maps[a].m(2 * p, i) + maps[a].m(2 * p + 1, i);
        const int type = i < 2 ? 0 : (i < 8 ? 1 : 2);
        type_sum(p, type) += v;
        weights[p](6 * a + i / 2) += v;
      }

  std::vector<int> dominant(n_pairs, -1);
  for (int p = 0; p < n_pairs; ++p) {
    int t1 = 0;
    for (int t = 1; t < 3; ++t)
      if (type_sum(p, t) > type_sum(p, t1)) t1 = t;
    double second = 0;
    for (int t = 0; t < 3; ++t)
      if (t != t1) second = std::max(second, type_sum(p, t));
    if (type_sum(p, t1) >= dominance_threshold * second) dominant[p] = t1;
  }

  const int type_dims[3] = {1, 3, 2};
  static const char* sub_names[3][3] = {
      {"A1", "", ""}, {"T2", "T2'", "T2''"}, {"E", "E'", ""}};
  for (int t = 0; t < 3; ++t) {
    std::vector<int> members;
    for (int p = 0; p < n_pairs; ++p)
      if (dominant[p] == t) members.push_back(p);
    const int expected = type_dims[t] * n_sites;
    if (!members.empty() &&
        static_cast<int>(members.size()) != expected)
      out.warnings.push_back("class " + ref_type_name(RefType(t)) + " has " +
                             std::to_string(members.size()) +
                             " spin pairs, expected " +
                             std::to_string(expected));
    if (members.empty()) continue;
    std::vector<Eigen::VectorXd> w;
    for (int p : members) w.push_back(weights[p]);
    const int group_size =
        std::max(1, static_cast<int>(members.size()) / type_dims[t]);
    auto groups = type_dims[t] == 1
                      ? std::vector<std::vector<int>>{members}
                      : detail::split_subclasses(members, w, group_size);
    for (size_t g = 0; g < groups.size(); ++g) {
      StateClass cls;
      cls.type = RefType(t);
      cls.label = g < 3 ? sub_names[t][g]
                        : ref_type_name(RefType(t)) + "#" + std::to_string(g);
      for (int p : groups[g]) {
        cls.member_pairs.push_back(p + 1);  // 1-based pair indices
        cls.energies.push_back(0.5 * (energies(2 * p) + energies(2 * p + 1)));
        out.pair_labels[p] = cls.label;
      }
      out.classes.push_back(cls);
    }
  }

  std::vector<int> mixed;
  for (int p = 0; p < n_pairs; ++p)
    if (dominant[p] < 0) mixed.push_back(p);
  if (!mixed.empty()) {
    StateClass cls;
    cls.label = "mixed";
    cls.mixed = true;
    for (int p : mixed) {
      cls.member_pairs.push_back(p + 1);
      cls.energies.push_back(0.5 * (energies(2 * p) + energies(2 * p + 1)));
    }
    out.classes.push_back(cls);
  }
  return out;
}

}  // namespace siparray
