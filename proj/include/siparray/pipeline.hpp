#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "siparray/bulk.hpp"
#include "siparray/eigensolver.hpp"
#include "siparray/geometry.hpp"
#include "siparray/hamiltonian.hpp"
#include "siparray/overlap.hpp"
#include "siparray/paramfit.hpp"
#include "siparray/sitemodel.hpp"
#include "siparray/tbparams.hpp"

namespace siparray {

using json = nlohmann::json;

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string family = "dimer_100";
  std::vector<double> d_list;       // a0, ascending
  int extent = 16;                  // cells per axis, shared default
  std::vector<int> extent_list;     // optional per-d override
  double min_margin_a0 = -1;        // <0: default extent/4 rule
  std::string params_path;          // empty: shipped Si file
  double epsilon_si = kDefaultEpsilonSi;
  double u_ccc_ev = kDefaultUcccEv;
  double tol = 1e-6;                // relative residual tolerance
  std::uint64_t seed = 20260826;
  int filter_degree = 150;
  int block_extra = 8;
  double dominance_threshold = 2.0;
  std::string outdir = "run_out";
  std::string cache_dir;            // empty: outdir/cache; env overrides
  bool use_cache = true;

  int dopant_count() const {
    if (family == "dimer_100" || family == "dimer_110") return 2;
    if (family == "trimer_100") return 3;
    if (family == "square_diag_100") return 4;
    throw PipelineError("unknown geometry family: " + family);
  }
  int k_states() const { return 12 * dopant_count(); }
  int extent_for(size_t di) const {
    return di < extent_list.size() ? extent_list[di] : extent;
  }
};

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot open config file " + path);
  json j = json::parse(in);
  RunConfig c;
  c.family = j.value("family", c.family);
  c.d_list = j.value("d_list", c.d_list);
  c.extent = j.value("extent", c.extent);
  c.extent_list = j.value("extent_list", c.extent_list);
  c.min_margin_a0 = j.value("min_margin_a0", c.min_margin_a0);
  c.params_path = j.value("params_path", c.params_path);
  c.epsilon_si = j.value("epsilon_si", c.epsilon_si);
  c.u_ccc_ev = j.value("u_ccc_ev", c.u_ccc_ev);
  c.tol = j.value("tol", c.tol);
  c.seed = j.value("seed", c.seed);
  c.filter_degree = j.value("filter_degree", c.filter_degree);
  c.block_extra = j.value("block_extra", c.block_extra);
  c.dominance_threshold = j.value("dominance_threshold", c.dominance_threshold);
  c.outdir = j.value("outdir", c.outdir);
  c.cache_dir = j.value("cache_dir", c.cache_dir);
  c.use_cache = j.value("use_cache", c.use_cache);
  if (c.d_list.empty() && c.family != "single" && c.family != "bulk")
    throw PipelineError("config: d_list must be non-empty");
  for (size_t i = 1; i < c.d_list.size(); ++i)
    if (c.d_list[i] <= c.d_list[i - 1])
      throw PipelineError("config: d_list must be ascending");
  return c;
}

inline json config_to_json(const RunConfig& c) {
  return json{{"family", c.family},
              {"d_list", c.d_list},
              {"extent", c.extent},
              {"extent_list", c.extent_list},
              {"min_margin_a0", c.min_margin_a0},
              {"params_path", c.params_path},
              {"epsilon_si", c.epsilon_si},
              {"u_ccc_ev", c.u_ccc_ev},
              {"tol", c.tol},
              {"seed", c.seed},
              {"filter_degree", c.filter_degree},
              {"block_extra", c.block_extra},
              {"dominance_threshold", c.dominance_threshold},
              {"outdir", c.outdir},
              {"cache_dir", c.cache_dir},
              {"use_cache", c.use_cache}};
}

inline std::string resolve_params_path(const RunConfig& c) {
  return c.params_path.empty() ? default_parameter_path() : c.params_path;
}

inline std::string resolve_cache_dir(const RunConfig& c) {
  if (const char* env = std::getenv("SIPARRAY_CACHE"); env && *env)
    return env;
  if (!c.cache_dir.empty()) return c.cache_dir;
  return c.outdir + "/cache";
}

// Deterministic key over everything that influences the numbers: geometry,
// parameter checksum, potential constants and solver settings. The output
// directory deliberately stays out.
inline std::string cache_key(const RunConfig& c, const TBParameterSet& tb,
                             int extent,
                             const std::vector<Eigen::Vector3i>& dopants_q,
                             const std::string& stage) {
  std::ostringstream s;
  s << stage << "|ext" << extent << "|params" << std::hex << tb.checksum
    << std::dec << "|eps" << c.epsilon_si << "|uccc" << c.u_ccc_ev << "|tol"
    << c.tol << "|seed" << c.seed << "|deg" << c.filter_degree << "|extra"
    << c.block_extra << "|thr" << c.dominance_threshold << "|q";
  for (const auto& q : dopants_q) s << q.x() << "," << q.y() << "," << q.z() << ";";
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(s.str())));
  return buf;
}

namespace pipedetail {

inline void write_text(const std::string& path, const std::string& text) {
  std::filesystem::create_directories(
      std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PipelineError("cannot write " + path);
  out << text;
}

inline std::optional<json> read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  return json::parse(in);
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Shifts states by delta (quarter-a0 units): the amplitude at site r comes
// from the source amplitude at r - delta; sites without a source stay zero.
inline Planes<double> translate_states(const Supercell& cell,
                                       const Planes<double>& x,
                                       const Eigen::Vector3i& delta_q) {
  Planes<double> y(x.rows(), x.cols());
  y.setZero();
  for (const auto& s : cell.sites) {
    const std::int32_t j = cell.find_site(s.pos_quarter - delta_q);
    if (j < 0) continue;
    y.re.middleRows(20ll * s.index, 20) = x.re.middleRows(20ll * j, 20);
    y.im.middleRows(20ll * s.index, 20) = x.im.middleRows(20ll * j, 20);
  }
  return y;
}

}  // namespace pipedetail

// Band edges of the undoped passivated box, bracketing the gap window for
// donor-state solves. Cached per (extent, parameter set, solver settings).
struct BoxEdges {
  double vbm_ev = 0, cbm_ev = 0;
  double bulk_vbm_ev = 0, bulk_cbm_ev = 0;
  double window_lo() const { return vbm_ev + 0.050; }
  double window_hi() const { return cbm_ev - 0.005; }
};

inline BoxEdges box_edges(const RunConfig& cfg, const TBParameterSet& tb,
                          int extent, std::ostream* log = nullptr) {
  const std::string dir = resolve_cache_dir(cfg);
  const std::string key = cache_key(cfg, tb, extent, {}, "box_edges");
  const std::string path = dir + "/box_edges-" + key + ".json";
  if (cfg.use_cache) {
    if (auto j = pipedetail::read_json(path)) {
      BoxEdges e;
      e.vbm_ev = (*j)["vbm_ev"];
      e.cbm_ev = (*j)["cbm_ev"];
      e.bulk_vbm_ev = (*j)["bulk_vbm_ev"];
      e.bulk_cbm_ev = (*j)["bulk_cbm_ev"];
      return e;
    }
  }
  const BulkBandEdges bulk = bulk_band_edges(tb);
  auto cell = build_supercell(Eigen::Vector3i(extent, extent, extent));
  ImpurityPotential none;
  none.epsilon_si = cfg.epsilon_si;
  none.u_ccc_ev = cfg.u_ccc_ev;
  HamiltonianOperator h(cell, tb, none);

  SolverSettings s;
  // the window only needs meV placement; edge states cluster against the
  // bands and converge slowly, so a loose tolerance saves most of the cost
  s.tol = std::max(cfg.tol, 1e-5);
  s.seed = cfg.seed;
  s.filter_degree = cfg.filter_degree;
  s.k = 4;
  s.block_extra = 6;
  s.log = log;
  const double mid = 0.5 * (bulk.valence_max_ev + bulk.conduction_min_ev);

  BoxEdges e;
  e.bulk_vbm_ev = bulk.valence_max_ev;
  e.bulk_cbm_ev = bulk.conduction_min_ev;
  s.window_lo = mid;
  s.window_hi = bulk.conduction_min_ev + 0.5;
  s.sigma = bulk.conduction_min_ev + 0.02;
  const EigenSet above = solve_gap_states(h, s);
  if (above.values.size() == 0)
    throw PipelineError("box_edges: no conduction states found above the gap");
  e.cbm_ev = above.values(0);

  s.window_lo = bulk.valence_max_ev - 0.5;
  s.window_hi = mid;
  s.sigma = bulk.valence_max_ev - 0.02;
  const EigenSet below = solve_gap_states(h, s);
  if (below.values.size() == 0)
    throw PipelineError("box_edges: no valence states found below the gap");
  e.vbm_ev = below.values(below.values.size() - 1);

  pipedetail::write_text(path, json{{"vbm_ev", e.vbm_ev},
                                    {"cbm_ev", e.cbm_ev},
                                    {"bulk_vbm_ev", e.bulk_vbm_ev},
                                    {"bulk_cbm_ev", e.bulk_cbm_ev}}
                                   .dump(2));
  return e;
}

// Undoped-box selftest: count of converged states strictly inside the donor
// gap window (zero for a clean passivated box).
struct BulkSelftest {
  BoxEdges edges;
  int in_window_count = 0;
  std::vector<double> stray_values;
};

inline BulkSelftest bulk_selftest(const RunConfig& cfg, std::ostream* log =
                                                            nullptr) {
  const TBParameterSet tb = load_parameters(resolve_params_path(cfg));
  BulkSelftest r;
  r.edges = box_edges(cfg, tb, cfg.extent, log);
  const std::string dir = resolve_cache_dir(cfg);
  const std::string key = cache_key(cfg, tb, cfg.extent, {}, "bulk_selftest");
  const std::string path = dir + "/bulk_selftest-" + key + ".json";
  if (cfg.use_cache) {
    if (auto j = pipedetail::read_json(path)) {
      r.in_window_count = (*j)["in_window_count"];
      r.stray_values = (*j)["stray_values"].get<std::vector<double>>();
      return r;
    }
  }
  auto cell = build_supercell(Eigen::Vector3i(cfg.extent, cfg.extent,
                                              cfg.extent));
  ImpurityPotential none;
  none.epsilon_si = cfg.epsilon_si;
  none.u_ccc_ev = cfg.u_ccc_ev;
  HamiltonianOperator h(cell, tb, none);
  SolverSettings s;
  s.tol = std::max(cfg.tol, 1e-6);
  s.seed = cfg.seed;
  s.filter_degree = cfg.filter_degree;
  s.k = 4;
  s.block_extra = 6;
  s.window_lo = r.edges.window_lo();
  s.window_hi = r.edges.window_hi();
  s.sigma = 0.5 * (s.window_lo + s.window_hi);
  s.log = log;
  const EigenSet mid = solve_gap_states(h, s);
  r.in_window_count = static_cast<int>(mid.values.size());
  for (Eigen::Index i = 0; i < mid.values.size(); ++i)
    r.stray_values.push_back(mid.values(i));
  pipedetail::write_text(path, json{{"in_window_count", r.in_window_count},
                                    {"stray_values", r.stray_values}}
                                   .dump(2));
  return r;
}

// Per-separation analysis artifact: everything downstream of the eigensolves
// in a cache-friendly size (no wavefunctions).
struct SeparationBundle {
  double requested_d = 0, actual_d = 0;
  int extent = 0;
  std::vector<Eigen::Vector3i> dopants_q;
  double window_lo = 0, window_hi = 0;
  std::vector<Eigen::VectorXd> ref_energies;  // per dopant site, 12 each
  Eigen::Vector3d eps_P;                      // per type A1, T2, E
  Eigen::VectorXd energies;                   // 12n array energies
  Eigen::VectorXd residuals;
  bool converged = false;
  Classification classes;
  std::vector<Eigen::MatrixXd> maps;          // per alpha, 12n x 12
  double worst_alignment = 1.0;
  double solve_seconds = 0;
  std::int64_t h_applies = 0;
  bool cache_hit = false;
};

inline json bundle_to_json(const SeparationBundle& b) {
  json j;
  j["requested_d"] = b.requested_d;
  j["actual_d"] = b.actual_d;
  j["extent"] = b.extent;
  for (const auto& q : b.dopants_q)
    j["dopants_quarter"].push_back({q.x(), q.y(), q.z()});
  j["window_lo"] = b.window_lo;
  j["window_hi"] = b.window_hi;
  for (const auto& e : b.ref_energies)
    j["ref_energies"].push_back(std::vector<double>(e.data(), e.data() + e.size()));
  j["eps_P"] = {b.eps_P(0), b.eps_P(1), b.eps_P(2)};
  j["energies"] = std::vector<double>(b.energies.data(),
                                      b.energies.data() + b.energies.size());
  j["residuals"] = std::vector<double>(
      b.residuals.data(), b.residuals.data() + b.residuals.size());
  j["converged"] = b.converged;
  for (const auto& c : b.classes.classes)
    j["classes"].push_back(json{{"label", c.label},
                                {"mixed", c.mixed},
                                {"member_pairs", c.member_pairs},
                                {"energies", c.energies}});
  j["pair_labels"] = b.classes.pair_labels;
  j["warnings"] = b.classes.warnings;
  for (const auto& m : b.maps) {
    json rows;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    j["maps"].push_back(rows);
  }
  j["worst_alignment"] = b.worst_alignment;
  j["solve_seconds"] = b.solve_seconds;
  j["h_applies"] = b.h_applies;
  return j;
}

inline SeparationBundle bundle_from_json(const json& j) {
  SeparationBundle b;
  b.requested_d = j["requested_d"];
  b.actual_d = j["actual_d"];
  b.extent = j["extent"];
  for (const auto& q : j["dopants_quarter"])
    b.dopants_q.emplace_back(q[0].get<int>(), q[1].get<int>(), q[2].get<int>());
  b.window_lo = j["window_lo"];
  b.window_hi = j["window_hi"];
  for (const auto& e : j["ref_energies"]) {
    Eigen::VectorXd v(e.size());
    for (size_t i = 0; i < e.size(); ++i) v(i) = e[i];
    b.ref_energies.push_back(v);
  }
  for (int t = 0; t < 3; ++t) b.eps_P(t) = j["eps_P"][t];
  const auto& ev = j["energies"];
  b.energies.resize(ev.size());
  for (size_t i = 0; i < ev.size(); ++i) b.energies(i) = ev[i];
  const auto& rv = j["residuals"];
  b.residuals.resize(rv.size());
  for (size_t i = 0; i < rv.size(); ++i) b.residuals(i) = rv[i];
  b.converged = j["converged"];
  for (const auto& cj : j.value("classes", json::array())) {
    StateClass c;
    c.label = cj["label"];
    c.mixed = cj["mixed"];
    c.member_pairs = cj["member_pairs"].get<std::vector<int>>();
    c.energies = cj["energies"].get<std::vector<double>>();
    b.classes.classes.push_back(c);
  }
  b.classes.pair_labels = j.value("pair_labels", std::vector<std::string>{});
  b.classes.warnings = j.value("warnings", std::vector<std::string>{});
  for (const auto& mj : j.value("maps", json::array())) {
    Eigen::MatrixXd m(mj.size(), mj[0].size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index cidx = 0; cidx < m.cols(); ++cidx)
        m(r, cidx) = mj[r][cidx];
    b.maps.push_back(m);
  }
  b.worst_alignment = j.value("worst_alignment", 1.0);
  b.solve_seconds = j.value("solve_seconds", 0.0);
  b.h_applies = j.value("h_applies", std::int64_t(0));
  b.cache_hit = true;
  return b;
}

// In-memory carryover between separations for warm starts.
struct SweepScratch {
  std::vector<Eigen::Vector3i> ref_positions;
  std::vector<Planes<double>> ref_states;  // matching basis of last extent
  int extent = -1;
};

inline SeparationBundle analyze_separation(const RunConfig& cfg,
                                           const TBParameterSet& tb,
                                           double d, int extent,
                                           SweepScratch* scratch,
                                           std::ostream* log) {
  const auto fam = family_from_name(cfg.family);
  if (!fam) throw PipelineError("unknown geometry family: " + cfg.family);
  auto cell = build_supercell(Eigen::Vector3i(extent, extent, extent));
  const ArrayGeometry geo =
      place_dopants(cell, *fam, d, cfg.min_margin_a0);

  SeparationBundle b;
  b.requested_d = d;
  b.actual_d = geo.actual_d;
  b.extent = extent;
  for (auto idx : geo.dopant_sites)
    b.dopants_q.push_back(cell.sites[idx].pos_quarter);

  const std::string dir = resolve_cache_dir(cfg);
  const std::string key = cache_key(cfg, tb, extent, b.dopants_q, "bundle");
  const std::string path = dir + "/bundle-" + key + ".json";
  if (cfg.use_cache) {
    if (auto j = pipedetail::read_json(path)) {
      if (log) *log << "# cache hit " << path << "\n";
      return bundle_from_json(*j);
    }
  }

  const BoxEdges edges = box_edges(cfg, tb, extent, log);
  b.window_lo = edges.window_lo();
  b.window_hi = edges.window_hi();

  SolverSettings base;
  base.tol = cfg.tol;
  base.seed = cfg.seed;
  base.filter_degree = cfg.filter_degree;
  base.block_extra = cfg.block_extra;
  base.window_lo = b.window_lo;
  base.window_hi = b.window_hi;
  base.log = log;

  const int n = static_cast<int>(geo.dopant_sites.size());
  std::vector<ReferenceStateSet> refs;
  const auto t0 = std::chrono::steady_clock::now();
  for (int a = 0; a < n; ++a) {
    const int site = geo.dopant_sites[a];
    ImpurityPotential single;
    single.epsilon_si = cfg.epsilon_si;
    single.u_ccc_ev = cfg.u_ccc_ev;
    single.dopant_positions = {cell.sites[site].position()};
    HamiltonianOperator h1(cell, tb, single);

    Planes<double> guess;
    bool have_guess = false;
    if (a > 0) {
      // translate the first reference of this separation
      guess = pipedetail::translate_states(
          cell, refs[0].states,
          cell.sites[site].pos_quarter - cell.sites[geo.dopant_sites[0]]
                                             .pos_quarter);
      have_guess = true;
    } else if (scratch && scratch->extent == extent &&
               !scratch->ref_states.empty()) {
      guess = pipedetail::translate_states(
          cell, scratch->ref_states[0],
          cell.sites[site].pos_quarter - scratch->ref_positions[0]);
      have_guess = true;
    }
    if (log) *log << "# reference solve site " << site << "\n";
    refs.push_back(compute_reference_states(h1, site, base,
                                            have_guess ? &guess : nullptr));
    b.ref_energies.push_back(refs.back().energies);
    b.h_applies += refs.back().stats.h_applies;
  }
  for (int t = 0; t < 3; ++t) {
    double acc = 0;
    int cnt = 0;
    for (const auto& r : refs)
      for (int i = 0; i < 12; ++i)
        if (static_cast<int>(r.types[i]) == t) {
          acc += r.energies(i);
          ++cnt;
        }
    b.eps_P(t) = acc / cnt;
  }

  ImpurityPotential pot = make_potential(cell, geo, cfg.epsilon_si,
                                         cfg.u_ccc_ev);
  HamiltonianOperator h(cell, tb, pot);
  SolverSettings s = base;
  s.k = cfg.k_states();
  // seed the array solve with the union of single-dopant manifolds
  Planes<double> guess(h.dim(), 12 * n);
  for (int a = 0; a < n; ++a) {
    guess.re.middleCols(12 * a, 12) = refs[a].states.re;
    guess.im.middleCols(12 * a, 12) = refs[a].states.im;
  }
  if (log) *log << "# array solve d=" << d << " extent=" << extent << "\n";
  EigenSet sol = solve_gap_states(h, s, &guess);
  const auto t1 = std::chrono::steady_clock::now();
  if (sol.values.size() < s.k)
    b.classes.warnings.push_back(
        "array solve returned " + std::to_string(sol.values.size()) +
        " states, expected " + std::to_string(s.k) + "; " + sol.diagnostics);
  const Eigen::Index nk = std::min<Eigen::Index>(s.k, sol.values.size());
  b.energies = sol.values.head(nk);
  b.residuals = sol.residual_norms.head(nk);
  b.converged = sol.converged;
  EigenSet trimmed;
  trimmed.values = b.energies;
  trimmed.vectors.resize(sol.vectors.rows(), nk);
  trimmed.vectors.re = sol.vectors.re.leftCols(nk);
  trimmed.vectors.im = sol.vectors.im.leftCols(nk);

  const auto maps = overlap_map(trimmed, refs);
  for (const auto& m : maps) {
    b.maps.push_back(m.m);
    b.worst_alignment = std::min(b.worst_alignment, m.worst_alignment);
  }
  Classification cls = classify(maps, b.energies, cfg.dominance_threshold);
  for (auto& w : b.classes.warnings) cls.warnings.push_back(w);
  b.classes = cls;
  b.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
  b.h_applies += sol.stats.h_applies;

  if (scratch) {
    scratch->extent = extent;
    scratch->ref_positions = {cell.sites[geo.dopant_sites[0]].pos_quarter};
    scratch->ref_states = {refs[0].states};
  }
  pipedetail::write_text(path, bundle_to_json(b).dump());
  return b;
}

// One extracted site-model parameter point.
struct ParamRow {
  std::string class_label;
  double d = 0;
  double eps_P = 0;
  double t = 0, beta = 0, lambda = 0, lambda_i = 0, lambda_o = 0;
  bool has_beta = false, has_inner = false;
  std::string warning;
};

namespace pipedetail {

// Trimer eps0 member: the pair with the least weight on the inner dopant
// site (alpha 0 by construction of the trimer geometry).
inline int trimer_eps0_member(const SeparationBundle& b,
                              const StateClass& cls) {
  int best = -1;
  double bw = 1e300;
  for (size_t m = 0; m < cls.member_pairs.size(); ++m) {
    const int p = cls.member_pairs[m] - 1;
    const double w = b.maps[0].row(2 * p).sum() + b.maps[0].row(2 * p + 1).sum();
    if (w < bw) {
      bw = w;
      best = static_cast<int>(m);
    }
  }
  return best;
}

inline std::vector<ParamRow> extract_params(const RunConfig& cfg,
                                            const SeparationBundle& b) {
  std::vector<ParamRow> rows;
  const int n = cfg.dopant_count();
  for (const auto& cls : b.classes.classes) {
    if (cls.mixed) continue;
    ParamRow row;
    row.class_label = cls.label;
    row.d = b.actual_d;
    row.eps_P = b.eps_P(static_cast<int>(cls.type));
    std::vector<double> e = cls.energies;
    std::sort(e.begin(), e.end());
    try {
      if (n == 2) {
        if (e.size() != 2) throw SiteModelError("class size != 2");
        const DimerParams p = invert_dimer(e[0], e[1], row.eps_P);
        row.t = p.t;
        row.lambda = p.lambda;
      } else if (n == 3) {
        if (e.size() != 3) throw SiteModelError("class size != 3");
        const int zi = trimer_eps0_member(b, cls);
        const double e0 = cls.energies[zi];
        std::vector<double> others;
        for (size_t m = 0; m < cls.energies.size(); ++m)
          if (static_cast<int>(m) != zi) others.push_back(cls.energies[m]);
        std::sort(others.begin(), others.end());
        const TrimerParams p =
            invert_trimer(others[0], e0, others[1], row.eps_P);
        row.t = p.t;
        row.lambda_i = p.lambda_i;
        row.lambda_o = p.lambda_o;
        row.has_inner = true;
      } else if (n == 4) {
        if (e.size() != 4) throw SiteModelError("class size != 4");
        double split = 0;
        const SquareParams p = invert_square(e[0], e[1], e[2], e[3],
                                             row.eps_P, 1e-3, &split);
        if (split > 0)
          row.warning = "degenerate pair split " + std::to_string(split) +
                        " eV above threshold";
        row.t = p.t;
        row.beta = p.beta;
        row.lambda = p.lambda;
        row.has_beta = true;
      }
    } catch (const SiteModelError& err) {
      row.warning = err.what();
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pipedetail

struct RunManifest {
  json config;
  std::vector<SeparationBundle> bundles;
  std::vector<ParamRow> params;
  json fits;
  std::vector<std::string> warnings;
  std::map<std::string, std::string> file_checksums;
  double total_seconds = 0;
  int cache_hits = 0;
};

namespace pipedetail {

inline void export_energies_csv(const RunConfig& cfg, const RunManifest& m,
                                const std::string& path) {
  std::ostringstream out;
  out << "d_a0,pair_index,energy_up_eV,energy_dn_eV,energy_mean_eV,class\n";
  for (const auto& b : m.bundles)
    for (Eigen::Index p = 0; 2 * p + 1 < b.energies.size(); ++p)
      out << fmt(b.actual_d) << "," << (p + 1) << ","
          << fmt(b.energies(2 * p)) << "," << fmt(b.energies(2 * p + 1)) << ","
          << fmt(0.5 * (b.energies(2 * p) + b.energies(2 * p + 1))) << ","
          << (p < static_cast<Eigen::Index>(b.classes.pair_labels.size())
                  ? b.classes.pair_labels[p]
                  : "?")
          << "\n";
  write_text(path, out.str());
}

inline void export_overlap_csvs(const RunManifest& m, const std::string& dir) {
  for (const auto& b : m.bundles)
    for (size_t a = 0; a < b.maps.size(); ++a) {
      std::ostringstream out;
      out << "state";
      static const char* ref_cols[12] = {"A1up", "A1dn", "T2.1up", "T2.1dn",
                                         "T2.2up", "T2.2dn", "T2.3up",
                                         "T2.3dn", "E.1up", "E.1dn", "E.2up",
                                         "E.2dn"};
      for (const char* c : ref_cols) out << "," << c;
      out << "\n";
      for (Eigen::Index k = 0; k < b.maps[a].rows(); ++k) {
        out << (k + 1);
        for (int i = 0; i < 12; ++i) out << "," << fmt(b.maps[a](k, i));
        out << "\n";
      }
      char name[64];
      std::snprintf(name, sizeof(name), "d%07.3f_site%zu.csv", b.actual_d, a);
      write_text(dir + "/" + name, out.str());
    }
}

inline void export_params_csv(const RunConfig& cfg, const RunManifest& m,
                              const std::string& path) {
  std::ostringstream out;
  out << "family,class,d_a0,t_eV,beta_eV,lambda_eV,lambda_i_eV,lambda_o_eV,"
         "eps_P_eV,warning\n";
  for (const auto& r : m.params) {
    out << cfg.family << "," << r.class_label << "," << fmt(r.d) << ","
        << fmt(r.t) << ",";
    out << (r.has_beta ? fmt(r.beta) : "") << ",";
    out << (r.has_inner ? "" : fmt(r.lambda)) << ",";
    out << (r.has_inner ? fmt(r.lambda_i) : "") << ",";
    out << (r.has_inner ? fmt(r.lambda_o) : "") << ",";
    out << fmt(r.eps_P) << "," << r.warning << "\n";
  }
  write_text(path, out.str());
}

inline void export_potential_sections(const RunConfig& cfg,
                                      const RunManifest& m,
                                      const std::string& path) {
  std::ostringstream out;
  out << "d_a0,label,s_a0,U_eV\n";
  for (const auto& b : m.bundles) {
    auto cell = build_supercell(
        Eigen::Vector3i(b.extent, b.extent, b.extent));
    std::vector<Eigen::Vector3d> pos;
    for (const auto& q : b.dopants_q) pos.push_back(q.cast<double>() * 0.25);
    auto emit = [&](const std::string& label,
                    const std::vector<Eigen::Vector3d>& dopants,
                    const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
      ImpurityPotential pot;
      pot.epsilon_si = cfg.epsilon_si;
      pot.u_ccc_ev = cfg.u_ccc_ev;
      pot.dopant_positions = dopants;
      const auto sec = potential_section(cell, pot, from, to, 257);
      for (const auto& [sarc, u] : sec.samples)
        out << fmt(b.actual_d) << "," << label << "," << fmt(sarc) << ","
            << fmt(u) << "\n";
    };
    if (cfg.family == "square_diag_100" && pos.size() == 4) {
      // diagonal through dopants 0 and 2, with and without the other pair
      emit("diagonal_full", pos, pos[0], pos[2]);
      emit("diagonal_pair_only", {pos[0], pos[2]}, pos[0], pos[2]);
    } else if (pos.size() >= 2) {
      emit("axis", pos, pos.front(), pos.back());
    }
  }
  write_text(path, out.str());
}

inline std::string file_checksum_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

}  // namespace pipedetail

// Fits every (class, quantity) series with at least 3 points; fewer points
// are exported raw without a fitted curve.
inline json fit_param_series(const std::vector<ParamRow>& params) {
  json fits = json::object();
  std::map<std::string, std::vector<const ParamRow*>> by_class;
  for (const auto& r : params)
    if (r.warning.empty()) by_class[r.class_label].push_back(&r);
  for (auto& [label, rows] : by_class) {
    std::sort(rows.begin(), rows.end(),
              [](const ParamRow* a, const ParamRow* b) { return a->d < b->d; });
    auto series_of = [&](FitQuantity q) {
      DistanceSeries s;
      s.class_label = label;
      s.quantity = q;
      for (const ParamRow* r : rows) {
        double v = 0;
        switch (q) {
          case FitQuantity::t: v = r->t; break;
          case FitQuantity::beta: v = r->has_beta ? r->beta : 0; break;
          case FitQuantity::lambda: v = r->has_inner ? 0 : r->lambda; break;
          case FitQuantity::lambda_i: v = r->has_inner ? r->lambda_i : 0; break;
          case FitQuantity::lambda_o: v = r->has_inner ? r->lambda_o : 0; break;
        }
        s.points.emplace_back(r->d, v);
      }
      return s;
    };
    std::vector<FitQuantity> quantities = {FitQuantity::t};
    if (!rows.empty() && rows[0]->has_inner) {
      quantities.push_back(FitQuantity::lambda_i);
      quantities.push_back(FitQuantity::lambda_o);
    } else {
      quantities.push_back(FitQuantity::lambda);
    }
    if (!rows.empty() && rows[0]->has_beta)
      quantities.push_back(FitQuantity::beta);
    for (FitQuantity q : quantities) {
      const DistanceSeries s = series_of(q);
      json entry;
      entry["points"] = json::array();
      for (const auto& [d, y] : s.points) entry["points"].push_back({d, y});
      if (s.points.size() >= 3) {
        try {
          const FormSelection sel = select_form(s);
          auto fit_json = [](const FitResult& f) {
            return json{{"form", fit_form_name(f.form)},
                        {"amplitude_eV", f.amplitude},
                        {"length_a0", f.length},
                        {"rms_eV", f.rms_residual},
                        {"residuals", f.residuals},
                        {"converged", f.converged}};
          };
          entry["selected"] = fit_json(sel.selected);
          entry["exponential"] = fit_json(sel.exponential);
          entry["rational"] = fit_json(sel.rational);
        } catch (const FitError& err) {
          entry["error"] = err.what();
        }
      } else {
        entry["note"] = "fewer than 3 points; raw values only";
      }
      fits[label][fit_quantity_name(q)] = entry;
    }
  }
  return fits;
}

inline RunManifest run_sweep(const RunConfig& cfg,
                             std::ostream* log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const TBParameterSet tb = load_parameters(resolve_params_path(cfg));
  RunManifest m;
  m.config = config_to_json(cfg);
  m.config["params_checksum"] = tb.checksum;
  SweepScratch scratch;
  for (size_t i = 0; i < cfg.d_list.size(); ++i) {
    try {
      SeparationBundle b = analyze_separation(
          cfg, tb, cfg.d_list[i], cfg.extent_for(i), &scratch, log);
      if (b.cache_hit) ++m.cache_hits;
      for (const auto& w : b.classes.warnings)
        m.warnings.push_back("d=" + std::to_string(cfg.d_list[i]) + ": " + w);
      m.bundles.push_back(std::move(b));
    } catch (const std::exception& err) {
      m.warnings.push_back("d=" + std::to_string(cfg.d_list[i]) +
                           " failed: " + err.what());
    }
  }
  for (const auto& b : m.bundles) {
    auto rows = pipedetail::extract_params(cfg, b);
    for (auto& r : rows) {
      if (!r.warning.empty())
        m.warnings.push_back("d=" + std::to_string(r.d) + " class " +
                             r.class_label + ": " + r.warning);
      m.params.push_back(r);
    }
  }
  m.fits = fit_param_series(m.params);
  const auto t1 = std::chrono::steady_clock::now();
  m.total_seconds = std::chrono::duration<double>(t1 - t0).count();
  return m;
}

inline void export_bundle(const RunConfig& cfg, RunManifest& m) {
  namespace pd = pipedetail;
  std::filesystem::create_directories(cfg.outdir);
  pd::export_energies_csv(cfg, m, cfg.outdir + "/energies.csv");
  pd::export_overlap_csvs(m, cfg.outdir + "/overlaps");
  pd::export_params_csv(cfg, m, cfg.outdir + "/params.csv");
  pd::write_text(cfg.outdir + "/fits.json", m.fits.dump(2));
  pd::export_potential_sections(cfg, m,
                                cfg.outdir + "/potential_sections.csv");

  json manifest;
  manifest["config"] = m.config;
  manifest["version"] = "1.0.0";
  manifest["total_seconds"] = m.total_seconds;
  manifest["cache_hits"] = m.cache_hits;
  manifest["warnings"] = m.warnings;
  for (const auto& b : m.bundles)
    manifest["separations"].push_back(json{{"requested_d", b.requested_d},
                                           {"actual_d", b.actual_d},
                                           {"extent", b.extent},
                                           {"solve_seconds", b.solve_seconds},
                                           {"h_applies", b.h_applies},
                                           {"converged", b.converged}});
  std::vector<std::string> files = {"energies.csv", "params.csv", "fits.json",
                                    "potential_sections.csv"};
  for (const auto& f : files) {
    const std::string p = cfg.outdir + "/" + f;
    if (std::filesystem::exists(p)) {
      const std::string sum = pd::file_checksum_hex(p);
      m.file_checksums[f] = sum;
      manifest["files"][f] = sum;
    }
  }
  if (std::filesystem::exists(cfg.outdir + "/overlaps"))
    for (const auto& e :
         std::filesystem::directory_iterator(cfg.outdir + "/overlaps")) {
      const std::string rel = "overlaps/" + e.path().filename().string();
      const std::string sum = pd::file_checksum_hex(e.path().string());
      m.file_checksums[rel] = sum;
      manifest["files"][rel] = sum;
    }
  pd::write_text(cfg.outdir + "/manifest.json", manifest.dump(2));
}

// Single centered dopant at the requested extent: the calibration anchor.
struct SingleDopantResult {
  int extent = 0;
  Eigen::VectorXd energies;   // 12 states
  std::vector<RefType> types;
  double window_lo = 0, window_hi = 0;
  double ground_ev = 0;
  bool cache_hit = false;
};

inline SingleDopantResult single_dopant_run(const RunConfig& cfg,
                                            std::ostream* log = nullptr) {
  const TBParameterSet tb = load_parameters(resolve_params_path(cfg));
  auto cell = build_supercell(
      Eigen::Vector3i(cfg.extent, cfg.extent, cfg.extent));
  // A site nearest the box center
  const Eigen::Vector3d center = cell.extent.cast<double>() / 2.0;
  const std::int32_t site = detail::snap_to_a_site(cell, center, 1.0);
  std::vector<Eigen::Vector3i> q = {cell.sites[site].pos_quarter};

  const std::string dir = resolve_cache_dir(cfg);
  const std::string key = cache_key(cfg, tb, cfg.extent, q, "single");
  const std::string path = dir + "/single-" + key + ".json";
  SingleDopantResult r;
  r.extent = cfg.extent;
  if (cfg.use_cache) {
    if (auto j = pipedetail::read_json(path)) {
      const auto& ev = (*j)["energies"];
      r.energies.resize(ev.size());
      for (size_t i = 0; i < ev.size(); ++i) r.energies(i) = ev[i];
      r.window_lo = (*j)["window_lo"];
      r.window_hi = (*j)["window_hi"];
      r.types = label_single_dopant_manifold(r.energies);
      r.ground_ev = r.energies(0);
      r.cache_hit = true;
      return r;
    }
  }
  const BoxEdges edges = box_edges(cfg, tb, cfg.extent, log);
  ImpurityPotential pot;
  pot.epsilon_si = cfg.epsilon_si;
  pot.u_ccc_ev = cfg.u_ccc_ev;
  pot.dopant_positions = {cell.sites[site].position()};
  HamiltonianOperator h(cell, tb, pot);
  SolverSettings s;
  s.tol = cfg.tol;
  s.seed = cfg.seed;
  s.filter_degree = cfg.filter_degree;
  s.block_extra = cfg.block_extra;
  s.window_lo = edges.window_lo();
  s.window_hi = edges.window_hi();
  s.log = log;
  const ReferenceStateSet ref = compute_reference_states(h, site, s);
  r.energies = ref.energies;
  r.types = ref.types;
  r.window_lo = s.window_lo;
  r.window_hi = s.window_hi;
  r.ground_ev = ref.energies(0);
  pipedetail::write_text(
      path,
      json{{"energies", std::vector<double>(r.energies.data(),
                                            r.energies.data() + 12)},
           {"window_lo", r.window_lo},
           {"window_hi", r.window_hi},
           {"extent", r.extent}}
          .dump(2));
  return r;
}

}  // namespace siparray
