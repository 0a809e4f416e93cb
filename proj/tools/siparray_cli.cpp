#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "siparray/pipeline.hpp"

namespace {

int cmd_run(const std::string& config_path, bool verbose) {
  auto cfg = siparray::load_run_config(config_path);
  std::ofstream log_file;
  std::ostream* log = nullptr;
  if (verbose) {
    std::filesystem::create_directories(cfg.outdir);
    log_file.open(cfg.outdir + "/solver.log");
    log = &log_file;
  }
  auto manifest = siparray::run_sweep(cfg, log);
  siparray::export_bundle(cfg, manifest);
  std::cout << "family " << cfg.family << ", " << manifest.bundles.size()
            << "/" << cfg.d_list.size() << " separations analyzed in "
            << std::fixed << std::setprecision(1) << manifest.total_seconds
            << " s (" << manifest.cache_hits << " cache hits)\n";
  for (const auto& w : manifest.warnings) std::cout << "warning: " << w << "\n";
  std::cout << "outputs in " << cfg.outdir << "\n";
  if (manifest.bundles.size() < cfg.d_list.size()) return 1;
  return manifest.warnings.empty() ? 0 : 2;
}

int cmd_bulk_selftest(const std::string& config_path, bool verbose) {
  auto cfg = siparray::load_run_config(config_path);
  auto r = siparray::bulk_selftest(cfg, verbose ? &std::cerr : nullptr);
  std::cout << "bulk edges: VBM " << r.edges.bulk_vbm_ev << " eV, CBM "
            << r.edges.bulk_cbm_ev << " eV\n";
  std::cout << "box  edges: VBM " << r.edges.vbm_ev << " eV, CBM "
            << r.edges.cbm_ev << " eV (extent " << cfg.extent << ")\n";
  std::cout << "gap window: [" << r.edges.window_lo() << ", "
            << r.edges.window_hi() << "] eV\n";
  std::cout << "states inside window: " << r.in_window_count << "\n";
  for (double v : r.stray_values) std::cout << "  stray state at " << v << " eV\n";
  return r.in_window_count == 0 ? 0 : 1;
}

int cmd_single_dopant(const std::string& config_path, bool verbose) {
  auto cfg = siparray::load_run_config(config_path);
  auto r = siparray::single_dopant_run(cfg, verbose ? &std::cerr : nullptr);
  std::cout << "extent " << r.extent << ", window [" << r.window_lo << ", "
            << r.window_hi << "] eV" << (r.cache_hit ? " (cached)" : "")
            << "\n";
  for (int i = 0; i < r.energies.size(); ++i)
    std::cout << "  " << siparray::ref_type_name(r.types[i]) << "  "
              << std::setprecision(9) << r.energies(i) << " eV\n";
  std::cout << "ground state: " << r.ground_ev << " eV\n";
  return 0;
}

int cmd_report(const std::string& run_dir) {
  std::ifstream in(run_dir + "/manifest.json");
  if (!in) {
    std::cerr << "no manifest.json in " << run_dir << "\n";
    return 1;
  }
  auto j = siparray::json::parse(in);
  std::cout << "family: " << j["config"]["family"].get<std::string>() << "\n";
  std::cout << "total:  " << j["total_seconds"].get<double>() << " s, "
            << j["cache_hits"].get<int>() << " cache hits\n";
  for (const auto& s : j.value("separations", siparray::json::array()))
    std::cout << "  d=" << s["actual_d"].get<double>() << " a0: extent "
              << s["extent"].get<int>() << ", "
              << s["solve_seconds"].get<double>() << " s, converged "
              << s["converged"].get<bool>() << "\n";
  for (const auto& w : j.value("warnings", std::vector<std::string>{}))
    std::cout << "  warning: " << w << "\n";
  std::ifstream params(run_dir + "/params.csv");
  if (params) {
    std::cout << "extracted parameters:\n";
    std::string line;
    while (std::getline(params, line)) std::cout << "  " << line << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phosphorus-array tight-binding spectra and site-model "
               "parameter extraction"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "write solver convergence logs");

  std::string config_path, run_dir;
  auto* run = app.add_subcommand("run", "analyze a separation sweep");
  run->add_option("config", config_path, "JSON run configuration")->required();
  auto* bulk = app.add_subcommand("bulk-selftest",
                                  "verify the undoped box has a clean gap");
  bulk->add_option("config", config_path, "JSON run configuration")->required();
  auto* single = app.add_subcommand("single-dopant",
                                    "solve the single-dopant manifold");
  single->add_option("config", config_path, "JSON run configuration")
      ->required();
  auto* report = app.add_subcommand("report", "summarize a finished run");
  report->add_option("dir", run_dir, "run output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(config_path, verbose);
    if (bulk->parsed()) return cmd_bulk_selftest(config_path, verbose);
    if (single->parsed()) return cmd_single_dopant(config_path, verbose);
    if (report->parsed()) return cmd_report(run_dir);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
