#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace siparray {

// sp3d5s* nearest-neighbor parameter set with on-site p spin-orbit splitting.
// Values are read from a flat key=value file; nothing numeric lives in code.
struct TBParameterSet {
  double E_s = 0, E_p = 0, E_d = 0, E_sstar = 0;
  double V_sssigma = 0, V_sstarsstarsigma = 0, V_ssstarsigma = 0;
  double V_spsigma = 0, V_sstarpsigma = 0;
  double V_sdsigma = 0, V_sstardsigma = 0;
  double V_ppsigma = 0, V_pppi = 0;
  double V_pdsigma = 0, V_pdpi = 0;
  double V_ddsigma = 0, V_ddpi = 0, V_dddelta = 0;
  double Delta_p = 0;  // valence spin-orbit splitting; coupling is Delta_p/3
  std::string source_tag;
  std::uint64_t checksum = 0;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

class ParameterFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline TBParameterSet load_parameters(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterFileError("cannot open parameter file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string raw = buf.str();

  std::map<std::string, std::string> kv;
  std::istringstream lines(raw);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterFileError(path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (kv.count(key))
      throw ParameterFileError(path + ": duplicate key '" + key + "'");
    kv[key] = val;
  }

  TBParameterSet p;
  std::vector<std::string> missing;
  auto need = [&](const char* key, double& slot) {
    auto it = kv.find(key);
    if (it == kv.end()) {
      missing.emplace_back(key);
      return;
    }
    std::size_t used = 0;
    try {
      slot = std::stod(it->second, &used);
    } catch (const std::exception&) {
      throw ParameterFileError(path + ": non-numeric value for '" +
                               std::string(key) + "': " + it->second);
    }
    if (used != it->second.size())
      throw ParameterFileError(path + ": non-numeric value for '" +
                               std::string(key) + "': " + it->second);
    kv.erase(it);
  };

  need("E_s", p.E_s);
  need("E_p", p.E_p);
  need("E_d", p.E_d);
  need("E_sstar", p.E_sstar);
  need("V_sssigma", p.V_sssigma);
  need("V_sstarsstarsigma", p.V_sstarsstarsigma);
  need("V_ssstarsigma", p.V_ssstarsigma);
  need("V_spsigma", p.V_spsigma);
  need("V_sstarpsigma", p.V_sstarpsigma);
  need("V_sdsigma", p.V_sdsigma);
  need("V_sstardsigma", p.V_sstardsigma);
  need("V_ppsigma", p.V_ppsigma);
  need("V_pppi", p.V_pppi);
  need("V_pdsigma", p.V_pdsigma);
  need("V_pdpi", p.V_pdpi);
  need("V_ddsigma", p.V_ddsigma);
  need("V_ddpi", p.V_ddpi);
  need("V_dddelta", p.V_dddelta);
  need("Delta_p", p.Delta_p);
  if (!missing.empty()) {
    std::string msg = path + ": missing required keys:";
    for (const auto& k : missing) msg += " " + k;
    throw ParameterFileError(msg);
  }
  if (auto it = kv.find("source_tag"); it != kv.end()) {
    p.source_tag = it->second;
    kv.erase(it);
  }
  kv.erase("a0_nm");  // informational, value is fixed in constants.hpp
  if (!kv.empty())
    throw ParameterFileError(path + ": unknown key '" + kv.begin()->first +
                             "'");
  p.checksum = fnv1a64(raw);
  return p;
}

inline std::string default_parameter_path() {
#ifdef SIPARRAY_DATA_DIR
  return std::string(SIPARRAY_DATA_DIR) + "/si_sp3d5s_so.params";
#else
  return "data/si_sp3d5s_so.params";
#endif
}

}  // namespace siparray
