// pseudocal: reproducible runs over the pseudo-calibration toolkit.
//   pseudocal sample|density|verify|decompose|moments|experiment [options]
// Configuration layers: --config FILE (key = value lines), then --set key=value,
// then named flags. Exit status: 0 pass, 1 check failure, 2 usage or config error.

#include <openssl/evp.h>
#include <openssl/opensslv.h>
#include <gmp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pseudocal/cbd.hpp"
#include "pseudocal/csp_core.hpp"
#include "pseudocal/derivation.hpp"
#include "pseudocal/exact_oracle.hpp"
#include "pseudocal/fourier_poly.hpp"
#include "pseudocal/planted_density.hpp"
#include "pseudocal/refutation.hpp"

using namespace pseudocal;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- configuration -------------------------------------------------------

class Config {
 public:
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      if (trim(line).empty()) continue;
      assign(line, path + ":" + std::to_string(lineno));
    }
  }

  void assign(const std::string& kv, const std::string& where) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected key = value, got '" + kv + "'");
    auto key = trim(kv.substr(0, eq));
    if (key.empty()) throw UsageError(where + ": empty key");
    values_[key] = trim(kv.substr(eq + 1));
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("missing config key '" + key + "'");
    return it->second;
  }
  std::string str(const std::string& key, const std::string& def) const { return has(key) ? str(key) : def; }

  long integer(const std::string& key) const { return parse<long>(key, [](const std::string& s, std::size_t* pos) {
    return std::stol(s, pos);
  }); }
  long integer(const std::string& key, long def) const { return has(key) ? integer(key) : def; }

  double real(const std::string& key) const {
    return parse<double>(key, [](const std::string& s, std::size_t* pos) { return std::stod(s, pos); });
  }
  double real(const std::string& key, double def) const { return has(key) ? real(key) : def; }

  Rational rational(const std::string& key) const {
    try {
      return parse_rational(str(key));
    } catch (const Error&) {
      throw UsageError("config key '" + key + "' is not a rational: " + str(key));
    }
  }
  Rational rational(const std::string& key, const Rational& def) const { return has(key) ? rational(key) : def; }

  bool flag(const std::string& key) const {
    auto v = str(key, "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config key '" + key + "' is not a boolean: " + v);
  }

  json snapshot() const {
    json j = json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  template <class T, class F>
  T parse(const std::string& key, F f) const {
    const auto& s = str(key);
    try {
      std::size_t pos = 0;
      T v = f(s, &pos);
      if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("config key '" + key + "' has a malformed value: " + s);
  }

  std::map<std::string, std::string> values_;
};

// ---- run manifest --------------------------------------------------------

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  std::string out;
  char hex[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(hex, sizeof hex, "%02x", md[i]);
    out += hex;
  }
  return out;
}

class Run {
 public:
  Run(std::string command, const Config& cfg, fs::path out_dir)
      : command_(std::move(command)), cfg_(cfg), dir_(std::move(out_dir)), start_(utc_now()) {
    fs::create_directories(dir_);
  }

  // Single writer per file; the digest is taken from the bytes written.
  void write(const std::string& name, const std::string& bytes) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw UsageError("cannot write " + (dir_ / name).string());
    f << bytes;
    outputs_.push_back({{"file", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }

  void finish(int exit_code) {
    json m;
    m["command"] = command_;
    m["config"] = cfg_.snapshot();
    m["seed"] = cfg_.str("seed", "");
    m["versions"] = {{"pseudocal", kVersion},
                     {"compiler", __VERSION__},
                     {"gmp", gmp_version},
                     {"openssl", OPENSSL_VERSION_TEXT},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    m["threads"] = worker_count(0);
    m["start"] = start_;
    m["end"] = utc_now();
    m["exit_code"] = exit_code;
    m["outputs"] = outputs_;
    std::ofstream f(dir_ / "manifest.json");
    f << m.dump(2) << "\n";
  }

 private:
  std::string command_;
  const Config& cfg_;
  fs::path dir_;
  std::string start_;
  json outputs_ = json::array();
};

// ---- shared builders -----------------------------------------------------

// "0,1,2;1,2,3" lists the scopes of a restricted space
std::vector<Scope> parse_scopes(const std::string& text) {
  std::vector<Scope> out;
  std::stringstream outer(text);
  std::string part;
  while (std::getline(outer, part, ';')) {
    Scope s;
    std::stringstream inner(part);
    std::string v;
    while (std::getline(inner, v, ',')) {
      try {
        s.push_back(std::stoi(v));
      } catch (const std::exception&) {
        throw UsageError("malformed scope list: " + text);
      }
    }
    if (!s.empty()) out.push_back(s);
  }
  if (out.empty()) throw UsageError("empty scope list: " + text);
  return out;
}

Rational inclusion_probability(const Config& cfg, int n, int k) {
  if (cfg.has("p")) return cfg.rational("p");
  if (cfg.has("Delta")) return ScopeSpace::p_for_delta(n, k, cfg.rational("Delta"));
  throw UsageError("missing config key 'p' (or 'Delta')");
}

SpacePtr space_from(const Config& cfg) {
  int n = static_cast<int>(cfg.integer("n"));
  int k = static_cast<int>(cfg.integer("k", 3));
  Rational p = inclusion_probability(cfg, n, k);
  if (cfg.has("scopes"))
    return std::make_shared<const ScopeSpace>(ScopeSpace::restricted(n, k, parse_scopes(cfg.str("scopes")), p));
  return std::make_shared<const ScopeSpace>(ScopeSpace::full(n, k, p));
}

Predicate predicate_from(const Config& cfg, int k) { return predicate_by_name(cfg.str("pred", "xor"), k); }

Caps caps_from(const Config& cfg, int dx, int dI) {
  return Caps{static_cast<int>(cfg.integer("dx", dx)), static_cast<int>(cfg.integer("dI", dI))};
}

std::uint64_t seed_from(const Config& cfg) { return static_cast<std::uint64_t>(cfg.integer("seed", 1)); }

json vars_json(VarMask m, int n) {
  json a = json::array();
  for (int i = 0; i < n; ++i)
    if (m >> i & 1u) a.push_back(i);
  return a;
}

// ---- sample --------------------------------------------------------------

int cmd_sample(const Config& cfg, Run& run) {
  auto sp = space_from(cfg);
  bool planted = cfg.flag("planted");
  auto pred = predicate_from(cfg, sp->k());
  long count = cfg.integer("count", 1);
  if (count < 0) throw UsageError("config key 'count' must be nonnegative");
  CounterRng root(seed_from(cfg));
  double total = 0, total_sq = 0;
  std::string counts = "index,constraints\n";
  for (long i = 0; i < count; ++i) {
    auto rng = root.split(static_cast<std::uint64_t>(i));
    json j;
    Instance inst = empty_instance(sp);
    if (planted) {
      auto [x, drawn] = sample_planted(sp, pred, rng);
      inst = drawn;
      j = instance_to_json(inst);
      j["planted_x"] = x;
      j["predicate"] = predicate_to_json(pred);
    } else {
      inst = sample_null(sp, rng);
      j = instance_to_json(inst);
    }
    char name[48];
    std::snprintf(name, sizeof name, "instance_%06ld.json", i);
    run.write(name, j.dump(2) + "\n");
    double m = static_cast<double>(inst.constraint_count());
    total += m;
    total_sq += m * m;
    counts += std::to_string(i) + "," + std::to_string(inst.constraint_count()) + "\n";
  }
  run.write("constraint_counts.csv", counts);
  double mean = count ? total / count : 0;
  double var = count > 1 ? (total_sq - count * mean * mean) / (count - 1) : 0;
  double expected = rational_to_double(sp->p()) * static_cast<double>(sp->size());
  json summary{{"law", planted ? "planted" : "null"},
               {"count", count},
               {"mean_constraints", mean},
               {"sd_constraints", std::sqrt(std::max(var, 0.0))},
               {"expected_constraints", expected}};
  run.write("summary.json", summary.dump(2) + "\n");
  std::cout << "wrote " << count << " " << (planted ? "planted" : "null") << " instances, mean constraints " << mean
            << " (expected " << expected << ")\n";
  return 0;
}

// ---- density -------------------------------------------------------------

int cmd_density(const Config& cfg, Run& run) {
  auto sp = space_from(cfg);
  auto pred = predicate_from(cfg, sp->k());
  auto caps = caps_from(cfg, 2, 2);
  auto budget = static_cast<std::size_t>(cfg.integer("max_terms", static_cast<long>(kDefaultTermBudget)));
  auto poly = build_pseudo_density(pred, sp, caps, budget);
  std::string text = cfg.flag("float") ? dump_jsonl(to_float(poly)) : dump_jsonl(poly);
  run.write("density.jsonl", text);
  std::cout << "wrote density with " << std::count(text.begin(), text.end(), '\n') << " terms\n";
  return 0;
}

// ---- verify --------------------------------------------------------------

struct Verdict {
  std::string anchor;
  bool pass = false;
  std::string detail;
};

// Every basis index on a tabulated space: alpha over [n], one (beta, T) per scope.
std::vector<BasisIndex> every_index(const ScopeSpace& sp) {
  std::vector<BasisIndex> out;
  int k = sp.k();
  std::uint32_t per = 2u << k;
  std::uint64_t combos = 1;
  for (std::size_t s = 0; s < sp.size(); ++s) combos *= per;
  for (VarMask a = 0; a < (VarMask{1} << sp.n()); ++a)
    for (std::uint64_t c = 0; c < combos; ++c) {
      std::vector<ScopeTerm> terms;
      std::uint64_t rest = c;
      for (std::size_t s = 0; s < sp.size(); ++s) {
        std::uint32_t v = static_cast<std::uint32_t>(rest % per);
        rest /= per;
        ScopeTerm st{static_cast<std::uint32_t>(s), static_cast<std::uint8_t>(v >> k), v & ((1u << k) - 1)};
        if (st.beta || st.tmask) terms.push_back(st);
      }
      out.push_back(BasisIndex{a, terms});
    }
  return out;
}

SpacePtr tiny_space(const Config& cfg, std::vector<Scope> def_scopes, int def_n, const Rational& def_p) {
  int n = static_cast<int>(cfg.integer("n", def_n));
  int k = static_cast<int>(cfg.integer("k", 3));
  auto scopes = cfg.has("scopes") ? parse_scopes(cfg.str("scopes")) : def_scopes;
  return std::make_shared<const ScopeSpace>(ScopeSpace::restricted(n, k, scopes, cfg.rational("p", def_p)));
}

std::vector<Verdict> suite_fourier_exact(const Config& cfg) {
  auto sp = tiny_space(cfg, {{0, 1, 2}, {1, 3, 2}}, 4, Rational(1, 3));
  auto pred = predicate_from(cfg, sp->k());
  TinyUniverse u(sp, pred);
  std::size_t total = 0, mismatch = 0, above = 0;
  for (const auto& idx : every_index(*sp)) {
    ++total;
    Surd exact = exact_fourier(u, idx);
    if (exact != mu_star_coeff(pred, *sp, idx)) ++mismatch;
    if (exact.abs() > coefficient_bound(*sp, idx)) ++above;
  }
  return {{"closed-form coefficient equals exhaustive Fourier transform", mismatch == 0,
           std::to_string(total) + " indices, " + std::to_string(mismatch) + " mismatches"},
          {"coefficient magnitude bound", above == 0, std::to_string(above) + " coefficients above the bound"}};
}

std::vector<Verdict> suite_derivation_counts(const Config& cfg) {
  std::vector<Verdict> out;
  int lo = static_cast<int>(cfg.integer("n_min", 4)), hi = static_cast<int>(cfg.integer("n_max", 5));
  int t = static_cast<int>(cfg.integer("t", 3));
  int l_max = static_cast<int>(cfg.integer("l_max", 2));
  for (int n = lo; n <= hi; ++n) {
    auto sp = std::make_shared<const ScopeSpace>(ScopeSpace::full(n, 3, Rational(1, 10)));
    auto first = count_table(sp, t, n, l_max, 1.0);
    auto second = count_table(sp, t, n, l_max, 1.0);
    std::size_t over = 0;
    for (const auto& row : first.rows)
      if (row.l >= 1 &&
          static_cast<double>(row.brute_count) > count_bound(n, 3, t, popcount(row.alpha), row.l, first.fitted_C))
        ++over;
    char buf[160];
    std::snprintf(buf, sizeof buf, "n=%d, %zu rows, fitted C=%.6f, %zu rows over the bound", n, first.rows.size(),
                  first.fitted_C, over);
    out.push_back({"derivation count bound n=" + std::to_string(n), over == 0, buf});
    out.push_back({"fitted constant is stable n=" + std::to_string(n),
                   first.fitted_C == second.fitted_C && count_csv(first) == count_csv(second), "two reruns compared"});
  }
  return out;
}

Assignment assignment_of(VarMask m, int n) {
  Assignment x(n);
  for (int i = 0; i < n; ++i) x[i] = (m >> i & 1u) ? -1 : 1;
  return x;
}

std::vector<Verdict> suite_restriction_identity(const Config& cfg) {
  auto sp = tiny_space(cfg, {{0, 1, 2}, {1, 2, 3}, {3, 1, 0}}, 4, Rational(1, 3));
  auto pred = predicate_from(cfg, sp->k());
  TinyUniverse u(sp, pred);
  int n = sp->n(), k = sp->k();
  std::size_t fixings = 0, pointwise = 0, decomp = 0, remainder = 0;
  for (std::uint32_t s = 0; s < sp->size(); ++s)
    for (std::uint32_t st = 0; st < u.local_states(); ++st) {
      RestrictedInstance fix;
      fix.scopes = {s};
      fix.y.push_back((st >> k & 1u) ? -1 : 1);
      for (int j = 0; j < k; ++j) fix.b.push_back((st >> j & 1u) ? -1 : 1);
      bool positive = false;
      for (VarMask x = 0; x < (VarMask{1} << n) && !positive; ++x)
        positive = sgn(pi_U(pred, *sp, fix, assignment_of(x, n))) > 0;
      if (!positive) continue;
      ++fixings;
      auto table = exact_conditional(u, fix);
      for (VarMask x = 0; x < (VarMask{1} << n); ++x) {
        Rational pi = pi_U(pred, *sp, fix, assignment_of(x, n));
        for (std::uint64_t rc = 0; rc < table.rest_count(); ++rc)
          if (u.density(x, table.merge(rc)) != pi * table.value(x, rc)) ++pointwise;
      }
      for (const auto& d : {Caps{n, 2}, Caps{n, 3}}) {
        auto dec = decompose_restriction(pred, sp, fix, d);
        if (!dec.identity_holds) ++decomp;
        if (!dec.h_vanishes_low || !dec.h_within_bound) ++remainder;
      }
    }
  auto f = std::to_string(fixings) + " single-scope fixings with positive mass";
  return {{"restriction factors through pi_U", pointwise == 0 && fixings > 0,
           f + ", " + std::to_string(pointwise) + " pointwise failures"},
          {"truncated restriction splits into pi_U times low-degree part plus remainder", decomp == 0,
           std::to_string(decomp) + " identity failures"},
          {"remainder vanishes at low degree and obeys its coefficient bound", remainder == 0,
           std::to_string(remainder) + " failures"}};
}

std::vector<Verdict> suite_cbd_partition(const Config& cfg) {
  auto sp = tiny_space(cfg, {{0, 1, 2}, {1, 2, 3}, {3, 0, 1}}, 4, Rational(1, 3));
  long tables = cfg.integer("tables", 100);
  Rational delta = cfg.rational("delta", Rational(1, 2));
  int t = static_cast<int>(cfg.integer("t_param", 2));
  CounterRng rng(seed_from(cfg));
  const Rational tilts[] = {Rational(1), Rational(9, 10), Rational(1, 2), Rational(1, 10)};
  std::size_t failed = 0, parts = 0;
  std::string first;
  for (long i = 0; i < tables; ++i) {
    std::size_t support = 1 + rng.below(i % 2 == 0 ? 2 : 60);
    auto d = random_table(sp, rng, support, tilts[i % 4]);
    auto part = decompose(d, delta, t, default_threshold(sp->n()));
    auto rep = verify_partition(part, d);
    parts += part.parts.size();
    if (!rep.ok()) {
      ++failed;
      if (first.empty()) first = rep.failures.empty() ? "unspecified" : rep.failures.front();
    }
  }
  std::string detail = std::to_string(tables) + " tables, " + std::to_string(parts) + " parts, " +
                       std::to_string(failed) + " failed";
  if (!first.empty()) detail += ", first failure: " + first;
  return {{"decomposition into CBD parts plus light B and C", failed == 0, detail}};
}

std::vector<Verdict> suite_decay_grid(const Config& cfg) {
  // d_x <= rho (d_I - 2b) with rho = 0.1 forces d_x = 1 once d_I is moderate
  DecayParams dp;
  dp.n = cfg.real("n", 1e4);
  dp.k = static_cast<int>(cfg.integer("k", 3));
  dp.t = static_cast<int>(cfg.integer("t", 3));
  dp.Delta = cfg.real("Delta", 2);
  dp.C = cfg.real("C", 1);
  dp.delta_cbd = cfg.real("delta_cbd", 0.1);
  dp.b_cbd = static_cast<int>(cfg.integer("b_cbd", 0));
  dp.d_x = static_cast<int>(cfg.integer("dx", 1));
  dp.d_I = static_cast<int>(cfg.integer("dI", 10));
  auto rep = check_rapid_decay(dp);
  std::size_t grid_bad = 0;
  for (const auto& row : rep.grid) grid_bad += !row.bound_satisfied;
  char buf[200];
  std::snprintf(buf, sizeof buf, "d=(%d,%d), nu in [%.4f, %.4f)", dp.d_x, dp.d_I, rep.nu_fit, rep.nu_high);
  std::string pre = rep.violations.empty() ? "all hold" : rep.violations.front();
  return {{"decay preconditions", rep.preconditions_ok(), pre},
          {"decay clause: single-degree terms small", rep.clause1, "max " + std::to_string(rep.clause1_max)},
          {"decay clause: summed terms small", rep.clause2, "sum " + std::to_string(rep.clause2_sum)},
          {"decay clause: top-degree terms dominated", rep.clause3, buf},
          {"decay grid bounds", grid_bad == 0, std::to_string(grid_bad) + " grid cells violated"}};
}

int cmd_verify(const std::string& suite, const Config& cfg, Run& run) {
  std::vector<Verdict> verdicts;
  if (suite == "fourier-exact")
    verdicts = suite_fourier_exact(cfg);
  else if (suite == "derivation-counts")
    verdicts = suite_derivation_counts(cfg);
  else if (suite == "restriction-identity")
    verdicts = suite_restriction_identity(cfg);
  else if (suite == "cbd-partition")
    verdicts = suite_cbd_partition(cfg);
  else if (suite == "decay-grid")
    verdicts = suite_decay_grid(cfg);
  else
    throw UsageError("unknown suite '" + suite +
                     "' (fourier-exact, derivation-counts, restriction-identity, cbd-partition, decay-grid)");
  json report{{"suite", suite}, {"checks", json::array()}};
  bool all = true;
  for (const auto& v : verdicts) {
    all = all && v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << v.anchor << ": " << v.detail << "\n";
    report["checks"].push_back({{"anchor", v.anchor}, {"verdict", v.pass ? "pass" : "fail"}, {"detail", v.detail}});
  }
  report["pass"] = all;
  run.write("report.json", report.dump(2) + "\n");
  return all ? 0 : 1;
}

// ---- decompose -----------------------------------------------------------

DistributionTable table_from(const Config& cfg, const SpacePtr& sp) {
  auto kind = cfg.str("table", "planted-tilted");
  if (kind == "background") return background_table(sp);
  if (kind == "planted-tilted") {
    TinyUniverse u(sp, predicate_from(cfg, sp->k()));
    return planted_tilted_table(u, cfg.rational("w", Rational(1, 2)));
  }
  if (kind == "random") {
    CounterRng rng(seed_from(cfg));
    return random_table(sp, rng, static_cast<std::size_t>(cfg.integer("support", 8)),
                        cfg.rational("tilt", Rational(1, 2)));
  }
  throw UsageError("unknown table kind '" + kind + "' (background, planted-tilted, random)");
}

Rational threshold_from(const Config& cfg, int n) {
  return cfg.has("theta") ? cfg.rational("theta") : default_threshold(n);
}

int cmd_decompose(const Config& cfg, Run& run) {
  auto sp = space_from(cfg);
  auto table = table_from(cfg, sp);
  auto part = decompose(table, cfg.rational("delta", Rational(1, 2)), static_cast<int>(cfg.integer("t_param", 1)),
                        threshold_from(cfg, sp->n()));
  auto rep = verify_partition(part, table);
  run.write("partition.json", partition_to_json(part, table, rep).dump(2) + "\n");
  std::cout << part.parts.size() << " parts, |B|=" << part.B.size() << ", |C|=" << part.C.size() << ", "
            << (rep.ok() ? "verified" : "verification failed") << "\n";
  for (const auto& f : rep.failures) std::cout << "  " << f << "\n";
  return rep.ok() ? 0 : 1;
}

// ---- moments -------------------------------------------------------------

int cmd_moments(const Config& cfg, Run& run) {
  Instance inst;
  SpacePtr sp;
  if (cfg.has("instance")) {
    std::ifstream in(cfg.str("instance"));
    if (!in) throw UsageError("cannot read instance file " + cfg.str("instance"));
    auto j = json::parse(in);
    int n = j.at("n").get<int>(), k = j.at("k").get<int>();
    inst = instance_from_json(j, inclusion_probability(cfg, n, k));
    sp = inst.space;
  } else {
    sp = space_from(cfg);
    CounterRng rng(seed_from(cfg));
    inst = sample_planted(sp, predicate_from(cfg, sp->k()), rng).second;
  }
  auto pred = predicate_from(cfg, sp->k());
  auto caps = caps_from(cfg, 2, 2);
  int cap = static_cast<int>(cfg.integer("subset_cap", 2));
  auto rep = local_moments(inst, pred, caps, cap);
  std::string csv = "alpha,moment\n";
  for (const auto& [alpha, m] : rep.moments) {
    std::string vars;
    for (int i = 0; i < sp->n(); ++i)
      if (alpha >> i & 1u) vars += (vars.empty() ? "" : " ") + std::to_string(i);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", m);
    csv += "\"" + vars + "\"," + buf + "\n";
  }
  run.write("moments.csv", csv);
  json locals = json::array();
  for (const auto& l : rep.locals) locals.push_back({{"vars", vars_json(l.vars, sp->n())}, {"mass", l.mass},
                                                     {"min_mass", l.min_mass}});
  json summary{{"density_mass", rep.density_mass},
               {"min_local_mass", rep.min_mass},
               {"constraints", inst.constraint_count()},
               {"locals", locals}};
  run.write("moments.json", summary.dump(2) + "\n");
  std::cout << rep.moments.size() << " moments, density mass " << rep.density_mass << ", min local mass "
            << rep.min_mass << "\n";
  return 0;
}

// ---- experiment ----------------------------------------------------------

int experiment_concentration(const Config& cfg, Run& run) {
  ConcentrationConfig c;
  c.n = static_cast<int>(cfg.integer("n"));
  c.k = static_cast<int>(cfg.integer("k"));
  c.Delta = cfg.real("Delta");
  c.pred = cfg.str("pred");
  c.d = Caps{static_cast<int>(cfg.integer("dx")), static_cast<int>(cfg.integer("dI"))};
  c.eta = cfg.real("eta");
  c.trials = static_cast<int>(cfg.integer("trials"));
  c.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  c.threads = static_cast<int>(cfg.integer("threads", 0));
  auto s = run_concentration(c);
  run.write("results.csv", concentration_csv(s));
  run.write("summary.json", concentration_json(c, s).dump(2) + "\n");
  std::printf("trials=%d mean_G=%.4f se=%.4f target=%.1f Pr[E]=%.3f\n", c.trials, s.mean_G, s.se_G, s.target,
              s.pr_event);
  return 0;
}

DecayParams decay_params_from(const Config& cfg) {
  DecayParams dp;
  dp.n = cfg.real("n");
  dp.k = static_cast<int>(cfg.integer("k"));
  dp.t = static_cast<int>(cfg.integer("t"));
  dp.Delta = cfg.real("Delta");
  dp.C = cfg.real("C", 1);
  dp.delta_cbd = cfg.real("delta_cbd");
  dp.b_cbd = static_cast<int>(cfg.integer("b_cbd", 0));
  dp.d_x = static_cast<int>(cfg.integer("dx"));
  dp.d_I = static_cast<int>(cfg.integer("dI"));
  dp.nu = cfg.real("nu", dp.nu);
  dp.nu_x = cfg.real("nu_x", dp.nu_x);
  dp.nu_y = cfg.real("nu_y", dp.nu_y);
  return dp;
}

int experiment_decay_grid(const Config& cfg, Run& run) {
  auto dp = decay_params_from(cfg);
  auto rep = check_rapid_decay(dp);
  run.write("results.csv", decay_csv(rep));
  json summary{{"preconditions_ok", rep.preconditions_ok()},
               {"violations", rep.violations},
               {"clause1", rep.clause1},
               {"clause1_max", rep.clause1_max},
               {"clause2", rep.clause2},
               {"clause2_sum", rep.clause2_sum},
               {"clause3", rep.clause3},
               {"nu_low", rep.nu_low},
               {"nu_high", rep.nu_high},
               {"nu_fit", rep.nu_fit}};
  run.write("summary.json", summary.dump(2) + "\n");
  std::printf("grid %zu cells, clauses %d%d%d, nu in [%.4f, %.4f)\n", rep.grid.size(), rep.clause1, rep.clause2,
              rep.clause3, rep.nu_fit, rep.nu_high);
  return 0;
}

int experiment_nonnegativity(const Config& cfg, Run& run) {
  auto sp = space_from(cfg);
  auto pred = predicate_from(cfg, sp->k());
  TinyUniverse u(sp, pred);
  auto table = planted_tilted_table(u, cfg.rational("w"));
  Caps caps{static_cast<int>(cfg.integer("dx")), static_cast<int>(cfg.integer("dI"))};
  Rational delta = cfg.rational("delta");
  auto part = decompose(table, delta, static_cast<int>(cfg.integer("t_param")), threshold_from(cfg, sp->n()));
  auto rep = verify_partition(part, table);
  Rational tau = cfg.rational("tau", Rational(1, 100));

  DecayParams dp;
  dp.n = sp->n();
  dp.k = sp->k();
  dp.t = pred.t;
  dp.Delta = rational_to_double(sp->delta());
  dp.C = cfg.real("C", 1);
  dp.delta_cbd = rational_to_double(delta);
  dp.d_x = caps.dx;
  dp.d_I = caps.dI;
  for (const auto& pt : part.parts) dp.b_cbd = std::max(dp.b_cbd, static_cast<int>(pt.block.size()));
  json summary{{"parts", part.parts.size()}, {"partition_verified", rep.ok()}, {"b_cbd", dp.b_cbd}};
  std::optional<NonnegBound> bound;
  try {
    bound = nonneg_probability_bound(dp);
    summary["bound"] = bound->value;
    summary["nu"] = bound->nu;
  } catch (const Error& e) {
    auto decay = check_rapid_decay(dp);
    summary["bound"] = nullptr;
    summary["bound_error"] = e.what();
    summary["nu_low"] = decay.nu_low;
    summary["nu_high"] = decay.nu_high;
  }

  std::string csv = "part,block_size,instances,negative,points,fraction,min_value\n";
  std::size_t over = 0;
  double worst = 0;
  for (std::size_t i = 0; i < part.parts.size(); ++i) {
    const auto& pt = part.parts[i];
    auto h = avg_over_distribution(conditional(table, pt.instances), pred, caps);
    auto nf = negative_fraction(h, tau);
    worst = std::max(worst, nf.fraction());
    if (bound && nf.fraction() > bound->value) ++over;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%zu,%.17g,%s\n", i, pt.block.size(), pt.instances.size(),
                  static_cast<std::size_t>(nf.below), static_cast<std::size_t>(nf.points), nf.fraction(), rational_str(nf.min_value).c_str());
    csv += buf;
  }
  summary["worst_fraction"] = worst;
  summary["parts_over_bound"] = over;
  run.write("results.csv", csv);
  run.write("summary.json", summary.dump(2) + "\n");
  std::printf("%zu parts, worst negative fraction %.6f, %s\n", part.parts.size(), worst,
              bound ? ("bound " + std::to_string(bound->value)).c_str() : "bound out of regime");
  return rep.ok() && bound && over == 0 ? 0 : 1;
}

int cmd_experiment(const Config& cfg, Run& run) {
  auto kind = cfg.str("kind");
  if (kind == "concentration") return experiment_concentration(cfg, run);
  if (kind == "decay-grid") return experiment_decay_grid(cfg, run);
  if (kind == "nonnegativity") return experiment_nonnegativity(cfg, run);
  throw UsageError("unknown experiment kind '" + kind + "' (concentration, decay-grid, nonnegativity)");
}

// ---- command line --------------------------------------------------------

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out = ".";
  std::map<std::string, std::string> named;
};

// Named flags are stored as config keys so they override the file and --set.
void add_named(CLI::App* sub, Common& c, const std::vector<std::pair<std::string, std::string>>& keys) {
  for (const auto& [key, help] : keys)
    sub->add_option_function<std::string>(
        "--" + key, [&c, key = key](const std::string& v) { c.named[key] = v; }, help);
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_file, "key = value config file");
  sub->add_option("--set", c.sets, "override a config key (key=value), repeatable");
  sub->add_option("--out", c.out, "output directory");
  add_named(sub, c, {{"seed", "random seed"}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pseudo-calibration toolkit"};
  app.require_subcommand(1);
  Common c;

  auto* sample = app.add_subcommand("sample", "draw instances from the null or planted law");
  add_common(sample, c);
  sample->add_flag_callback("--planted", [&c] { c.named["planted"] = "true"; }, "planted law");
  sample->add_flag_callback("--null", [&c] { c.named["planted"] = "false"; }, "null law (default)");
  add_named(sample, c, {{"n", "variables"}, {"k", "arity"}, {"p", "inclusion probability"},
                        {"Delta", "constraint density"}, {"count", "instances"}, {"pred", "xor, sat or uniform"},
                        {"scopes", "restricted scopes, e.g. 0,1,2;1,2,3"}});

  auto* density = app.add_subcommand("density", "write the truncated pseudo-density as JSONL");
  add_common(density, c);
  density->add_flag_callback("--float", [&c] { c.named["float"] = "true"; }, "float coefficients");
  add_named(density, c, {{"n", "variables"}, {"k", "arity"}, {"p", "inclusion probability"},
                         {"Delta", "constraint density"}, {"pred", "predicate"}, {"dx", "x degree cap"},
                         {"dI", "instance degree cap"}, {"scopes", "restricted scopes"}, {"max_terms", "term budget"}});

  std::string suite;
  auto* verify = app.add_subcommand("verify", "run a verification suite");
  add_common(verify, c);
  verify->add_option("suite", suite, "fourier-exact, derivation-counts, restriction-identity, cbd-partition, decay-grid")
      ->required();

  auto* decomp = app.add_subcommand("decompose", "split a distribution table into CBD parts");
  add_common(decomp, c);
  add_named(decomp, c, {{"n", "variables"}, {"k", "arity"}, {"p", "inclusion probability"},
                        {"scopes", "restricted scopes"}, {"table", "background, planted-tilted or random"},
                        {"w", "planted weight"}, {"delta", "density exponent"}, {"t_param", "truncation order"},
                        {"theta", "mass threshold"}, {"support", "random support size"}, {"tilt", "random tilt"}});

  auto* moments = app.add_subcommand("moments", "pseudo-moments and local distributions of one instance");
  add_common(moments, c);
  add_named(moments, c, {{"instance", "instance JSON file"}, {"n", "variables"}, {"k", "arity"},
                         {"p", "inclusion probability"}, {"Delta", "constraint density"}, {"dx", "x degree cap"},
                         {"dI", "instance degree cap"}, {"subset_cap", "largest variable subset"},
                         {"pred", "predicate"}, {"scopes", "restricted scopes"}});

  auto* experiment = app.add_subcommand("experiment", "run a configured experiment");
  add_common(experiment, c);
  add_named(experiment, c, {{"kind", "concentration, decay-grid or nonnegativity"}, {"trials", "trials"},
                            {"threads", "worker cap"}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Config cfg;
  std::string command = app.get_subcommands().front()->get_name();
  try {
    if (!c.config_file.empty()) cfg.load_file(c.config_file);
    for (const auto& s : c.sets) cfg.assign(s, "--set");
    for (const auto& [k, v] : c.named) cfg.set(k, v);
    if (command == "verify") command += " " + suite;

    Run run(command, cfg, c.out);
    int code = 0;
    try {
      if (command == "sample")
        code = cmd_sample(cfg, run);
      else if (command == "density")
        code = cmd_density(cfg, run);
      else if (command.rfind("verify", 0) == 0)
        code = cmd_verify(suite, cfg, run);
      else if (command == "decompose")
        code = cmd_decompose(cfg, run);
      else if (command == "moments")
        code = cmd_moments(cfg, run);
      else
        code = cmd_experiment(cfg, run);
    } catch (const UsageError&) {
      run.finish(2);
      throw;
    } catch (const Error& e) {
      bool usage = e.kind() == ErrorKind::invalid_config || e.kind() == ErrorKind::invalid_input ||
                   e.kind() == ErrorKind::invalid_arity;
      run.finish(usage ? 2 : 1);
      throw;
    }
    run.finish(code);
    return code;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    bool usage = e.kind() == ErrorKind::invalid_config || e.kind() == ErrorKind::invalid_input ||
                 e.kind() == ErrorKind::invalid_arity;
    return usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
