#include "icm/dataset.hpp"
#include "icm/error.hpp"
#include "icm/estimator.hpp"
#include "icm/inference.hpp"
#include "icm/kernels.hpp"
#include "icm/parallel.hpp"
#include "icm/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifndef ICM_VERSION
#define ICM_VERSION "unknown"
#endif

namespace {

using nlohmann::json;

constexpr const char* kBuildId = "icm " ICM_VERSION;

enum class Exit { ok = 0, failure = 1, usage = 2, identification = 3 };

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) rows.push_back(to_json(Eigen::VectorXd(M.row(i))));
  return rows;
}

/// Double that serializes as null when not finite.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// Parses "1:40", "2,8,18,32" or a mix such as "1:3,10".
std::vector<int> parse_grid(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  auto to_int = [&](const std::string& s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v < 1)
      throw icm::ConfigError("bad p_z grid entry '" + s + "' in '" + text + "'");
    return v;
  };
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      out.push_back(to_int(item));
      continue;
    }
    const int lo = to_int(item.substr(0, colon)), hi = to_int(item.substr(colon + 1));
    if (hi < lo) throw icm::ConfigError("empty p_z range '" + item + "'");
    for (int p = lo; p <= hi; ++p) out.push_back(p);
  }
  if (out.empty()) throw icm::ConfigError("p_z grid is empty");
  return out;
}

std::vector<icm::KernelId> parse_kernel_list(const std::vector<std::string>& names) {
  std::vector<icm::KernelId> out;
  for (const auto& n : names) out.push_back(icm::parse_kernel_id(n));
  if (out.empty()) throw icm::ConfigError("kernel list is empty");
  return out;
}

struct DataFlags {
  std::string path, y;
  std::vector<std::string> x, z, endog;
  bool atan_z = false;

  void add_to(CLI::App* app) {
    app->add_option("--data", path, "CSV file with a header row")->required();
    app->add_option("--y", y, "outcome column")->required();
    app->add_option("--x", x, "covariate columns (intercept is added)")->delimiter(',');
    app->add_option("--z", z, "instrument columns")->delimiter(',')->required();
    app->add_option("--endog", endog, "endogenous covariates")->delimiter(',');
    app->add_flag("--atan-z", atan_z, "map instruments through arctan before use");
  }

  icm::Dataset load() const {
    auto ds = icm::load_csv(path, y, x, z, endog);
    return atan_z ? icm::standardize_instruments(ds, icm::InstrumentTransform::atan) : ds;
  }
};

struct Payload {
  std::string text;
  std::string extension;
};

struct Options {
  DataFlags data;
  std::string kernel = "mmd";
  double bandwidth = 1.0;
  int boot = 499;
  std::uint64_t seed = 0;
  std::string weights = "mammen";
  std::string dgp;
  int n = 250;
  int pz = 0;
  double delta = 1.0;
  double rho = 0.5;
  int reps = 1000;
  std::string estimators = "mmd,iiv,dl,esc6,wmd";
  double level = 0.05;
  std::vector<std::string> kernels{"mmd", "iiv", "dl", "esc6"};
  std::string grid;
  std::int64_t draws = 100000;
};

icm::KernelSpec kernel_spec(const Options& o) {
  return icm::KernelSpec{icm::parse_kernel_id(o.kernel), o.bandwidth};
}

Payload run_estimate(const Options& o) {
  const auto ds = o.data.load();
  const auto K = icm::kernel_matrix(ds, kernel_spec(o));
  const auto res = icm::estimate(ds, K);
  json out;
  out["kernel"] = res.estimator;
  out["x_names"] = ds.x_names();
  out["theta"] = to_json(res.theta);
  out["se"] = to_json(res.se);
  out["vcov"] = to_json(res.vcov);
  out["cond_A"] = res.cond_A;
  out["n"] = ds.n();
  out["p_x"] = ds.p_x();
  out["p_z"] = ds.p_z();
  if (ds.p_x() > 1) {
    const auto d = icm::identification_diagnostics(ds, K);
    out["diagnostics"] = {{"min_eig", d.min_eig},
                          {"gmdc_strength", finite_or_null(d.gmdc_strength)},
                          {"rank_h", d.rank_h},
                          {"rank_z", d.rank_z}};
  } else {
    out["diagnostics"] = nullptr;
  }
  return {out.dump(2) + "\n", "json"};
}

json boot_json(const icm::BootTestResult& r, const std::string& kernel, Eigen::Index n) {
  return {{"stat", r.stat},       {"pvalue", r.pvalue},
          {"B", r.B},             {"failed_draws", r.failed_draws},
          {"seed", r.seed},       {"weights", icm::to_string(r.weights)},
          {"kernel", kernel},     {"n", n},
          {"interpretation", r.interpretation}};
}

Payload run_spectest(const Options& o) {
  const auto ds = o.data.load();
  const auto spec = kernel_spec(o);
  const auto r = icm::spec_test(ds, spec, o.boot, o.seed, icm::parse_weight_scheme(o.weights));
  return {boot_json(r, icm::to_string(spec.id), ds.n()).dump(2) + "\n", "json"};
}

Payload run_relevance(const Options& o) {
  if (o.data.endog.size() != 1)
    throw icm::InfeasibleError(
        "relevance needs exactly one --endog column; the linear-completeness test does not cover "
        "multiple endogenous covariates");
  const auto ds = o.data.load();
  const auto& names = ds.x_names();
  const auto it = std::find(names.begin(), names.end(), o.data.endog.front());
  const auto endog = static_cast<Eigen::Index>(it - names.begin());
  const auto spec = kernel_spec(o);
  const auto r =
      icm::lc_test(ds, endog, spec, o.boot, o.seed, icm::parse_weight_scheme(o.weights));
  auto out = boot_json(r, icm::to_string(spec.id), ds.n());
  out["endog"] = o.data.endog.front();
  return {out.dump(2) + "\n", "json"};
}

Payload run_mc(const Options& o) {
  icm::DgpConfig cfg;
  cfg.id = icm::parse_dgp_id(o.dgp);
  cfg.n = o.n;
  cfg.p_z = o.pz > 0 ? o.pz : icm::default_p_z(cfg.id);
  cfg.delta = o.delta;
  cfg.rho = o.rho;
  cfg.seed = o.seed;
  const auto s = icm::run_mc(cfg, o.reps, icm::parse_estimator_list(o.estimators), 1, o.level);
  std::ostringstream csv;
  csv << "dgp,n,p_z,delta,rho,estimator,metric,value,reps,failures,valid\n";
  for (const auto& row : s.rows) {
    const std::pair<const char*, double> metrics[] = {
        {"MB", row.mb}, {"MAD", row.mad}, {"RMSE", row.rmse}, {"Rej", row.rej}};
    for (const auto& [name, value] : metrics)
      csv << icm::to_string(cfg.id) << ',' << cfg.n << ',' << cfg.p_z << ',' << num(cfg.delta)
          << ',' << num(cfg.rho) << ',' << icm::to_string(row.estimator) << ',' << name << ','
          << num(value) << ',' << row.reps << ',' << row.failures << ','
          << (row.valid ? "true" : "false") << '\n';
  }
  return {csv.str(), "csv"};
}

Payload run_kernel_diag(const Options& o) {
  const auto grid = parse_grid(o.grid.empty() ? "1:40" : o.grid);
  std::ostringstream csv;
  csv << "kernel,p_z,sd_estimate,mc_stderr,draws,seed\n";
  for (auto id : parse_kernel_list(o.kernels))
    for (int p : grid) {
      const auto e = icm::kernel_sd_mc(icm::KernelSpec{id, o.bandwidth}, p, o.draws, o.seed);
      csv << icm::to_string(id) << ',' << p << ',' << num(e.sd) << ',' << num(e.stderr_sd) << ','
          << e.draws << ',' << e.seed << '\n';
    }
  return {csv.str(), "csv"};
}

Payload run_gmdc_diag(const Options& o) {
  const auto grid = parse_grid(o.grid.empty() ? "2,8,18,32" : o.grid);
  std::ostringstream csv;
  csv << "kernel,p_z,n,gmdc,seed\n";
  for (auto id : parse_kernel_list(o.kernels))
    for (int p : grid) {
      const double g = icm::gmdc_design(icm::KernelSpec{id, o.bandwidth}, p, o.n, o.seed, o.reps);
      csv << icm::to_string(id) << ',' << p << ',' << o.n << ',' << num(g) << ',' << o.seed
          << '\n';
    }
  return {csv.str(), "csv"};
}

/// Flags that only steer where output goes; they are left out of the config echo.
bool is_plumbing(const std::string& name) {
  return name == "--out" || name == "--manifest" || name == "--stdout" || name == "--threads" ||
         name == "--help";
}

/// Echo of every option of `sub`, keyed by flag name, as typed or defaulted.
json config_echo(const CLI::App* sub) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_name();
    if (is_plumbing(name) || name.rfind("--", 0) != 0) continue;
    if (opt->get_expected_max() == 0) {
      cfg[name] = opt->count() > 0;
      continue;
    }
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
      if (value.size() >= 2 && (value.front() == '[' || value.front() == '{'))
        value = value.substr(1, value.size() - 2);
      if (value.empty()) continue;
    }
    cfg[name] = value;
  }
  return cfg;
}

std::vector<std::string> args_from_config(const std::string& subcommand, const json& cfg) {
  std::vector<std::string> args{subcommand};
  for (const auto& [key, value] : cfg.items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(key);
    } else {
      args.push_back(key);
      args.push_back(value.get<std::string>());
    }
  }
  return args;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw icm::ArgumentError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw icm::ArgumentError("failed writing '" + path + "'");
}

Exit run(std::vector<std::string> args);

Exit replay(const std::string& manifest_path, const std::string& out, bool to_stdout,
            const std::string& new_manifest) {
  std::ifstream in(manifest_path);
  if (!in) throw icm::ArgumentError("cannot read manifest '" + manifest_path + "'");
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw icm::ParseError("manifest '" + manifest_path + "' is not valid JSON: " + e.what());
  }
  if (!m.contains("subcommand") || !m.contains("config"))
    throw icm::ConfigError("manifest '" + manifest_path + "' lacks subcommand or config");
  auto args = args_from_config(m["subcommand"].get<std::string>(), m["config"]);
  if (to_stdout) args.push_back("--stdout");
  if (!out.empty()) args.insert(args.end(), {"--out", out});
  if (!new_manifest.empty()) args.insert(args.end(), {"--manifest", new_manifest});
  return run(std::move(args));
}

Exit run(std::vector<std::string> args) {
  CLI::App app{"Linear ICM instrumental-variable estimation, tests and simulations", "icm"};
  app.set_version_flag("--version", std::string(kBuildId));
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Options o;
  std::string out_path, manifest_path, replay_path;
  bool to_stdout = false;
  int threads = 0;

  struct Entry {
    CLI::App* app;
    Payload (*fn)(const Options&);
  };
  std::vector<Entry> entries;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", out_path, "payload file (default icm_<subcommand>.<ext>)");
    sub->add_option("--manifest", manifest_path, "manifest file (default <out>.manifest.json)");
    sub->add_flag("--stdout", to_stdout, "write the payload to stdout");
    sub->add_option("--threads", threads, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
  };
  auto kernel_flag = [&](CLI::App* sub) {
    sub->add_option("--kernel", o.kernel, "mmd|iiv|dl|esc6|wmd");
    sub->add_option("--bandwidth", o.bandwidth, "WMD base density bandwidth");
  };
  auto boot_flags = [&](CLI::App* sub) {
    sub->add_option("--boot", o.boot, "bootstrap draws B");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--weights", o.weights, "mammen|rademacher");
  };

  auto* est = app.add_subcommand("estimate", "ICM estimate with robust standard errors");
  o.data.add_to(est);
  kernel_flag(est);
  entries.push_back({est, run_estimate});

  auto* spec = app.add_subcommand("spectest", "wild-bootstrap specification test of E[U|Z] = 0");
  o.data.add_to(spec);
  kernel_flag(spec);
  boot_flags(spec);
  entries.push_back({spec, run_spectest});

  auto* rel = app.add_subcommand("relevance", "linear-completeness relevance test");
  o.data.add_to(rel);
  kernel_flag(rel);
  boot_flags(rel);
  entries.push_back({rel, run_relevance});

  auto* mc = app.add_subcommand("mc", "Monte Carlo over a simulation design");
  mc->add_option("--dgp", o.dgp, "0A|0B|1A|1B|4")->required();
  mc->add_option("--n", o.n, "sample size");
  mc->add_option("--pz", o.pz, "instrument count (0 for the design default)");
  mc->add_option("--delta", o.delta, "identification strength");
  mc->add_option("--rho", o.rho, "endogeneity correlation");
  mc->add_option("--reps", o.reps, "replications");
  mc->add_option("--estimators", o.estimators, "comma list of mmd,iiv,dl,esc6,wmd,tsls");
  mc->add_option("--seed", o.seed, "master seed");
  mc->add_option("--level", o.level, "t-test level");
  entries.push_back({mc, run_mc});

  auto* kd = app.add_subcommand("kernel-diag", "Monte Carlo standard deviation of kernels");
  kd->add_option("--kernel", o.kernels, "comma list of kernels")->delimiter(',');
  kd->add_option("--pz", o.grid, "p_z grid such as 1:40 or 2,8,18 (default 1:40)");
  kd->add_option("--draws", o.draws, "pairs per grid point");
  kd->add_option("--seed", o.seed, "master seed");
  kd->add_option("--bandwidth", o.bandwidth, "WMD base density bandwidth");
  entries.push_back({kd, run_kernel_diag});

  auto* gd = app.add_subcommand("gmdc-diag", "GMDC by kernel in the mean-dependence design");
  gd->add_option("--kernel", o.kernels, "comma list of kernels")->delimiter(',');
  gd->add_option("--pz", o.grid, "p_z grid (default 2,8,18,32)");
  gd->add_option("--n", o.n, "sample size");
  gd->add_option("--reps", o.reps, "samples averaged per grid point")->default_val(1);
  gd->add_option("--seed", o.seed, "master seed");
  gd->add_option("--bandwidth", o.bandwidth, "WMD base density bandwidth");
  entries.push_back({gd, run_gmdc_diag});

  auto* rp = app.add_subcommand("replay", "re-run the configuration stored in a manifest");
  rp->add_option("path", replay_path, "manifest written by an earlier run")->required();

  for (auto& e : entries) common(e.app);
  rp->add_option("--out", out_path, "payload file");
  rp->add_option("--manifest", manifest_path, "manifest for the replayed run");
  rp->add_flag("--stdout", to_stdout, "write the payload to stdout");
  rp->add_option("--threads", threads, "worker threads, 0 for all cores");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return static_cast<Exit>(app.exit(e));
  } catch (const CLI::CallForAllHelp& e) {
    return static_cast<Exit>(app.exit(e));
  } catch (const CLI::CallForVersion& e) {
    return static_cast<Exit>(app.exit(e));
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return Exit::usage;
  }

  icm::set_num_threads(static_cast<unsigned>(threads));
  if (rp->parsed()) return replay(replay_path, out_path, to_stdout, manifest_path);

  const auto entry = std::find_if(entries.begin(), entries.end(),
                                  [](const Entry& e) { return e.app->parsed(); });
  CLI::App* sub = entry->app;
  const auto start = std::chrono::steady_clock::now();
  const Payload payload = entry->fn(o);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::string payload_path;
  if (to_stdout) {
    std::cout << payload.text << std::flush;
  } else {
    payload_path = out_path.empty() ? "icm_" + sub->get_name() + "." + payload.extension : out_path;
    write_file(payload_path, payload.text);
  }
  if (manifest_path.empty() && !to_stdout) manifest_path = payload_path + ".manifest.json";
  if (!manifest_path.empty()) {
    json m;
    m["version"] = kBuildId;
    m["subcommand"] = sub->get_name();
    m["config"] = config_echo(sub);
    m["seed"] = o.seed;
    m["threads"] = icm::num_threads();
    m["wall_time_seconds"] = wall;
    m["outputs"] = payload_path.empty() ? json::array({"<stdout>"}) : json::array({payload_path});
    write_file(manifest_path, m.dump(2) + "\n");
  }
  return Exit::ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return static_cast<int>(run(std::move(args)));
  } catch (const icm::IdentificationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(Exit::identification);
  } catch (const icm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(Exit::usage);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return static_cast<int>(Exit::failure);
  }
}
