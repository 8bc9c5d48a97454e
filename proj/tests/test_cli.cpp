#include "icm/dataset.hpp"
#include "icm/estimator.hpp"

#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("icm_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run icm_cli(const std::string& args) {
  const std::string cmd =
      "cd '" + work_dir().string() + "' && '" ICM_CLI_PATH "' " + args + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// y = 1 + d + u with d = z + z^2 + v, plus noise column w independent of everything.
void write_data(const std::string& name, bool collinear = false, std::uint64_t seed = 77) {
  icm::Engine gen(seed);
  const auto ds = icm::testing::random_iv_dataset(120, 1, gen);
  const auto w = icm::testing::gaussian(120, 1, gen);
  std::ofstream out(work_dir() / name);
  out.precision(17);
  out << "y,d,z,w,d2\n";
  for (Eigen::Index i = 0; i < 120; ++i)
    out << ds.y()(i) << ',' << ds.X()(i, 1) << ',' << ds.Z()(i, 0) << ',' << w(i, 0) << ','
        << (collinear ? 2.0 * ds.X()(i, 1) : w(i, 0) * w(i, 0)) << '\n';
}

}  // namespace

TEST_CASE("version and usage errors") {
  const auto v = icm_cli("--version");
  CHECK(v.code == 0);
  CHECK(v.out.find("icm ") == 0);
  CHECK(icm_cli("").code == 2);
  CHECK(icm_cli("frobnicate").code == 2);
  write_data("d.csv");
  CHECK(icm_cli("estimate --data d.csv --y y --x d --z z --no-such-flag").code == 2);
  CHECK(icm_cli("estimate --data d.csv --y y --x d --z z --kernel laplace --stdout").code == 2);
  CHECK(icm_cli("estimate --data missing.csv --y y --x d --z z --stdout").code == 2);
  CHECK(icm_cli("estimate --data d.csv --y y --x nope --z z --stdout").code == 2);
}

TEST_CASE("estimate JSON matches the library bit for bit") {
  write_data("d.csv");
  const auto r = icm_cli("estimate --kernel esc6 --data d.csv --y y --x d --z z --endog d --stdout");
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  const auto ds = icm::load_csv((work_dir() / "d.csv").string(), "y", {"d"}, {"z"}, {"d"});
  const auto res = icm::estimate(ds, icm::KernelSpec{icm::KernelId::esc6});
  for (int k = 0; k < 2; ++k) {
    CHECK(j["theta"][k].get<double>() == res.theta(k));
    CHECK(j["se"][k].get<double>() == res.se(k));
    for (int l = 0; l < 2; ++l) CHECK(j["vcov"][k][l].get<double>() == res.vcov(k, l));
  }
  CHECK(j["kernel"] == "esc6");
  CHECK(j["n"] == 120);
  CHECK(j["p_x"] == 2);
  CHECK(j["p_z"] == 1);
  CHECK(j["cond_A"].get<double>() == res.cond_A);
  for (const char* key : {"min_eig", "gmdc_strength", "rank_h", "rank_z"})
    CHECK(j["diagnostics"].contains(key));
}

TEST_CASE("identification failure exits with 3") {
  write_data("c.csv", true);
  CHECK(icm_cli("estimate --data c.csv --y y --x d,d2 --z z --stdout").code == 3);
}

TEST_CASE("relevance test on a mean-independent regressor") {
  write_data("n.csv", false, 78);
  const auto r = icm_cli("relevance --data n.csv --y y --x w --z z --endog w --boot 199 --seed 4 --stdout");
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["pvalue"].get<double>() > 0.05);
  CHECK(j["interpretation"].get<std::string>().find("no evidence of ICM identification") !=
        std::string::npos);
  CHECK(j["B"] == 199);
  CHECK(j["failed_draws"] == 0);
  CHECK(icm_cli("relevance --data d.csv --y y --x d,w --z z --endog d,w --stdout").code == 2);
}

TEST_CASE("payloads and manifests") {
  write_data("d.csv");
  REQUIRE(icm_cli("spectest --data d.csv --y y --x d --z z --boot 99 --seed 9 --out s.json").code == 0);
  const auto manifest = json::parse(slurp(work_dir() / "s.json.manifest.json"));
  CHECK(manifest["subcommand"] == "spectest");
  CHECK(manifest["seed"] == 9);
  CHECK(manifest["version"].get<std::string>().find("icm ") == 0);
  CHECK(manifest.contains("wall_time_seconds"));
  CHECK(manifest["config"]["--boot"] == "99");
  CHECK(manifest["outputs"][0] == "s.json");

  REQUIRE(icm_cli("replay s.json.manifest.json --out s2.json").code == 0);
  CHECK(slurp(work_dir() / "s.json") == slurp(work_dir() / "s2.json"));
}

TEST_CASE("mc output is thread-count invariant and reproducible from its manifest") {
  const std::string args = "mc --dgp 1A --n 60 --reps 12 --estimators mmd,wmd,tsls --seed 5 ";
  REQUIRE(icm_cli(args + "--threads 1 --out a.csv").code == 0);
  REQUIRE(icm_cli(args + "--threads 3 --out b.csv").code == 0);
  const auto a = slurp(work_dir() / "a.csv");
  CHECK(a == slurp(work_dir() / "b.csv"));
  REQUIRE(icm_cli("replay a.csv.manifest.json --out c.csv").code == 0);
  CHECK(a == slurp(work_dir() / "c.csv"));

  std::istringstream lines(a);
  std::string header, line;
  std::getline(lines, header);
  CHECK(header == "dgp,n,p_z,delta,rho,estimator,metric,value,reps,failures,valid");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 12);
  CHECK(icm_cli("mc --dgp 0B --reps 3 --estimators tsls --stdout").code == 2);
  CHECK(icm_cli("mc --dgp 1A --pz 3 --reps 3 --stdout").code == 2);
}

TEST_CASE("diagnostic CSVs") {
  const auto k = icm_cli("kernel-diag --kernel mmd,dl --pz 1:3 --draws 2000 --seed 2 --stdout");
  REQUIRE(k.code == 0);
  CHECK(k.out.rfind("kernel,p_z,sd_estimate,mc_stderr,draws,seed\n", 0) == 0);
  CHECK(std::count(k.out.begin(), k.out.end(), '\n') == 7);
  const auto g = icm_cli("gmdc-diag --kernel mmd --pz 2,4 --n 80 --stdout");
  REQUIRE(g.code == 0);
  CHECK(g.out.rfind("kernel,p_z,n,gmdc,seed\n", 0) == 0);
  CHECK(icm_cli("kernel-diag --pz 0 --stdout").code == 2);
}
