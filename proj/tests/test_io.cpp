#include "sloc/io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace sloc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("sloc_io_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Vec random_vec(std::mt19937& rng, int size) {
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  Vec v(size);
  for (int i = 0; i < size; ++i) v[i] = d(rng) * std::pow(10.0, d(rng));
  return v;
}

bool same(const Vec& a, const Vec& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

}  // namespace

TEST_CASE("config lines set keys and ignore comments") {
  RunConfig cfg;
  std::istringstream in("# run setup\n b = 0.75\nn=51   # coarse\n\nlumped = yes\noutput_dir = runs/a\n");
  apply_config(cfg, in);
  CHECK(cfg.model.b == 0.75);
  CHECK(cfg.n == 51);
  CHECK(cfg.lumped);
  CHECK(cfg.output_dir == "runs/a");
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config errors name the problem") {
  RunConfig cfg;
  std::istringstream unknown("bee = 1\n");
  CHECK_THROWS_AS(apply_config(cfg, unknown), ConfigError);
  std::istringstream no_eq("b 0.7\n");
  CHECK_THROWS_AS(apply_config(cfg, no_eq), ConfigError);
  CHECK_THROWS_AS(cfg.set("b", "fast"), ConfigError);
  CHECK_THROWS_AS(cfg.set("n", "3.5"), ConfigError);

  RunConfig bad;
  bad.model.r = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.n = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.delta = -1e-6;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/sloc.cfg"), ConfigError);
}

TEST_CASE("output directory precedence") {
  RunConfig cfg;
  cfg.output_dir = "from_config";
  unsetenv(kOutputDirEnv);
  CHECK(resolve_output_dir(cfg) == fs::path("from_config"));
  setenv(kOutputDirEnv, "from_env", 1);
  CHECK(resolve_output_dir(cfg) == fs::path("from_env"));
  CHECK(resolve_output_dir(cfg, "explicit") == fs::path("explicit"));
  unsetenv(kOutputDirEnv);
}

TEST_CASE("header echoes the configuration") {
  RunConfig cfg;
  cfg.model.b = 0.7123456789012345;
  std::stringstream ss;
  write_header(ss, "test", cfg, {{"extra", "1"}});
  ss << "body\n";
  const Header h = read_header(ss);
  CHECK(h.at("format_version") == std::to_string(kFormatVersion));
  CHECK(h.at("kind") == "test");
  CHECK(std::stod(h.at("b")) == cfg.model.b);
  CHECK(h.at("extra") == "1");
  std::string rest;
  std::getline(ss, rest);
  CHECK(rest == "body");
}

TEST_CASE("branch files read back bit-exactly") {
  TempDir dir("branch");
  std::mt19937 rng(7);
  const int n = 5;
  Branch br;
  br.name = "p2";
  for (int i = 0; i < 4; ++i) {
    BranchPoint p;
    p.css.u = random_vec(rng, 2 * n);
    p.css.b = 0.6 + 0.01 * i + 1e-13 * i;
    p.css.kind = i == 0 ? CssKind::flat : CssKind::patterned;
    p.css.avgP = random_vec(rng, 1)[0];
    p.css.avgK = random_vec(rng, 1)[0];
    p.css.normP = random_vec(rng, 1)[0];
    p.css.J = random_vec(rng, 1)[0];
    if (i != 2) p.css.defect = -i;
    p.css.spectrum = {{0.1 * i, -1.0 / 3.0}, {std::sqrt(2.0), 0.0}};
    p.tangent = random_vec(rng, 2 * n + 1);
    p.flag = i == 1 ? PointFlag::fold : i == 3 ? PointFlag::bif : PointFlag::regular;
    br.points.push_back(p);
  }
  write_branch(dir.path, br, RunConfig{});
  const Branch back = read_branch(dir.path / "p2.csv");
  REQUIRE(back.points.size() == br.points.size());
  CHECK(back.name == "p2");
  for (std::size_t i = 0; i < br.points.size(); ++i) {
    const auto& a = br.points[i];
    const auto& b = back.points[i];
    CHECK(same(a.css.u, b.css.u));
    CHECK(same(a.tangent, b.tangent));
    CHECK(a.css.b == b.css.b);
    CHECK(a.css.avgP == b.css.avgP);
    CHECK(a.css.avgK == b.css.avgK);
    CHECK(a.css.normP == b.css.normP);
    CHECK(a.css.J == b.css.J);
    CHECK(a.css.defect == b.css.defect);
    CHECK(a.css.kind == b.css.kind);
    CHECK(a.flag == b.flag);
    CHECK(a.css.spectrum == b.css.spectrum);
  }
}

TEST_CASE("path and state files read back bit-exactly") {
  TempDir dir("path");
  std::mt19937 rng(11);
  PathSolution p;
  for (int j = 0; j < 6; ++j) {
    p.times.push_back(j == 0 ? 0.0 : p.times.back() + 0.1 * (j + 1) / 3.0);
    p.states.push_back(random_vec(rng, 8));
  }
  p.alpha = 0.123456789012345678;
  p.J = -78.24123456789;
  p.terminal_gap = 1.5e-9;
  p.residual_norm = 3e-12;
  p.newton_iterations = 7;
  p.target_id = "FSC";
  write_path(dir.path, "demo", p, RunConfig{});
  CHECK(fs::exists(dir.path / "demo.meta"));
  const PathSolution q = read_path(dir.path / "demo.csv");
  REQUIRE(q.states.size() == p.states.size());
  CHECK(q.times == p.times);
  for (std::size_t j = 0; j < p.states.size(); ++j) CHECK(same(p.states[j], q.states[j]));
  CHECK(q.alpha == p.alpha);
  CHECK(q.J == p.J);
  CHECK(q.terminal_gap == p.terminal_gap);
  CHECK(q.residual_norm == p.residual_norm);
  CHECK(q.newton_iterations == p.newton_iterations);
  CHECK(q.target_id == "FSC");

  const Vec u = random_vec(rng, 10);
  write_state(dir.path / "u.csv", u, RunConfig{});
  CHECK(same(read_state(dir.path / "u.csv"), u));
}

TEST_CASE("unsupported format versions are rejected") {
  TempDir dir("version");
  const fs::path f = dir.path / "u.csv";
  write_state(f, Vec::Ones(4), RunConfig{});
  std::ifstream in(f);
  std::stringstream body;
  body << in.rdbuf();
  in.close();
  std::string text = body.str();
  text.replace(text.find("format_version=1"), 16, "format_version=9");
  std::ofstream(f) << text;
  CHECK_THROWS(read_state(f));
  CHECK_THROWS(read_state(dir.path / "missing.csv"));
}
