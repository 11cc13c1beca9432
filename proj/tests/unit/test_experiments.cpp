#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "branchlab/errors.hpp"
#include "branchlab/experiments.hpp"
#include "branchlab/linear_endpoint.hpp"
#include "doctest.h"

using namespace branchlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("branchlab_exp_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small(ExperimentId id, const std::string& dir) {
  ExperimentConfig c;
  c.experiment = id;
  c.n = 200;
  c.toy_grid = 41;
  c.dlambda = 1.0 / 40.0;
  c.jobs = 1;
  c.out = scratch(dir);
  return c;
}

const Check* find_check(const ExperimentReport& r, const std::string& name) {
  for (const Check& c : r.checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("defaults") {
  const ExperimentConfig c;
  CHECK(c.toy_n() == 2000);
  CHECK(c.hd_n() == 500);
  CHECK(c.d == 5);
  CHECK(c.m == 10);
  CHECK(c.alpha == 0.004);
  CHECK(c.dlambda == 1.0 / 400.0);
  CHECK(c.widths == std::vector<Eigen::Index>{3, 5, 8, 10, 15, 20, 30, 50, 75, 100});
  CHECK(c.a_sym == std::vector<double>{0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0});
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("experiment names round-trip") {
  for (ExperimentId id : {ExperimentId::Toy, ExperimentId::Hd, ExperimentId::Transversality, ExperimentId::Phase,
                          ExperimentId::Width, ExperimentId::Constants, ExperimentId::All}) {
    CHECK(parse_experiment(to_string(id)) == id);
  }
  CHECK_THROWS_AS(parse_experiment("fig3"), Error);
}

TEST_CASE("key = value config") {
  ExperimentConfig c;
  apply_config_text(c, "# preset\n"
                       "experiment = width\n"
                       "alpha = 0.01   # stronger regularization\n"
                       "dlambda = 1/400\n"
                       "widths = 3, 5,8\n"
                       "\n"
                       "seed=7\n"
                       "fd_scheme = forward\n"
                       "a_sym = 0 0.5 1\n");
  CHECK(c.experiment == ExperimentId::Width);
  CHECK(c.alpha == 0.01);
  CHECK(c.dlambda == 1.0 / 400.0);
  CHECK(c.widths == std::vector<Eigen::Index>{3, 5, 8});
  CHECK(c.seed == 7);
  CHECK(c.fd_scheme == FdScheme::Forward);
  CHECK(c.a_sym == std::vector<double>{0.0, 0.5, 1.0});
  CHECK_FALSE(c.n.has_value());

  CHECK_THROWS_AS(apply_config_text(c, "colour = blue\n"), Error);
  CHECK_THROWS_AS(apply_config_text(c, "alpha = 0.0o4\n"), Error);
  CHECK_THROWS_AS(apply_config_text(c, "alpha\n"), Error);
  CHECK_THROWS_AS(apply_config_text(c, "seed = -1\n"), Error);
}

TEST_CASE("shipped presets parse") {
  for (const char* name : {"default.conf", "alpha_0.01.conf"}) {
    ExperimentConfig c;
    apply_config_file(c, fs::path(BRANCHLAB_SOURCE_DIR) / "configs" / name);
    CHECK_NOTHROW(c.validate());
  }
  ExperimentConfig missing;
  CHECK_THROWS_AS(apply_config_file(missing, "/nonexistent/x.conf"), Error);
}

TEST_CASE("validation") {
  ExperimentConfig c;
  c.widths = {5, 3};
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.dlambda = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.a_sym = {1.5};
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.alpha = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("width_fit: exact line") {
  std::vector<double> m{3, 5, 8, 10, 15};
  std::vector<std::optional<double>> star;
  std::vector<double> rate;
  for (double w : m) {
    star.emplace_back(0.05 * w);
    rate.push_back(-0.07 / w + 0.2 / (w * w));
  }
  const WidthFit f = width_fit(m, star, rate);
  REQUIRE(f.lambda_star);
  CHECK(f.lambda_star->slope == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(std::abs(f.lambda_star->intercept) <= 1e-12);
  CHECK(f.lambda_star->r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.lambda_star->points == 5);
  CHECK(f.K == doctest::Approx(-0.07).epsilon(1e-10));
  CHECK(f.K2 == doctest::Approx(0.2).epsilon(1e-10));
}

TEST_CASE("width_fit: too few crossings skips the lambda* fit only") {
  const std::vector<double> m{3, 5, 8, 10, 15};
  const std::vector<std::optional<double>> star{0.2, 0.3, 0.5, std::nullopt, std::nullopt};
  const std::vector<double> rate{-0.02, -0.012, -0.008, -0.006, -0.004};
  const WidthFit f = width_fit(m, star, rate);
  CHECK_FALSE(f.lambda_star.has_value());
  CHECK(f.K < 0.0);
  CHECK_THROWS_AS(width_fit({3.0}, {0.1}, {-0.01}), Error);
  CHECK_THROWS_AS(width_fit({3.0, 5.0}, {0.1}, {-0.01, -0.02}), Error);
}

TEST_CASE("tracked softening rate agrees with the closed form") {
  const Dataset d = gen_hd(2, 300, 3);
  const VectorXd v = graded_output_weights(4);
  ObjectiveConfig obj;
  obj.alpha = 0.004;
  const double exact = softening_rate(v, solve_w0(v, d.sigma, d.gamma, obj.alpha).W, d).rate;
  const double tracked = tracked_softening_rate(d, v, obj);
  CHECK(exact < 0.0);
  CHECK(std::abs(tracked - exact) <= 0.02 * std::abs(exact));
  CHECK_THROWS_AS(tracked_softening_rate(d, v, obj, 0.0), Error);
}

TEST_CASE("toy run: artifacts, manifest and byte-identical reruns") {
  ExperimentConfig c = small(ExperimentId::Toy, "toy_a");
  const ExperimentReport a = run(c);
  CHECK(a.errors.empty());
  CHECK(fs::exists(c.out / "report.json"));
  for (const ManifestEntry& f : a.files) {
    CHECK(fs::exists(c.out / f.file));
    CHECK(fs::file_size(c.out / f.file) == f.bytes);
    CHECK(f.fnv1a.size() == 16);
  }
  CHECK(a.files.size() >= 6);
  // every headline scalar named by some manifest entry exists in the results
  for (const ManifestEntry& f : a.files) {
    for (const std::string& key : f.fields) CHECK_MESSAGE(a.results.contains(key), key);
  }
  const Check* t0 = find_check(a, "transverse_zero_at_0");
  REQUIRE(t0);
  CHECK(t0->passed);
  CHECK(a.results["lambda_star"] == 0.0);
  CHECK(a.results["kernel_dim_at_0"] == 1);

  const fs::path first = c.out;
  c.out = scratch("toy_b");
  run(c);
  CHECK(slurp(first / "report.json") == slurp(c.out / "report.json"));
  CHECK(slurp(first / "toy_diagonal.csv") == slurp(c.out / "toy_diagonal.csv"));

  const auto j = nlohmann::ordered_json::parse(slurp(first / "report.json"));
  CHECK(j["schema_version"] == kReportSchemaVersion);
  CHECK(j["experiment"] == "toy");
  CHECK_FALSE(j["config"].contains("out"));
  CHECK(j["checks"].is_array());
}

TEST_CASE("phase run: exact symmetry is a boundary degeneracy; parallel and serial agree") {
  ExperimentConfig c = small(ExperimentId::Phase, "phase_serial");
  c.a_sym = {0.5, 1.0};
  const ExperimentReport a = run(c);
  CHECK(a.errors.empty());
  const auto& b = a.results["boundary_check"];
  CHECK(b["kind"] == "boundary");
  CHECK(b["lambda_star"] == 0.0);
  CHECK(b["alpha"] == 0.0);
  CHECK(a.results["sweep"][0]["lambda1_at_0"].get<double>() > 0.0);
  const fs::path first = c.out;
  c.jobs = 3;
  c.out = scratch("phase_parallel");
  run(c);
  CHECK(slurp(first / "report.json") == slurp(c.out / "report.json"));
}

TEST_CASE("a failed stage is recorded and earlier artifacts survive") {
  ExperimentConfig c = small(ExperimentId::Hd, "hd_fail");
  // strong regularization: the branch never degenerates, so the reduction has nothing to work on
  c.alpha = 0.5;
  c.m = 3;
  c.d = 2;
  c.dlambda = 0.25;
  const ExperimentReport r = run(c);
  CHECK_FALSE(r.passed());
  REQUIRE_FALSE(r.errors.empty());
  bool reduction_failed = false;
  for (const StageError& e : r.errors) reduction_failed = reduction_failed || e.stage == "reduction";
  CHECK(reduction_failed);
  CHECK(fs::exists(c.out / "branch.csv"));
  const auto j = nlohmann::ordered_json::parse(slurp(c.out / "report.json"));
  CHECK(j["status"] == "failed");
  CHECK(j["results"]["crossing"]["kind"] == "none");
}

TEST_CASE("all: one subdirectory per experiment and a summary") {
  ExperimentConfig c = small(ExperimentId::All, "all");
  c.n = 120;
  c.d = 2;
  c.m = 3;
  c.widths = {3, 4};
  c.a_sym = {1.0};
  c.dlambda = 0.25;
  const ExperimentReport r = run(c);
  CHECK(r.parts.size() == 6);
  for (const char* sub : {"toy", "hd", "transversality", "constants", "phase", "width"}) {
    CHECK_MESSAGE(fs::exists(c.out / sub / "report.json"), sub);
  }
  const auto j = nlohmann::ordered_json::parse(slurp(c.out / "report.json"));
  CHECK(j["parts"].size() == 6);
  CHECK(j["status"] == (r.passed() ? "passed" : "failed"));
}
