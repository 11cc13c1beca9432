// Command-line driver for the experiment suite.
//
//   branchlab hd --seed 3 --out runs/hd
//   branchlab width --config configs/alpha_0.01.conf --jobs 4
//
// Exit status is 0 only when every check in the run passes.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "branchlab/errors.hpp"
#include "branchlab/experiments.hpp"

using namespace branchlab;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<long long> n, d, m;
  std::vector<long long> widths;
  std::optional<double> alpha, toy_alpha, dlambda;
  std::optional<std::string> fd_scheme, out;
  std::optional<int> toy_grid, jobs;
  std::vector<double> a_sym;
};

void add_flags(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config, "key = value file applied before the flags")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "data seed");
  app.add_option("--n", o.n, "sample count");
  app.add_option("--d", o.d, "input dimension");
  app.add_option("--m", o.m, "hidden width");
  app.add_option("--widths", o.widths, "width list for the width sweep")->delimiter(',');
  app.add_option("--alpha", o.alpha, "Tikhonov weight");
  app.add_option("--toy-alpha", o.toy_alpha, "Tikhonov weight of the symmetric toy");
  app.add_option("--dlambda", o.dlambda, "continuation step");
  app.add_option("--fd-scheme", o.fd_scheme, "finite-difference Hessian scheme")
      ->check(CLI::IsMember({"forward", "central"}));
  app.add_option("--toy-grid", o.toy_grid, "sublevel grid points per axis");
  app.add_option("--a-sym", o.a_sym, "output weight of the second toy unit")->delimiter(',');
  app.add_option("--jobs", o.jobs, "sweep workers (0 = all cores)");
  app.add_option("--out", o.out, "output directory");
}

ExperimentConfig resolve(ExperimentId id, const Overrides& o) {
  ExperimentConfig cfg;
  cfg.out = std::filesystem::path("runs") / std::string(to_string(id));
  if (!o.config.empty()) apply_config_file(cfg, o.config);
  cfg.experiment = id;
  if (o.seed) cfg.seed = *o.seed;
  if (o.n) cfg.n = *o.n;
  if (o.d) cfg.d = *o.d;
  if (o.m) cfg.m = *o.m;
  if (!o.widths.empty()) cfg.widths.assign(o.widths.begin(), o.widths.end());
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.toy_alpha) cfg.toy_alpha = *o.toy_alpha;
  if (o.dlambda) cfg.dlambda = *o.dlambda;
  if (o.fd_scheme) cfg.fd_scheme = parse_fd_scheme(*o.fd_scheme);
  if (o.toy_grid) cfg.toy_grid = *o.toy_grid;
  if (!o.a_sym.empty()) cfg.a_sym = o.a_sym;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.out) cfg.out = *o.out;
  return cfg;
}

void print_checks(const ExperimentReport& rep) {
  for (const Check& c : rep.checks) {
    std::printf("%-5s %-16s %-36s %-14.6g %s\n", c.passed ? "PASS" : "FAIL",
                std::string(to_string(rep.config.experiment)).c_str(), c.name.c_str(), c.value, c.criterion.c_str());
  }
  for (const StageError& e : rep.errors) {
    std::printf("ERROR %-16s %s: %s\n", std::string(to_string(rep.config.experiment)).c_str(), e.stage.c_str(),
                e.message.c_str());
  }
  for (const ExperimentReport& p : rep.parts) print_checks(p);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bifurcation analysis of the activation homotopy"};
  app.require_subcommand(1);
  Overrides o;
  add_flags(app, o);
  std::vector<std::pair<CLI::App*, ExperimentId>> subs;
  for (ExperimentId id : {ExperimentId::Toy, ExperimentId::Hd, ExperimentId::Transversality, ExperimentId::Phase,
                          ExperimentId::Width, ExperimentId::Constants, ExperimentId::All}) {
    CLI::App* sub = app.add_subcommand(std::string(to_string(id)));
    sub->fallthrough();
    subs.emplace_back(sub, id);
  }
  app.get_subcommand("toy")->description("symmetric two-unit model: S2 obstruction and sublevel topology");
  app.get_subcommand("hd")->description("broken-symmetry model: branch, crossing, reduced coefficients");
  app.get_subcommand("transversality")->description("c2(mu) slope and gradient-norm audit");
  app.get_subcommand("phase")->description("toy sweep over v = (1, a_sym)");
  app.get_subcommand("width")->description("lambda* and K across widths");
  app.get_subcommand("constants")->description("analytic versus numerical constants");
  app.get_subcommand("all")->description("every experiment, one subdirectory each");
  CLI11_PARSE(app, argc, argv);

  ExperimentId id = ExperimentId::All;
  for (const auto& [sub, sid] : subs) {
    if (sub->parsed()) id = sid;
  }
  try {
    const ExperimentConfig cfg = resolve(id, o);
    const ExperimentReport rep = run(cfg);
    print_checks(rep);
    std::printf("report: %s\n", (rep.dir / "report.json").string().c_str());
    return rep.passed() ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "branchlab: %s\n", e.what());
    return 2;
  }
}
