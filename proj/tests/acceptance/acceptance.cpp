// Acceptance run: one PASS/FAIL line per criterion.
//
// The experiment-backed criteria read the same report.json fields the CLI writes, so a
// line here can be traced to a file under --out. The process exits 0 once every criterion
// has been evaluated; --strict turns any FAIL into exit status 1.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "branchlab/experiments.hpp"
#include "branchlab/linear_endpoint.hpp"
#include "branchlab/objective.hpp"

using namespace branchlab;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Line {
  int id;
  bool pass;
  std::string title;
  std::string detail;
  double seconds;
  double budget;
};

std::vector<Line> lines;

void emit(int id, bool pass, const std::string& title, const std::string& detail, double seconds, double budget) {
  const bool in_time = seconds <= budget;
  lines.push_back({id, pass && in_time, title, detail, seconds, budget});
  std::printf("%s  %2d  %-28s %s [%.1f s of %.0f s]%s\n", pass && in_time ? "PASS" : "FAIL", id, title.c_str(),
              detail.c_str(), seconds, budget, in_time ? "" : " over budget");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const Check* find(const ExperimentReport& r, const std::string& name) {
  for (const Check& c : r.checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

bool ok(const ExperimentReport& r, const std::string& name) {
  const Check* c = find(r, name);
  return c && c->passed;
}

double val(const ExperimentReport& r, const std::string& name) {
  const Check* c = find(r, name);
  return c ? c->value : std::nan("");
}

std::string errors_of(const ExperimentReport& r) {
  std::string s;
  for (const StageError& e : r.errors) s += " [" + e.stage + ": " + e.message + "]";
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 1: spectrum of (v v^T) (x) Sigma + alpha I
void kronecker(std::uint64_t seed) {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> pick_m(2, 12), pick_d(1, 16);
  double worst = 0.0;
  int kernel_ok = 0, floor_ok = 0, cases = 0;
  while (cases < 20) {
    const int m = pick_m(gen), d = pick_d(gen);
    if (m * d > 200) continue;
    ++cases;
    VectorXd v(m);
    for (int j = 0; j < m; ++j) v(j) = normal(gen);
    MatrixXd A(d + 3, d);
    for (int i = 0; i < A.size(); ++i) A.data()[i] = normal(gen);
    const MatrixXd sigma = A.transpose() * A / (d + 3.0) + 0.05 * MatrixXd::Identity(d, d);
    const double alpha = 1e-3 * (1.0 + 9.0 * std::abs(normal(gen)));

    const VectorXd analytic = kron_hessian_spectrum(v, sigma, alpha).all_eigenvalues();
    const VectorXd dense = symmetric_eigen(kron_hessian_dense(v, sigma, alpha)).values;
    worst = std::max(worst, (analytic - dense).cwiseAbs().maxCoeff() / std::max(1.0, dense.cwiseAbs().maxCoeff()));

    const VectorXd at_zero = symmetric_eigen(kron_hessian_dense(v, sigma, 0.0)).values;
    const double tol = 1e-10 * std::max(1.0, at_zero.cwiseAbs().maxCoeff());
    int kernel = 0;
    for (Eigen::Index k = 0; k < at_zero.size(); ++k) kernel += std::abs(at_zero(k)) <= tol;
    kernel_ok += kernel == (m - 1) * d && kron_hessian_spectrum(v, sigma, 0.0).kernel_dim_at_zero_alpha == (m - 1) * d;

    int at_alpha = 0;
    for (Eigen::Index k = 0; k < dense.size(); ++k) at_alpha += std::abs(dense(k) - alpha) <= tol;
    floor_ok += at_alpha == (m - 1) * d && std::abs(dense(0) - alpha) <= tol;
  }
  const bool pass = worst <= 1e-10 && kernel_ok == 20 && floor_ok == 20;
  emit(1, pass, "Kronecker endpoint",
       "max spectrum err " + fmt("%.2e", worst) + ", kernel dim (m-1)d " + std::to_string(kernel_ok) +
           "/20, floor alpha x (m-1)d " + std::to_string(floor_ok) + "/20",
       seconds_since(t0), 10);
}

// 2: gradient at random points; D^3 L, D^4 L at the hd branch point
void derivatives(const ExperimentReport& hd, double hd_seconds, std::uint64_t seed) {
  const auto t0 = Clock::now();
  const Dataset data = gen_hd(seed, 500, 5);
  const VectorXd v = graded_output_weights(10);
  ObjectiveConfig obj;
  obj.alpha = 0.004;
  std::mt19937_64 gen(seed + 17);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd W(10, 5);
    for (int i = 0; i < W.size(); ++i) W.data()[i] = 0.5 * normal(gen);
    const double lambda = unit(gen);
    const MatrixXd g = grad({W, v}, lambda, data, obj);
    MatrixXd fd(10, 5);
    for (int j = 0; j < 10; ++j) {
      for (int i = 0; i < 5; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(W(j, i)));
        MatrixXd Wp = W, Wm = W;
        Wp(j, i) += h;
        Wm(j, i) -= h;
        fd(j, i) = (loss({Wp, v}, lambda, data, obj) - loss({Wm, v}, lambda, data, obj)) / (2.0 * h);
      }
    }
    worst = std::max(worst, (g - fd).norm() / g.norm());
  }
  const auto& co = hd.results.contains("coefficients") ? hd.results["coefficients"] : json();
  const double e3 = co.is_object() ? co["g_aa_rel_err"].get<double>() : std::nan("");
  const double e4 = co.is_object() ? co["g_aaa_rel_err"].get<double>() : std::nan("");
  const bool pass = worst <= 1e-6 && e3 <= 0.05 && e4 <= 0.01;
  emit(2, pass, "Derivative oracles",
       "grad rel err " + fmt("%.2e", worst) + " (20 pts), D3 " + fmt("%.2e", e3) + ", D4 " + fmt("%.2e", e4),
       seconds_since(t0) + hd_seconds, 60 + hd_seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string out = "acceptance_run";
  std::uint64_t seed = 1;
  bool strict = false;
  int jobs = 0;
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "data seed");
  app.add_option("--jobs", jobs, "width sweep workers");
  app.add_flag("--strict", strict, "exit 1 when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  const fs::path root(out);
  fs::remove_all(root);

  auto config = [&](ExperimentId id, const fs::path& dir) {
    ExperimentConfig c;
    c.experiment = id;
    c.seed = seed;
    c.jobs = jobs;
    c.out = dir;
    return c;
  };

  kronecker(seed);

  auto t = Clock::now();
  const ExperimentReport toy = run(config(ExperimentId::Toy, root / "toy"));
  const double toy_s = seconds_since(t);
  t = Clock::now();
  const ExperimentReport hd = run(config(ExperimentId::Hd, root / "hd"));
  const double hd_s = seconds_since(t);

  derivatives(hd, hd_s, seed);

  emit(3, ok(toy, "transverse_zero_at_0") && ok(toy, "transverse_negative") && ok(toy, "antidiagonal_c3_zero"),
       "S2 obstruction",
       "transverse(0) " + fmt("%.1e", val(toy, "transverse_zero_at_0")) + ", max transverse (lambda>=0.05) " +
           fmt("%.3e", val(toy, "transverse_negative")) + ", max |c3| " + fmt("%.1e", val(toy, "antidiagonal_c3_zero")) +
           errors_of(toy),
       toy_s, 60);

  {
    const auto& c = hd.results.contains("crossing") ? hd.results["crossing"] : json();
    const std::string kind = c.is_object() ? c["kind"].get<std::string>() : "missing";
    const bool pass = ok(hd, "interior_lambda_star") && ok(hd, "simple_kernel") && ok(hd, "crossing_speed_negative") &&
                      ok(hd, "grad_norm_pre_crossing") && ok(hd, "morse_index_step");
    std::string detail = "kind " + kind + ", lambda* " + fmt("%.5f", val(hd, "interior_lambda_star")) + ", ratio " +
                         fmt("%.2e", val(hd, "simple_kernel")) + ", speed " +
                         fmt("%.4f", val(hd, "crossing_speed_negative")) + ", grad " +
                         fmt("%.1e", val(hd, "grad_norm_pre_crossing")) + ", morse step " +
                         fmt("%.0f", val(hd, "morse_index_step"));
    emit(4, pass, "Interior bifurcation", detail + errors_of(hd), hd_s, 600);
  }
  {
    const auto& s = hd.results["softening"];
    emit(5, ok(hd, "lambda_star_prediction"), "lambda* prediction",
         "predicted " + fmt("%.5f", s["predicted_lambda_star"].is_number() ? s["predicted_lambda_star"].get<double>() : std::nan("")) +
             " vs detected " + fmt("%.5f", val(hd, "interior_lambda_star")) + ", rel err " +
             fmt("%.3f", val(hd, "lambda_star_prediction")) + " (tol 0.10)",
         hd_s, 600);
  }
  emit(6, ok(hd, "near_pitchfork_ratio") && ok(hd, "g_aaa_positive") && ok(hd, "curvature_term_dominant"),
       "Near-pitchfork suppression",
       "|g_aa/g_aaa| " + fmt("%.4f", val(hd, "near_pitchfork_ratio")) + " (tol 0.05), g_aaa " +
           fmt("%.4f", val(hd, "g_aaa_positive")) + ", curvature share " +
           fmt("%.3f", val(hd, "curvature_term_dominant")) + " (need > 0.5)",
       hd_s, 60 + hd_s);

  t = Clock::now();
  const ExperimentReport width = run(config(ExperimentId::Width, root / "width"));
  const double width_s = seconds_since(t);
  {
    const auto& th = width.results.contains("threshold") ? width.results["threshold"] : json();
    std::string threshold = "unresolved";
    if (th.is_object()) {
      threshold = "observed m* " +
                  (th["observed_m_star"].is_number() ? fmt("%.0f", th["observed_m_star"].get<double>())
                                                     : std::string("beyond grid")) +
                  " vs |K|/alpha " + fmt("%.1f", th["predicted_m_star"].get<double>());
    }
    const bool a = ok(width, "lambda_star_linear_in_m"), b = ok(width, "threshold_matches_K_over_alpha"),
               c = ok(width, "K_exact_vs_tracked");
    emit(7, a && b && c, "Width scaling",
         std::string("(a) ") + (a ? "pass" : "fail") + " R^2 " + fmt("%.4f", val(width, "lambda_star_linear_in_m")) +
             "; (b) " + (b ? "pass " : "fail ") + threshold + "; (c) " + (c ? "pass" : "fail") + " K rel err " +
             fmt("%.2e", val(width, "K_exact_vs_tracked")) + errors_of(width),
         width_s, 7200);
  }

  emit(8, ok(hd, "critical_slowing_exponent") && ok(hd, "quartic_closed_form"), "Critical slowing down",
       "decay exponent " + fmt("%.4f", val(hd, "critical_slowing_exponent")) + ", closed-form rel err " +
           fmt("%.1e", val(hd, "quartic_closed_form")),
       hd_s, 10 + hd_s);

  emit(9, ok(toy, "sublevel_two_to_one_at_1") && ok(toy, "sublevel_single_at_0"), "Sublevel topology",
       "lambda=1 components 2,2,1 " + std::string(ok(toy, "sublevel_two_to_one_at_1") ? "yes" : "no") +
           ", lambda=0 single component " + (ok(toy, "sublevel_single_at_0") ? "yes" : "no"),
       toy_s, 60);

  {
    t = Clock::now();
    std::string detail;
    bool same = true;
    for (ExperimentId id : {ExperimentId::Toy, ExperimentId::Phase, ExperimentId::Hd}) {
      const std::string name(to_string(id));
      if (id == ExperimentId::Phase) run(config(id, root / name));
      run(config(id, root / "rerun" / name));
      const bool eq = slurp(root / name / "report.json") == slurp(root / "rerun" / name / "report.json");
      same = same && eq;
      if (!detail.empty()) detail += "; ";
      detail += name + (eq ? " identical" : " DIFFERS");
    }
    emit(10, same, "Determinism", detail, seconds_since(t), 3600);
  }

  int passed = 0;
  for (const Line& l : lines) passed += l.pass;
  std::printf("%d/%zu criteria passed; artifacts in %s\n", passed, lines.size(), root.string().c_str());
  return strict && passed != static_cast<int>(lines.size()) ? 1 : 0;
}
