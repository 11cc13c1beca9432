#include "branchlab/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "branchlab/errors.hpp"
#include "branchlab/linear_endpoint.hpp"
#include "branchlab/rng.hpp"

namespace branchlab {

namespace {

double trailing_median(const std::vector<double>& values, std::size_t end, int window) {
  const std::size_t begin = end > static_cast<std::size_t>(window) ? end - static_cast<std::size_t>(window) : 0;
  std::vector<double> tail(values.begin() + static_cast<std::ptrdiff_t>(begin),
                           values.begin() + static_cast<std::ptrdiff_t>(end));
  std::nth_element(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(tail.size() / 2), tail.end());
  return tail[tail.size() / 2];
}

// Norm of the projection of u onto the eigenspace of prev's lowest cluster.
double cluster_overlap(const BranchPoint& prev, const VectorXd& u, double cluster_tol) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < prev.spectrum.size(); ++k) {
    if (prev.spectrum(k) - prev.spectrum(0) > cluster_tol) break;
    const double c = prev.eigvecs.col(k).dot(u);
    acc += c * c;
  }
  return std::sqrt(acc);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void ContinuationConfig::validate() const {
  if (!(dlambda > 0.0 && dlambda <= 1.0)) throw Error(ErrorCode::InvalidInput, "dlambda must lie in (0, 1]");
  if (!(grad_tol > 0.0)) throw Error(ErrorCode::InvalidInput, "grad_tol must be positive");
  if (max_iterations < 1) throw Error(ErrorCode::InvalidInput, "max_iterations must be >= 1");
  if (overlap_floor < 0.0 || overlap_floor > 1.0) throw Error(ErrorCode::InvalidInput, "overlap_floor outside [0,1]");
}

std::vector<double> ContinuationConfig::grid() const {
  validate();
  const auto n = static_cast<long>(std::ceil(1.0 / dlambda - 1e-9));
  std::vector<double> out;
  out.reserve(static_cast<size_t>(n + 1));
  for (long i = 0; i < n; ++i) out.push_back(static_cast<double>(i) * dlambda);
  out.push_back(1.0);
  return out;
}

std::size_t Branch::first_jump() const {
  return jumps.empty() ? points.size() : jumps.front().index;
}

MatrixXd branch_hessian(const ModelParams& theta, double lambda, const Dataset& data, const ObjectiveConfig& obj,
                        HessianSource source) {
  if (source == HessianSource::Analytic) return hessian_analytic(theta, lambda, data, obj);
  return hessian_fd(theta, lambda, data, obj).symmetric;
}

BranchPoint minimize(const ModelParams& init, double lambda, const Dataset& data, const ObjectiveConfig& obj,
                     const ContinuationConfig& cfg) {
  init.validate();
  if (!init.W.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite initial W");
  const Eigen::Index m = init.width(), d = init.input_dim();
  ModelParams theta = init;
  ValueGrad fun = [&](const VectorXd& w, VectorXd& g) {
    theta.W = unvec_rowmajor(w, m, d);
    MatrixXd G;
    const double f = loss_and_grad(theta, lambda, data, obj, G);
    g = vec_rowmajor(G);
    return f;
  };
  LbfgsOptions opts;
  opts.grad_tol = cfg.grad_tol;
  opts.max_iterations = cfg.max_iterations;
  const LbfgsResult r = lbfgs_minimize(fun, vec_rowmajor(init.W), opts);
  BranchPoint p;
  p.lambda = lambda;
  p.W = unvec_rowmajor(r.x, m, d);
  p.loss = r.f;
  p.grad_norm = r.grad_norm;
  p.iterations = r.iterations;
  p.converged = r.converged;
  return p;
}

void attach_spectrum(BranchPoint& point, const VectorXd& v, const Dataset& data, const ObjectiveConfig& obj,
                     HessianSource source) {
  const SymmetricEigen eig = symmetric_eigen(branch_hessian({point.W, v}, point.lambda, data, obj, source));
  point.spectrum = eig.values;
  point.eigvecs = eig.vectors;
  VectorXd u = eig.vectors.col(0);
  Eigen::Index idx;
  u.cwiseAbs().maxCoeff(&idx);
  if (u(idx) < 0.0) u = -u;
  point.lowest_eigvec = u;
}

NewtonResult newton_critical(const ModelParams& init, double lambda, const Dataset& data, const ObjectiveConfig& obj,
                             double tol, int max_iterations) {
  ModelParams theta = init;
  NewtonResult res;
  for (int it = 0; it <= max_iterations; ++it) {
    const MatrixXd G = grad(theta, lambda, data, obj);
    res.grad_norm = G.norm();
    res.iterations = it;
    if (!std::isfinite(res.grad_norm)) break;
    if (res.grad_norm <= tol) {
      res.converged = true;
      break;
    }
    if (it == max_iterations) break;
    const MatrixXd H = hessian_analytic(theta, lambda, data, obj);
    const VectorXd step = H.colPivHouseholderQr().solve(vec_rowmajor(G));
    if (!step.allFinite()) break;
    theta.W -= unvec_rowmajor(step, theta.width(), theta.input_dim());
  }
  res.W = theta.W;
  return res;
}

Branch trace_branch(const Dataset& data, const VectorXd& v, const ContinuationConfig& cfg, const ObjectiveConfig& obj,
                    const std::vector<double>& lambdas, std::optional<MatrixXd> W_start) {
  cfg.validate();
  obj.validate();
  if (lambdas.empty()) throw Error(ErrorCode::InvalidInput, "empty lambda grid");
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > lambdas[i - 1])) throw Error(ErrorCode::InvalidInput, "lambda grid must increase strictly");
  }
  Branch branch;
  branch.v = v;
  MatrixXd W = W_start ? *W_start : solve_w0(v, data.sigma, data.gamma, obj.alpha).W;
  Xoshiro256 kick_rng(cfg.kick_seed, 0);
  std::vector<double> grad_norms, steps;

  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double lambda = lambdas[i];
    BranchPoint p = minimize({W, v}, lambda, data, obj, cfg);
    if (!p.converged) {
      MatrixXd kicked = W;
      for (Eigen::Index k = 0; k < kicked.size(); ++k) kicked.data()[k] += cfg.kick_scale * kick_rng.normal();
      BranchPoint retry = minimize({kicked, v}, lambda, data, obj, cfg);
      retry.retried = true;
      if (retry.converged || retry.grad_norm < p.grad_norm) p = std::move(retry);
      else p.retried = true;
    }
    attach_spectrum(p, v, data, obj, cfg.hessian);

    if (i > 0) {
      const BranchPoint& prev = branch.points.back();
      const double step = (p.W - prev.W).norm();
      std::string reason;
      if (grad_norms.size() >= 3) {
        const double gmed = trailing_median(grad_norms, grad_norms.size(), cfg.trailing_window);
        if (p.grad_norm > cfg.grad_tol && p.grad_norm > cfg.jump_grad_ratio * std::max(gmed, 1e-300)) {
          reason = "grad-norm spike";
        }
      }
      if (reason.empty() && steps.size() >= 3) {
        const double smed = trailing_median(steps, steps.size(), cfg.trailing_window);
        if (step > cfg.jump_step_ratio * smed) {
          reason = "parameter jump";
        } else if (step > 0.3 * cfg.jump_step_ratio * smed &&
                   cluster_overlap(prev, p.lowest_eigvec, cfg.cluster_tol) < cfg.overlap_floor) {
          // eigenvector turnover alone also happens at harmless eigenvalue crossings
          reason = "eigenvector overlap loss";
        }
      }
      if (!reason.empty()) {
        p.jump = true;
        branch.jumps.push_back({i, lambda, reason});
      }
      steps.push_back(step);
    }
    grad_norms.push_back(p.grad_norm);
    W = p.W;
    branch.points.push_back(std::move(p));
  }
  return branch;
}

Branch trace_branch(const Dataset& data, const VectorXd& v, const ContinuationConfig& cfg, const ObjectiveConfig& obj) {
  return trace_branch(data, v, cfg, obj, cfg.grid());
}

void write_branch_csv(const Branch& branch, const std::filesystem::path& path, int k) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string());
  out << "lambda,loss,grad_norm,converged,jump_flag";
  for (int e = 1; e <= k; ++e) out << ",eig_" << e;
  out << '\n';
  for (const BranchPoint& p : branch.points) {
    out << fmt(p.lambda) << ',' << fmt(p.loss) << ',' << fmt(p.grad_norm) << ',' << (p.converged ? 1 : 0) << ','
        << (p.jump ? 1 : 0);
    for (int e = 0; e < k; ++e) {
      out << ',';
      if (e < p.spectrum.size()) out << fmt(p.spectrum(e));
    }
    out << '\n';
  }
}

}  // namespace branchlab
