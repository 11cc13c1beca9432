#include "branchlab/objective.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "branchlab/errors.hpp"

namespace branchlab {

namespace {

void check_shapes(const ModelParams& theta, const Dataset& data) {
  theta.validate();
  if (theta.input_dim() != data.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "W has " + std::to_string(theta.input_dim()) +
                                                  " columns but data has d = " + std::to_string(data.dim()));
  }
}

double mean_of_product(const double* a, const double* b, Eigen::Index n, std::vector<double>& buf) {
  buf.resize(static_cast<size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) buf[static_cast<size_t>(r)] = a[r] * b[r];
  return pairwise_mean(buf);
}

}  // namespace

FdScheme parse_fd_scheme(std::string_view name) {
  if (name == "central") return FdScheme::Central;
  if (name == "forward") return FdScheme::Forward;
  throw Error(ErrorCode::InvalidInput, "unknown fd scheme '" + std::string(name) + "'");
}

std::string_view to_string(FdScheme scheme) {
  return scheme == FdScheme::Central ? "central" : "forward";
}

void ObjectiveConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::InvalidInput, "alpha must be >= 0");
  if (!(fd_step > 1e-9 && fd_step < 1e-2)) throw Error(ErrorCode::InvalidInput, "fd_step must lie in (1e-9, 1e-2)");
}

VectorXd residuals(const ModelParams& theta, double lambda, const Dataset& data, ActivationKind kind) {
  return forward_batch(theta, data.X, lambda, kind) - data.y;
}

double loss(const ModelParams& theta, double lambda, const Dataset& data, const ObjectiveConfig& cfg) {
  check_shapes(theta, data);
  VectorXd r = residuals(theta, lambda, data, cfg.activation);
  VectorXd r2 = r.array().square();
  return 0.5 * pairwise_mean(r2) + 0.5 * cfg.alpha * theta.W.squaredNorm();
}

double loss_and_grad(const ModelParams& theta, double lambda, const Dataset& data,
                     const ObjectiveConfig& cfg, MatrixXd& grad_out) {
  check_shapes(theta, data);
  check_lambda(lambda);
  const Eigen::Index n = data.size(), m = theta.width(), d = theta.input_dim();
  // Column-major N x m so each unit's samples are contiguous.
  MatrixXd Z = data.X * theta.W.transpose();
  MatrixXd H(n, m), Hp(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const HomotopyJet jet = h_jet(Z(r, j), lambda, cfg.activation);
      H(r, j) = jet.d[0];
      Hp(r, j) = jet.d[1];
    }
  }
  VectorXd res = H * theta.v - data.y;
  VectorXd r2 = res.array().square();
  const double value = 0.5 * pairwise_mean(r2) + 0.5 * cfg.alpha * theta.W.squaredNorm();

  grad_out.resize(m, d);
  std::vector<double> buf;
  VectorXd a(n);
  for (Eigen::Index j = 0; j < m; ++j) {
    a = res.array() * Hp.col(j).array() * theta.v(j);
    for (Eigen::Index i = 0; i < d; ++i) {
      grad_out(j, i) = mean_of_product(a.data(), data.X.col(i).data(), n, buf) + cfg.alpha * theta.W(j, i);
    }
  }
  return value;
}

MatrixXd grad(const ModelParams& theta, double lambda, const Dataset& data, const ObjectiveConfig& cfg) {
  MatrixXd g;
  loss_and_grad(theta, lambda, data, cfg, g);
  return g;
}

FdHessian hessian_fd(const ModelParams& theta, double lambda, const Dataset& data, const ObjectiveConfig& cfg) {
  cfg.validate();
  check_shapes(theta, data);
  const Eigen::Index m = theta.width(), d = theta.input_dim(), p = m * d;
  if (p > kDenseHessianBudget) {
    throw Error(ErrorCode::SizeLimit, "m*d = " + std::to_string(p) + " exceeds the dense Hessian budget");
  }
  const double eps = cfg.fd_step;
  MatrixXd raw(p, p);
  ModelParams probe = theta;
  VectorXd g0;
  if (cfg.fd_scheme == FdScheme::Forward) g0 = vec_rowmajor(grad(theta, lambda, data, cfg));
  for (Eigen::Index c = 0; c < p; ++c) {
    const Eigen::Index j = c / d, i = c % d;
    const double w = theta.W(j, i);
    probe.W(j, i) = w + eps;
    VectorXd gp = vec_rowmajor(grad(probe, lambda, data, cfg));
    if (cfg.fd_scheme == FdScheme::Central) {
      probe.W(j, i) = w - eps;
      VectorXd gm = vec_rowmajor(grad(probe, lambda, data, cfg));
      raw.col(c) = (gp - gm) / (2.0 * eps);
    } else {
      raw.col(c) = (gp - g0) / eps;
    }
    probe.W(j, i) = w;
  }
  FdHessian out;
  const double norm = raw.norm();
  out.symmetry_defect = norm > 0.0 ? (raw - raw.transpose()).norm() / norm : 0.0;
  out.symmetric = 0.5 * (raw + raw.transpose());
  out.raw = std::move(raw);
  return out;
}

MatrixXd hessian_analytic(const ModelParams& theta, double lambda, const Dataset& data,
                          const ObjectiveConfig& cfg) {
  check_shapes(theta, data);
  check_lambda(lambda);
  const Eigen::Index n = data.size(), m = theta.width(), d = theta.input_dim(), p = m * d;
  if (p > kDenseHessianBudget) throw Error(ErrorCode::SizeLimit, "m*d exceeds the dense Hessian budget");
  MatrixXd Z = data.X * theta.W.transpose();
  MatrixXd H(n, m), Hp(n, m), Hpp(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const HomotopyJet jet = h_jet(Z(r, j), lambda, cfg.activation);
      H(r, j) = jet.d[0];
      Hp(r, j) = jet.d[1];
      Hpp(r, j) = jet.d[2];
    }
  }
  VectorXd res = H * theta.v - data.y;
  MatrixXd J(n, p);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      J.col(j * d + i) = theta.v(j) * Hp.col(j).cwiseProduct(data.X.col(i));
    }
  }
  MatrixXd hess = J.transpose() * J / static_cast<double>(n);
  for (Eigen::Index j = 0; j < m; ++j) {
    VectorXd weight = theta.v(j) * res.cwiseProduct(Hpp.col(j));
    hess.block(j * d, j * d, d, d) +=
        data.X.transpose() * weight.asDiagonal() * data.X / static_cast<double>(n);
  }
  hess.diagonal().array() += cfg.alpha;
  return 0.5 * (hess + hess.transpose());
}

DirectionalLossDerivs directional_loss_derivs(const ModelParams& theta, double lambda,
                                              const KernelDirection& v0, const Dataset& data,
                                              const ObjectiveConfig& cfg) {
  check_shapes(theta, data);
  if (v0.blocks().rows() != theta.width() || v0.blocks().cols() != theta.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "kernel direction shape differs from W");
  }
  const Eigen::Index n = data.size();
  MatrixXd Df = directional_derivs_batch(theta, lambda, v0, data.X, 4, cfg.activation);
  VectorXd r = residuals(theta, lambda, data, cfg.activation);
  std::vector<double> buf;
  auto mean_prod = [&](const VectorXd& a, const VectorXd& b) {
    return mean_of_product(a.data(), b.data(), n, buf);
  };
  const VectorXd d1 = Df.col(0), d2 = Df.col(1), d3 = Df.col(2), d4 = Df.col(3);

  DirectionalLossDerivs out;
  const double reg_first = cfg.alpha * (theta.W.array() * v0.blocks().array()).sum();
  out.d[0] = mean_prod(r, d1) + reg_first;
  out.d2_gauss_newton = mean_prod(d1, d1);
  out.d2_residual = mean_prod(r, d2);
  out.d[1] = out.d2_gauss_newton + out.d2_residual + cfg.alpha;
  out.d3_mixed = 3.0 * mean_prod(d1, d2);
  out.d3_residual = mean_prod(r, d3);
  out.d[2] = out.d3_mixed + out.d3_residual;
  out.d4_curvature_sq = 3.0 * mean_prod(d2, d2);
  out.d4_mixed = 4.0 * mean_prod(d1, d3);
  out.d4_residual = mean_prod(r, d4);
  out.d[3] = out.d4_curvature_sq + out.d4_mixed + out.d4_residual;
  return out;
}

}  // namespace branchlab
