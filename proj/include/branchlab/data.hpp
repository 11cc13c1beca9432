#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "branchlab/numerics.hpp"

namespace branchlab {

enum class GeneratorId { Toy, Hd, External };

std::string_view to_string(GeneratorId id);

/// N samples with the empirical moments Sigma = E[x x^T], gamma = E[x y].
struct Dataset {
  MatrixXd X;  // N x d
  VectorXd y;  // N
  MatrixXd sigma;
  VectorXd gamma;
  std::uint64_t seed = 0;
  GeneratorId generator = GeneratorId::External;
  // hd teacher y = w_lin^T x + 0.4 tanh(1.5 w_nl^T x) + eps; empty for other generators
  VectorXd teacher_linear;
  VectorXd teacher_nonlinear;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
};

struct Moments {
  MatrixXd sigma;
  VectorXd gamma;
};

/// Sigma = X^T X / N, gamma = X^T y / N.
Moments moments(const MatrixXd& X, const VectorXd& y);

/// Builds a Dataset from raw samples (moments computed here).
Dataset make_dataset(MatrixXd X, VectorXd y, std::uint64_t seed = 0,
                     GeneratorId generator = GeneratorId::External);

/// d = 1, x ~ N(0,1), y = tanh(1.5 x) + N(0, 0.02^2).
Dataset gen_toy(std::uint64_t seed, Eigen::Index n = 2000);

/// x ~ N(0, I_d), y = w_lin^T x + 0.4 tanh(1.5 w_nl^T x) + N(0, 0.05^2) with unit teacher
/// vectors drawn from their own stream (independent of n).
Dataset gen_hd(std::uint64_t seed, Eigen::Index n = 500, Eigen::Index d = 5);

/// Columnar text format: header lines then one "x_1 ... x_d y" row per sample.
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace branchlab
