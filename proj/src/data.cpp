#include "branchlab/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "branchlab/errors.hpp"
#include "branchlab/rng.hpp"

namespace branchlab {

namespace {

enum Stream : std::uint64_t { kInputs = 1, kNoise = 2, kTeacher = 3 };

VectorXd unit_gaussian(Xoshiro256& rng, Eigen::Index d) {
  VectorXd w(d);
  for (Eigen::Index i = 0; i < d; ++i) w(i) = rng.normal();
  return w / w.norm();
}

MatrixXd gaussian_inputs(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
  Xoshiro256 rng(seed, kInputs);
  MatrixXd X(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) X(r, c) = rng.normal();
  }
  return X;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string_view to_string(GeneratorId id) {
  switch (id) {
    case GeneratorId::Toy: return "toy";
    case GeneratorId::Hd: return "hd";
    case GeneratorId::External: return "external";
  }
  return "external";
}

Moments moments(const MatrixXd& X, const VectorXd& y) {
  if (X.rows() < 1) throw Error(ErrorCode::InvalidInput, "moments need at least one sample");
  if (X.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "X and y sample counts differ");
  const double n = static_cast<double>(X.rows());
  const Eigen::Index d = X.cols();
  Moments m{MatrixXd(d, d), VectorXd(d)};
  std::vector<double> terms(static_cast<size_t>(X.rows()));
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = a; b < d; ++b) {
      for (Eigen::Index r = 0; r < X.rows(); ++r) terms[static_cast<size_t>(r)] = X(r, a) * X(r, b);
      m.sigma(a, b) = m.sigma(b, a) = pairwise_sum(terms) / n;
    }
    for (Eigen::Index r = 0; r < X.rows(); ++r) terms[static_cast<size_t>(r)] = X(r, a) * y(r);
    m.gamma(a) = pairwise_sum(terms) / n;
  }
  return m;
}

Dataset make_dataset(MatrixXd X, VectorXd y, std::uint64_t seed, GeneratorId generator) {
  Moments mom = moments(X, y);
  Dataset data;
  data.X = std::move(X);
  data.y = std::move(y);
  data.sigma = std::move(mom.sigma);
  data.gamma = std::move(mom.gamma);
  data.seed = seed;
  data.generator = generator;
  return data;
}

Dataset gen_toy(std::uint64_t seed, Eigen::Index n) {
  if (n < 2) throw Error(ErrorCode::InvalidInput, "toy dataset needs N >= 2");
  MatrixXd X = gaussian_inputs(seed, n, 1);
  Xoshiro256 noise(seed, kNoise);
  VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) y(r) = std::tanh(1.5 * X(r, 0)) + 0.02 * noise.normal();
  return make_dataset(std::move(X), std::move(y), seed, GeneratorId::Toy);
}

Dataset gen_hd(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
  if (d < 1 || n < d) throw Error(ErrorCode::InvalidInput, "hd dataset needs N >= d >= 1");
  Xoshiro256 teacher(seed, kTeacher);
  VectorXd w_lin = unit_gaussian(teacher, d);
  VectorXd w_nl = unit_gaussian(teacher, d);
  MatrixXd X = gaussian_inputs(seed, n, d);
  Xoshiro256 noise(seed, kNoise);
  VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto x = X.row(r);
    y(r) = x.dot(w_lin) + 0.4 * std::tanh(1.5 * x.dot(w_nl)) + 0.05 * noise.normal();
  }
  Dataset data = make_dataset(std::move(X), std::move(y), seed, GeneratorId::Hd);
  data.teacher_linear = std::move(w_lin);
  data.teacher_nonlinear = std::move(w_nl);
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  auto write_vector = [&](const char* key, const VectorXd& v) {
    out << key;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v(i));
    out << '\n';
  };
  out << "# branchlab dataset v1\n";
  out << "d " << data.dim() << '\n';
  out << "N " << data.size() << '\n';
  out << "seed " << data.seed << '\n';
  out << "generator " << to_string(data.generator) << '\n';
  write_vector("teacher_linear", data.teacher_linear);
  write_vector("teacher_nonlinear", data.teacher_nonlinear);
  out << "columns";
  for (Eigen::Index i = 0; i < data.dim(); ++i) out << " x" << (i + 1);
  out << " y\n";
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    for (Eigen::Index i = 0; i < data.dim(); ++i) out << format_double(data.X(r, i)) << ' ';
    out << format_double(data.y(r)) << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  Eigen::Index d = -1, n = -1;
  std::uint64_t seed = 0;
  GeneratorId generator = GeneratorId::External;
  VectorXd t_lin, t_nl;
  std::string line;
  auto read_vector = [](std::istringstream& ss) {
    std::vector<double> vals;
    std::string tok;
    while (ss >> tok) vals.push_back(std::stod(tok));
    return VectorXd(Eigen::Map<VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())));
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "d") ss >> d;
    else if (key == "N") ss >> n;
    else if (key == "seed") ss >> seed;
    else if (key == "generator") {
      std::string g;
      ss >> g;
      generator = g == "toy" ? GeneratorId::Toy : g == "hd" ? GeneratorId::Hd : GeneratorId::External;
    } else if (key == "teacher_linear") t_lin = read_vector(ss);
    else if (key == "teacher_nonlinear") t_nl = read_vector(ss);
    else if (key == "columns") break;
    else throw Error(ErrorCode::Io, "unknown dataset header key '" + key + "'");
  }
  if (d < 1 || n < 1) throw Error(ErrorCode::Io, "dataset header lacks d or N");
  MatrixXd X(n, d);
  VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!std::getline(in, line)) throw Error(ErrorCode::Io, "dataset truncated");
    std::istringstream ss(line);
    std::string tok;
    for (Eigen::Index i = 0; i < d; ++i) {
      if (!(ss >> tok)) throw Error(ErrorCode::Io, "short dataset row");
      X(r, i) = std::stod(tok);
    }
    if (!(ss >> tok)) throw Error(ErrorCode::Io, "short dataset row");
    y(r) = std::stod(tok);
  }
  Dataset data = make_dataset(std::move(X), std::move(y), seed, generator);
  data.teacher_linear = std::move(t_lin);
  data.teacher_nonlinear = std::move(t_nl);
  return data;
}

}  // namespace branchlab
