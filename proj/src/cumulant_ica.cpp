#include "htica/cumulant_ica.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace htica::cumulant {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_order(int order) {
  require(order >= 2 && order <= 4, "cumulant order must be 2, 3 or 4, got " +
                                        std::to_string(order));
}

std::size_t int_pow(Index base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

// Index tuple of a lexicographic flat position.
std::vector<int> unflatten(std::size_t pos, Index n, int order) {
  std::vector<int> idx(static_cast<std::size_t>(order));
  for (int t = order - 1; t >= 0; --t) {
    idx[static_cast<std::size_t>(t)] = static_cast<int>(pos % static_cast<std::size_t>(n));
    pos /= static_cast<std::size_t>(n);
  }
  return idx;
}

std::size_t flatten(std::span<const int> idx, Index n) {
  std::size_t pos = 0;
  for (int i : idx) pos = pos * static_cast<std::size_t>(n) + static_cast<std::size_t>(i);
  return pos;
}

}  // namespace

CumulantTensor::CumulantTensor(int order, Index dimension) : order_(order), dim_(dimension) {
  check_order(order);
  require(dimension >= 1, "tensor dimension must be positive");
  const std::size_t full = int_pow(dimension, order);
  full_to_canon_.resize(full);
  std::vector<std::size_t> canon_pos;
  for (std::size_t p = 0; p < full; ++p) {
    const auto idx = unflatten(p, dimension, order);
    if (std::is_sorted(idx.begin(), idx.end())) {
      canon_.push_back(idx);
      canon_pos.push_back(p);
    }
  }
  for (std::size_t p = 0; p < full; ++p) {
    auto idx = unflatten(p, dimension, order);
    std::sort(idx.begin(), idx.end());
    const std::size_t sorted_pos = flatten(idx, dimension);
    full_to_canon_[p] = static_cast<std::size_t>(
        std::lower_bound(canon_pos.begin(), canon_pos.end(), sorted_pos) - canon_pos.begin());
  }
  values_.assign(canon_.size(), 0.0);
}

std::size_t CumulantTensor::slot(std::span<const int> index) const {
  require(static_cast<int>(index.size()) == order_, "tensor index has the wrong length");
  for (int i : index) require(i >= 0 && i < dim_, "tensor index out of range");
  return full_to_canon_[flatten(index, dim_)];
}

double CumulantTensor::operator()(std::span<const int> index) const { return values_[slot(index)]; }
double& CumulantTensor::at(std::span<const int> index) { return values_[slot(index)]; }

VectorXd vectorize_tensor(const CumulantTensor& t) {
  const std::size_t full = int_pow(t.dimension(), t.order());
  VectorXd v(static_cast<Index>(full));
  for (std::size_t p = 0; p < full; ++p) v[static_cast<Index>(p)] = t(unflatten(p, t.dimension(), t.order()));
  return v;
}

CumulantTensor tensor_from_vector(int order, Index dimension, const VectorXd& v) {
  CumulantTensor t(order, dimension);
  require(static_cast<std::size_t>(v.size()) == int_pow(dimension, order),
          "tensor_from_vector: length must be n^order");
  const double tol = 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff());
  const auto& canon = t.canonical_indices();
  for (std::size_t c = 0; c < canon.size(); ++c) t.canonical_values()[c] = v[static_cast<Index>(flatten(canon[c], dimension))];
  for (Index p = 0; p < v.size(); ++p) {
    const auto idx = unflatten(static_cast<std::size_t>(p), dimension, order);
    require(std::abs(v[p] - t(idx)) <= tol, "tensor_from_vector: input is not symmetric");
  }
  return t;
}

CumulantTensor estimate_cumulant(const MatrixXd& samples, int order) {
  check_order(order);
  const Index N = samples.rows(), n = samples.cols();
  require(n >= 1, "estimate_cumulant: samples need at least one column");
  require(N >= 10 * order, "estimate_cumulant: need at least 10 * order samples");

  const Eigen::RowVectorXd mean = samples.colwise().mean();
  CumulantTensor out(order, n);
  const auto& canon = out.canonical_indices();
  const std::size_t C = canon.size();

  // Block sums of centered products; the blocks are merged at the end.
  constexpr Index kBlock = 4096;
  std::vector<double> total(C, 0.0);
  MatrixXd cov_total = MatrixXd::Zero(n, n);
  std::vector<double> block(C);
  for (Index start = 0; start < N; start += kBlock) {
    const Index len = std::min(kBlock, N - start);
    const MatrixXd y = samples.middleRows(start, len).rowwise() - mean;
    cov_total.noalias() += y.transpose() * y;
    if (order == 2) continue;
    std::fill(block.begin(), block.end(), 0.0);
    for (Index r = 0; r < len; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        double prod = 1.0;
        for (int i : canon[c]) prod *= y(r, i);
        block[c] += prod;
      }
    }
    for (std::size_t c = 0; c < C; ++c) total[c] += block[c];
  }
  const double Nd = static_cast<double>(N);
  const MatrixXd S = cov_total / Nd;

  for (std::size_t c = 0; c < C; ++c) {
    const auto& ix = canon[c];
    double v;
    if (order == 2) {
      v = S(ix[0], ix[1]);
    } else if (order == 3) {
      v = total[c] / Nd;
    } else {
      v = total[c] / Nd - S(ix[0], ix[1]) * S(ix[2], ix[3]) - S(ix[0], ix[2]) * S(ix[1], ix[3]) -
          S(ix[0], ix[3]) * S(ix[1], ix[2]);
    }
    out.canonical_values()[c] = v;
  }
  return out;
}

MatrixXd khatri_rao_power(const MatrixXd& A, int order) {
  require(order >= 2, "khatri_rao_power: order must be at least 2");
  const Index n = A.rows();
  MatrixXd out(static_cast<Index>(int_pow(n, order)), A.cols());
  for (Index k = 0; k < A.cols(); ++k) {
    VectorXd v = A.col(k);
    for (int t = 1; t < order; ++t) {
      VectorXd next(v.size() * n);
      for (Index a = 0; a < v.size(); ++a) next.segment(a * n, n) = v[a] * A.col(k);
      v = std::move(next);
    }
    out.col(k) = v;
  }
  return out;
}

MatrixXd multilinear_kr2(const MatrixXd& A) {
  const Index n = A.rows();
  require(n >= 2, "multilinear_kr2: need at least two rows");
  MatrixXd out(n * (n - 1) / 2, A.cols());
  Index r = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j, ++r) out.row(r) = A.row(i).cwiseProduct(A.row(j));
  return out;
}

void PoissonReduction::validate() const {
  require(A.cols() >= 1 && A.rows() >= 1, "PoissonReduction: empty mixing matrix");
  require(w.size() == A.cols(), "PoissonReduction: one weight per column of A");
  require((w.array() > 0.0).all() && std::abs(w.sum() - 1.0) <= 1e-12,
          "PoissonReduction: weights must be positive and sum to 1");
  require(lambda > 0.0 && std::isfinite(lambda), "PoissonReduction: lambda must be positive");
  require(noise_tau >= 0.0, "PoissonReduction: noise_tau must be nonnegative");
}

MatrixXd sample_reduction(const PoissonReduction& model, std::size_t count, Rng& rng) {
  model.validate();
  const Index n = model.A.rows(), m = model.A.cols();
  std::vector<std::poisson_distribution<long>> src;
  for (Index k = 0; k < m; ++k) src.emplace_back(model.w[k] * model.lambda);
  std::normal_distribution<double> noise(0.0, 1.0);
  MatrixXd X(static_cast<Index>(count), n);
  VectorXd s(m);
  for (Index r = 0; r < X.rows(); ++r) {
    for (Index k = 0; k < m; ++k) s[k] = static_cast<double>(src[static_cast<std::size_t>(k)](rng));
    X.row(r) = (model.A * s).transpose();
    if (model.noise_tau > 0.0) {
      for (Index i = 0; i < n; ++i) X(r, i) += model.noise_tau * noise(rng);
    }
  }
  return X;
}

CumulantTensor analytic_cumulant(const PoissonReduction& model, int order) {
  model.validate();
  const Index n = model.A.rows();
  const VectorXd flat = model.lambda * khatri_rao_power(model.A, order) * model.w;
  CumulantTensor t(order, n);
  const auto& canon = t.canonical_indices();
  for (std::size_t c = 0; c < canon.size(); ++c) {
    double v = flat[static_cast<Index>(flatten(canon[c], n))];
    if (order == 2 && canon[c][0] == canon[c][1]) v += model.noise_tau * model.noise_tau;
    t.canonical_values()[c] = v;
  }
  return t;
}

MatrixXd pseudo_inverse(const MatrixXd& M) {
  const Eigen::JacobiSVD<MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double tol = s.size() > 0 ? 1e-10 * s[0] : 0.0;
  VectorXd inv = VectorXd::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i)
    if (s[i] > tol) inv[i] = 1.0 / s[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

VectorXd project_to_simplex(const VectorXd& v) {
  require(v.size() >= 1, "project_to_simplex: empty vector");
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    const double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}

WeightEstimate recover_weights_from_tensor(const CumulantTensor& kappa, const MatrixXd& A,
                                           double lambda) {
  require(lambda > 0.0, "recover_weights: lambda must be positive");
  require(kappa.dimension() == A.rows(), "recover_weights: tensor and A differ in dimension");
  const MatrixXd K = khatri_rao_power(A, kappa.order());
  const Eigen::JacobiSVD<MatrixXd> svd(K, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  WeightEstimate out;
  out.sigma_max = s[0];
  out.sigma_min = s[s.size() - 1];
  if (K.rows() < K.cols() || !(out.sigma_min > 1e-10 * out.sigma_max)) {
    throw RankDeficient("recover_weights: A^(" + std::to_string(kappa.order()) +
                        ") is rank deficient (sigma_min " + std::to_string(out.sigma_min) +
                        " <= 1e-10 * sigma_max " + std::to_string(out.sigma_max) + ")");
  }
  const VectorXd vk = vectorize_tensor(kappa);
  out.raw = svd.matrixV() * (s.cwiseInverse().asDiagonal() * (svd.matrixU().transpose() * vk)) /
            lambda;
  out.projected = project_to_simplex(out.raw);
  return out;
}

WeightEstimate recover_weights(const MatrixXd& samples, const MatrixXd& A, double lambda,
                               int order) {
  require(samples.cols() == A.rows(), "recover_weights: samples and A differ in dimension");
  return recover_weights_from_tensor(estimate_cumulant(samples, order), A, lambda);
}

void write_samples_csv(std::ostream& os, const MatrixXd& samples) {
  char buf[32];
  for (Index r = 0; r < samples.rows(); ++r) {
    for (Index c = 0; c < samples.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", samples(r, c));
      if (c) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

MatrixXd read_samples_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      require(first, "read_samples_csv: non-numeric row " + std::to_string(rows.size() + 1));
      first = false;
      continue;
    }
    first = false;
    require(rows.empty() || row.size() == rows.front().size(),
            "read_samples_csv: ragged row " + std::to_string(rows.size() + 1));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "read_samples_csv: no data rows");
  MatrixXd M(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) M(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return M;
}

void to_json(nlohmann::json& j, const CumulantTensor& t) {
  const VectorXd v = vectorize_tensor(t);
  j = nlohmann::json{{"order", t.order()},
                     {"shape", std::vector<Index>(static_cast<std::size_t>(t.order()), t.dimension())},
                     {"values", std::vector<double>(v.data(), v.data() + v.size())}};
}

CumulantTensor tensor_from_json(const nlohmann::json& j) {
  const int order = j.at("order").get<int>();
  const auto shape = j.at("shape").get<std::vector<Index>>();
  require(static_cast<int>(shape.size()) == order && !shape.empty(),
          "tensor json: shape length must equal order");
  for (Index s : shape) require(s == shape.front(), "tensor json: shape must be cubical");
  const auto values = j.at("values").get<std::vector<double>>();
  return tensor_from_vector(order, shape.front(),
                            Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size())));
}

}  // namespace htica::cumulant
