#include <cmath>

#include <Eigen/Cholesky>

#include "cmc/error.hpp"
#include "cmc/forest.hpp"

namespace cmc {

double entropy_bits(const ClassCounts& c) {
  const double n = c.total();
  if (!(n > 0.0)) return 0.0;
  double h = 0.0;
  for (double k : {c.n0, c.n1})
    if (k > 0.0) {
      const double p = k / n;
      h -= p * std::log2(p);
    }
  return h;
}

double info_gain_classification(const ClassCounts& left, const ClassCounts& right) {
  const double nl = left.total();
  const double nr = right.total();
  if (!(nl > 0.0) || !(nr > 0.0)) return 0.0;
  const double n = nl + nr;
  const ClassCounts parent{left.n0 + right.n0, left.n1 + right.n1};
  return entropy_bits(parent) - (nl / n) * entropy_bits(left) - (nr / n) * entropy_bits(right);
}

DisplacementMoments::DisplacementMoments(int dim)
    : dim_(dim), sum_(Eigen::VectorXd::Zero(dim)), outer_(Eigen::MatrixXd::Zero(dim, dim)) {}

void DisplacementMoments::add(std::span<const float> d) {
  if (static_cast<int>(d.size()) != dim_) throw InvalidInput("displacement dimension mismatch");
  n_ += 1.0;
  for (int i = 0; i < dim_; ++i) {
    const double di = d[static_cast<std::size_t>(i)];
    sum_[i] += di;
    for (int j = i; j < dim_; ++j) outer_(i, j) += di * d[static_cast<std::size_t>(j)];
  }
}

void DisplacementMoments::add(const Eigen::VectorXd& d) {
  if (d.size() != dim_) throw InvalidInput("displacement dimension mismatch");
  n_ += 1.0;
  for (int i = 0; i < dim_; ++i) {
    sum_[i] += d[i];
    for (int j = i; j < dim_; ++j) outer_(i, j) += d[i] * d[j];
  }
}

void DisplacementMoments::merge(const DisplacementMoments& other) {
  if (other.dim_ != dim_) throw InvalidInput("displacement dimension mismatch");
  n_ += other.n_;
  sum_ += other.sum_;
  outer_ += other.outer_;
}

Eigen::VectorXd DisplacementMoments::mean() const {
  if (!(n_ > 0.0)) return Eigen::VectorXd::Zero(dim_);
  return sum_ / n_;
}

Eigen::MatrixXd DisplacementMoments::covariance() const {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim_, dim_);
  if (!(n_ > 0.0)) return cov;
  const Eigen::VectorXd mu = mean();
  for (int i = 0; i < dim_; ++i)
    for (int j = i; j < dim_; ++j) {
      cov(i, j) = outer_(i, j) / n_ - mu[i] * mu[j];
      cov(j, i) = cov(i, j);
    }
  return cov;
}

double DisplacementMoments::log_det(double eps) const {
  Eigen::MatrixXd cov = covariance();
  cov.diagonal().array() += eps;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    // Rounding can leave a tiny negative eigenvalue; fall back to LDLT.
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i) acc += std::log(std::max(ldlt.vectorD()[i], eps));
    return acc;
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) acc += 2.0 * std::log(llt.matrixL()(i, i));
  return acc;
}

std::optional<double> info_gain_regression(const DisplacementMoments& left, const DisplacementMoments& right,
                                           double eps) {
  if (left.count() < 2.0 || right.count() < 2.0) return std::nullopt;
  DisplacementMoments parent = left;
  parent.merge(right);
  const double n = parent.count();
  return 0.5 * (parent.log_det(eps) - (left.count() / n) * left.log_det(eps) -
                (right.count() / n) * right.log_det(eps));
}

std::optional<double> info_gain_regression(const std::vector<Eigen::VectorXd>& samples,
                                           std::span<const std::uint8_t> goes_right, double eps) {
  if (samples.empty() || goes_right.size() != samples.size())
    throw InvalidInput("partition does not cover the sample set");
  const int dim = static_cast<int>(samples.front().size());
  DisplacementMoments l(dim);
  DisplacementMoments r(dim);
  for (std::size_t i = 0; i < samples.size(); ++i) (goes_right[i] ? r : l).add(samples[i]);
  return info_gain_regression(l, r, eps);
}

}  // namespace cmc
