#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "delfi/data_model.hpp"

namespace delfi {

struct Neighbor {
  double distance2 = 0.0;  // squared Euclidean distance
  std::size_t index = 0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Brute-force k-nearest-neighbor search over flattened standardized windows.
/// Ties are broken by the lower training index.
class KnnIndex {
 public:
  KnnIndex() = default;
  explicit KnnIndex(std::span<const Window> windows);

  std::size_t size() const { return n_; }

  /// Nearest `k` in ascending (distance, index) order. Requires 1 <= k <= size().
  std::vector<Neighbor> nearest(const Window& query, std::size_t k) const;

  /// Queries are spread over OpenMP threads; each query is scanned serially
  /// so results equal calling nearest() in a loop.
  std::vector<std::vector<Neighbor>> nearest_batch(std::span<const Window> queries, std::size_t k) const;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Clamps k into [1, n]; records a warning when k exceeded n.
std::size_t clamp_k(std::size_t k, std::size_t n, std::vector<std::string>* warnings);

/// KNN residual regressor: mean target of the k nearest training windows.
class KnnPointModel {
 public:
  KnnPointModel(std::span<const Window> windows, std::span<const double> targets, std::size_t k);

  std::size_t k() const { return k_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  double predict(const Window& query) const;
  std::vector<double> predict(std::span<const Window> queries) const;

 private:
  KnnIndex index_;
  std::vector<double> targets_;
  std::vector<std::string> warnings_;
  std::size_t k_;
};

/// KNN histogram forecaster: element-wise mean of the neighbors' histograms.
class KnnHistogramModel {
 public:
  KnnHistogramModel(std::span<const Window> windows, std::span<const Histogram> targets, std::size_t k);

  std::size_t k() const { return k_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  Histogram predict(const Window& query) const;
  std::vector<Histogram> predict(std::span<const Window> queries) const;

 private:
  Histogram average(const std::vector<Neighbor>& nb) const;

  KnnIndex index_;
  std::vector<Histogram> targets_;
  std::vector<std::string> warnings_;
  std::size_t k_;
};

double knn_predict_point(std::span<const Window> train, std::span<const double> targets,
                         const Window& query, std::size_t k);
Histogram knn_predict_histogram(std::span<const Window> train, std::span<const Histogram> targets,
                                const Window& query, std::size_t k);

inline constexpr double kLinearRidge = 1e-8;

/// Least-squares residual model over the flattened window plus intercept.
struct LinearModel {
  std::vector<double> weights;  // kWindowSize entries
  double intercept = 0.0;

  double predict(const Window& w) const;
  std::vector<double> predict(std::span<const Window> ws) const;
};

/// Solves (X^T X + ridge I) beta = X^T y by Cholesky, X = [windows | 1].
/// Throws NumericError when the system is not positive definite.
LinearModel linear_fit(std::span<const Window> windows, std::span<const double> targets,
                       double ridge = kLinearRidge);

}  // namespace delfi
