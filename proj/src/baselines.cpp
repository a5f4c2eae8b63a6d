#include "delfi/baselines.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "delfi/tensor.hpp"

namespace delfi {

KnnIndex::KnnIndex(std::span<const Window> windows) : n_(windows.size()) {
  data_.reserve(n_ * kWindowSize);
  for (const auto& w : windows) data_.insert(data_.end(), w.begin(), w.end());
}

std::vector<Neighbor> KnnIndex::nearest(const Window& query, std::size_t k) const {
  if (k < 1 || k > n_) throw DomainError("knn: k must be in [1, training size]");
  std::vector<Neighbor> best;
  best.reserve(k + 1);
  auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance2 < b.distance2 || (a.distance2 == b.distance2 && a.index < b.index);
  };
  for (std::size_t i = 0; i < n_; ++i) {
    const double* row = data_.data() + i * kWindowSize;
    double d = 0.0;
    for (std::size_t j = 0; j < kWindowSize; ++j) {
      const double diff = row[j] - query[j];
      d += diff * diff;
    }
    const Neighbor cand{d, i};
    if (best.size() == k && !less(cand, best.back())) continue;
    best.insert(std::upper_bound(best.begin(), best.end(), cand, less), cand);
    if (best.size() > k) best.pop_back();
  }
  return best;
}

std::vector<std::vector<Neighbor>> KnnIndex::nearest_batch(std::span<const Window> queries,
                                                           std::size_t k) const {
  std::vector<std::vector<Neighbor>> out(queries.size());
  const auto nq = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 16) num_threads(thread_count())
  for (std::ptrdiff_t q = 0; q < nq; ++q) out[static_cast<std::size_t>(q)] = nearest(queries[static_cast<std::size_t>(q)], k);
  return out;
}

std::size_t clamp_k(std::size_t k, std::size_t n, std::vector<std::string>* warnings) {
  if (n == 0) throw DomainError("knn: empty training set");
  if (k == 0) throw DomainError("knn: k must be >= 1");
  if (k > n) {
    if (warnings)
      warnings->push_back("k=" + std::to_string(k) + " exceeds training size " + std::to_string(n) +
                          "; clamped");
    return n;
  }
  return k;
}

KnnPointModel::KnnPointModel(std::span<const Window> windows, std::span<const double> targets,
                             std::size_t k)
    : index_(windows), targets_(targets.begin(), targets.end()), k_(clamp_k(k, windows.size(), &warnings_)) {
  if (targets.size() != windows.size()) throw DomainError("knn: window/target count mismatch");
}

double KnnPointModel::predict(const Window& query) const {
  double sum = 0.0;
  for (const auto& nb : index_.nearest(query, k_)) sum += targets_[nb.index];
  return sum / static_cast<double>(k_);
}

std::vector<double> KnnPointModel::predict(std::span<const Window> queries) const {
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& nbs : index_.nearest_batch(queries, k_)) {
    double sum = 0.0;
    for (const auto& nb : nbs) sum += targets_[nb.index];
    out.push_back(sum / static_cast<double>(k_));
  }
  return out;
}

KnnHistogramModel::KnnHistogramModel(std::span<const Window> windows, std::span<const Histogram> targets,
                                     std::size_t k)
    : index_(windows), targets_(targets.begin(), targets.end()), k_(clamp_k(k, windows.size(), &warnings_)) {
  if (targets.size() != windows.size()) throw DomainError("knn: window/target count mismatch");
}

Histogram KnnHistogramModel::average(const std::vector<Neighbor>& nbs) const {
  Histogram h{};
  for (const auto& nb : nbs)
    for (std::size_t b = 0; b < kBinCount; ++b) h[b] += targets_[nb.index][b];
  for (double& v : h) v /= static_cast<double>(nbs.size());
  return h;
}

Histogram KnnHistogramModel::predict(const Window& query) const { return average(index_.nearest(query, k_)); }

std::vector<Histogram> KnnHistogramModel::predict(std::span<const Window> queries) const {
  std::vector<Histogram> out;
  out.reserve(queries.size());
  for (const auto& nbs : index_.nearest_batch(queries, k_)) out.push_back(average(nbs));
  return out;
}

double knn_predict_point(std::span<const Window> train, std::span<const double> targets,
                         const Window& query, std::size_t k) {
  return KnnPointModel(train, targets, k).predict(query);
}

Histogram knn_predict_histogram(std::span<const Window> train, std::span<const Histogram> targets,
                                const Window& query, std::size_t k) {
  return KnnHistogramModel(train, targets, k).predict(query);
}

double LinearModel::predict(const Window& w) const {
  double y = intercept;
  for (std::size_t j = 0; j < kWindowSize; ++j) y += weights[j] * w[j];
  return y;
}

std::vector<double> LinearModel::predict(std::span<const Window> ws) const {
  std::vector<double> out;
  out.reserve(ws.size());
  for (const auto& w : ws) out.push_back(predict(w));
  return out;
}

LinearModel linear_fit(std::span<const Window> windows, std::span<const double> targets, double ridge) {
  if (windows.empty() || windows.size() != targets.size())
    throw DomainError("linear_fit: need matching non-empty windows and targets");
  constexpr std::size_t P = kWindowSize + 1;
  const std::size_t n = windows.size();
  Matrix X(n, P), y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(windows[i].begin(), windows[i].end(), X.row(i).begin());
    X(i, kWindowSize) = 1.0;
    y(i, 0) = targets[i];
  }
  Matrix A, rhs;
  matmul_at_b(X, X, A);
  matmul_at_b(X, y, rhs);
  for (std::size_t j = 0; j < P; ++j) A(j, j) += ridge;

  // Cholesky A = L L^T, in place in the lower triangle.
  for (std::size_t j = 0; j < P; ++j) {
    double d = A(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= A(j, k) * A(j, k);
    if (!(d > 0.0) || !std::isfinite(d))
      throw NumericError("linear_fit: normal equations are rank-deficient beyond ridge damping");
    const double ljj = std::sqrt(d);
    A(j, j) = ljj;
    for (std::size_t i = j + 1; i < P; ++i) {
      double s = A(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= A(i, k) * A(j, k);
      A(i, j) = s / ljj;
    }
  }
  std::vector<double> z(P), beta(P);
  for (std::size_t i = 0; i < P; ++i) {
    double s = rhs(i, 0);
    for (std::size_t k = 0; k < i; ++k) s -= A(i, k) * z[k];
    z[i] = s / A(i, i);
  }
  for (std::size_t i = P; i-- > 0;) {
    double s = z[i];
    for (std::size_t k = i + 1; k < P; ++k) s -= A(k, i) * beta[k];
    beta[i] = s / A(i, i);
  }
  LinearModel m;
  m.weights.assign(beta.begin(), beta.begin() + kWindowSize);
  m.intercept = beta[kWindowSize];
  return m;
}

}  // namespace delfi
