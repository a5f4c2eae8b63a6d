#include "delfi/tensor.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "delfi/data_model.hpp"

namespace delfi {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

int g_threads = 0;

int team_size(std::size_t work) {
  if (work < kParallelWork) return 1;
  return g_threads > 0 ? g_threads : omp_get_max_threads();
}

void prepare(Matrix& out, std::size_t rows, std::size_t cols, bool accumulate, const char* op) {
  if (accumulate) {
    if (out.rows() != rows || out.cols() != cols)
      throw DomainError(std::string(op) + ": accumulator shape mismatch");
  } else if (out.rows() != rows || out.cols() != cols) {
    out = Matrix(rows, cols);
  } else {
    out.fill(0.0);
  }
}

void check(bool ok, const char* op) {
  if (!ok) throw DomainError(std::string(op) + ": shape mismatch");
}

}  // namespace

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_finite(const Matrix& m, const char* what) {
  for (double v : m.values())
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

void set_thread_count(int threads) { g_threads = threads; }
int thread_count() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check(a.cols() == b.rows(), "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  prepare(out, m, n, accumulate, "matmul");
  const double* A = a.data();
  const double* B = b.data();
  double* C = out.data();
#pragma omp parallel for schedule(static) num_threads(team_size(m * k * n))
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check(a.rows() == b.rows(), "matmul_at_b");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  prepare(out, m, n, accumulate, "matmul_at_b");
  const double* A = a.data();
  const double* B = b.data();
  double* C = out.data();
#pragma omp parallel for schedule(static) num_threads(team_size(m * k * n))
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (std::size_t r = 0; r < k; ++r) {
      const double ari = A[r * m + i];
      const double* brow = B + r * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ari * brow[j];
    }
  }
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check(a.cols() == b.cols(), "matmul_a_bt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  prepare(out, m, n, accumulate, "matmul_a_bt");
  const double* A = a.data();
  const double* B = b.data();
  double* C = out.data();
#pragma omp parallel for schedule(static) num_threads(team_size(m * k * n))
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = B + j * k;
      double s = C[i * n + j];
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      C[i * n + j] = s;
    }
  }
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  check(bias.rows() == 1 && bias.cols() == m.cols(), "add_row_bias");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias(0, c);
  }
}

void column_sums(const Matrix& m, Matrix& out, bool accumulate) {
  prepare(out, 1, m.cols(), accumulate, "column_sums");
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += m(r, c);
}

namespace reference {

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check(a.cols() == b.rows(), "matmul");
  prepare(out, a.rows(), b.cols(), accumulate, "matmul");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = out(i, j);
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      out(i, j) = s;
    }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check(a.rows() == b.rows(), "matmul_at_b");
  prepare(out, a.cols(), b.cols(), accumulate, "matmul_at_b");
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = out(i, j);
      for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, i) * b(r, j);
      out(i, j) = s;
    }
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  check(a.cols() == b.cols(), "matmul_a_bt");
  prepare(out, a.rows(), b.rows(), accumulate, "matmul_a_bt");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = out(i, j);
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      out(i, j) = s;
    }
}

}  // namespace reference

}  // namespace delfi
