#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace delfi {

/// Dense row-major 2-D array of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

// Kernels. Output rows are distributed over OpenMP threads; each element is
// accumulated in a fixed order, so results do not depend on the thread count.
// With accumulate=false the output is resized and overwritten.

/// out (m x n) = a (m x k) * b (k x n)
void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
/// out (m x n) = a^T * b, a is (k x m), b is (k x n)
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
/// out (m x n) = a * b^T, a is (m x k), b is (n x k)
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

/// m.row(r) += bias.row(0) for every row.
void add_row_bias(Matrix& m, const Matrix& bias);
/// out.row(0) (+)= column sums of m.
void column_sums(const Matrix& m, Matrix& out, bool accumulate = false);

/// Single-threaded textbook kernels, same accumulation order as above; used
/// by tests and the benchmark as the reference.
namespace reference {
void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
}  // namespace reference

/// Caps the OpenMP team size used by the kernels (<= 0 keeps the default).
void set_thread_count(int threads);
int thread_count();

}  // namespace delfi
