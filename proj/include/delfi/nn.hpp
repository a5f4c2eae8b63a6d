#pragma once

// Differentiable building blocks: dense layer, LSTM with BPTT, softmax,
// MSE/KL losses, Adam, global-norm clipping and a finite-difference checker.
// All batched: rows of a Matrix are examples.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "delfi/data_model.hpp"
#include "delfi/rng.hpp"
#include "delfi/tensor.hpp"

namespace delfi::nn {

// ---------------------------------------------------------------------------
// Dense

struct DenseParams {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

/// y = x * W + b
Matrix dense_forward(const DenseParams& p, const Matrix& x);

struct DenseGrads {
  Matrix weight;
  Matrix bias;
  Matrix input;
};

DenseGrads dense_backward(const DenseParams& p, const Matrix& x, const Matrix& dy);

// ---------------------------------------------------------------------------
// LSTM
//
// Gate blocks are laid out [input | forget | cell | output] along the 4H axis:
//   i = sig(x Wi + h Ui + bi), f = sig(...), g = tanh(...), o = sig(...)
//   c' = f*c + i*g,  h' = o*tanh(c')

struct LstmParams {
  Matrix w_input;   // D x 4H
  Matrix w_hidden;  // H x 4H
  Matrix bias;      // 1 x 4H

  std::size_t input_size() const { return w_input.rows(); }
  std::size_t hidden_size() const { return w_hidden.rows(); }
};

LstmParams make_lstm(std::size_t input_size, std::size_t hidden_size);

struct LstmCache {
  std::vector<Matrix> inputs;  // T x (B x D)
  std::vector<Matrix> gates;   // T x (B x 4H), post-activation
  std::vector<Matrix> cells;   // T+1 x (B x H), cells[0] = c0
  std::vector<Matrix> hiddens; // T+1 x (B x H), hiddens[0] = h0
  std::vector<Matrix> cell_tanh;  // T x (B x H)
};

struct LstmOutput {
  std::vector<Matrix> hidden;  // T x (B x H)
  Matrix final_hidden;
  Matrix final_cell;
  LstmCache cache;
};

/// Throws DomainError on shape mismatch, NumericError on non-finite state.
LstmOutput lstm_forward(const LstmParams& p, const std::vector<Matrix>& sequence, const Matrix& h0,
                        const Matrix& c0);

struct LstmGrads {
  Matrix w_input;
  Matrix w_hidden;
  Matrix bias;
  std::vector<Matrix> inputs;  // T x (B x D)
  Matrix h0;
  Matrix c0;
};

/// Exact BPTT. `d_hidden[t]` is the upstream gradient on hidden output t.
LstmGrads lstm_backward(const LstmParams& p, const LstmCache& cache,
                        const std::vector<Matrix>& d_hidden);

// ---------------------------------------------------------------------------
// Activations and losses

/// Row-wise numerically stable softmax.
Matrix softmax_rows(const Matrix& logits);
/// dlogits given softmax output `y` and upstream dy, row-wise.
Matrix softmax_backward(const Matrix& y, const Matrix& dy);

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d prediction, same shape as prediction
};

/// Mean over all entries of (pred - target)^2.
LossResult mse_loss(const Matrix& pred, const Matrix& target);

inline constexpr double kKlSmoothing = 1e-6;

/// Adds `kKlSmoothing` to each bin and renormalizes.
Histogram smooth_histogram(std::span<const double> h);

/// KL(target || pred) for one pair of histograms, both smoothed first.
double kl_divergence(std::span<const double> target, std::span<const double> pred);

/// Mean over rows of smoothed KL(target_row || pred_row), with the gradient
/// w.r.t. the unsmoothed prediction.
LossResult kl_loss(const Matrix& target, const Matrix& pred);

// ---------------------------------------------------------------------------
// Optimization

struct AdamConfig {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::span<const Matrix* const> params, AdamConfig cfg = {});

  /// Bias-corrected Adam update of `params` in place.
  void step(std::span<Matrix* const> params, std::span<const Matrix* const> grads);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Matrix>& first_moment() const { return m_; }
  const std::vector<Matrix>& second_moment() const { return v_; }

  /// Rebuilds a state from serialized parts.
  static AdamState restore(AdamConfig cfg, std::uint64_t steps, std::vector<Matrix> m,
                           std::vector<Matrix> v);

 private:
  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

/// Scales grads so their joint L2 norm is at most max_norm; returns the
/// norm before scaling.
double clip_global_norm(std::span<Matrix* const> grads, double max_norm);

/// Uniform in [-limit, limit].
void init_uniform(Matrix& m, double limit, Rng& rng);

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct BlockError {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<BlockError> blocks;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries
/// whose true gradient is ~0 from reporting finite-difference noise as error.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares `analytic[b]` against central differences of `loss` w.r.t. each
/// entry of `params[b]` (perturbed in place and restored).
GradCheckReport grad_check(const std::function<double()>& loss, std::span<Matrix* const> params,
                           std::span<const std::string> names, std::span<const Matrix> analytic,
                           double tolerance = 1e-4, double step = 1e-5);

}  // namespace delfi::nn
