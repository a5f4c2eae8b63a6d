#include "delfi/nn.hpp"

#include <algorithm>
#include <cmath>

namespace delfi::nn {

namespace {

double sig(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

}  // namespace

Matrix dense_forward(const DenseParams& p, const Matrix& x) {
  require(x.cols() == p.weight.rows() && p.bias.cols() == p.weight.cols(), "dense_forward: shape mismatch");
  Matrix y;
  matmul(x, p.weight, y);
  add_row_bias(y, p.bias);
  return y;
}

DenseGrads dense_backward(const DenseParams& p, const Matrix& x, const Matrix& dy) {
  require(dy.rows() == x.rows() && dy.cols() == p.weight.cols(), "dense_backward: shape mismatch");
  DenseGrads g;
  matmul_at_b(x, dy, g.weight);
  column_sums(dy, g.bias);
  matmul_a_bt(dy, p.weight, g.input);
  return g;
}

LstmParams make_lstm(std::size_t input_size, std::size_t hidden_size) {
  require(input_size > 0 && hidden_size > 0, "make_lstm: sizes must be positive");
  return {Matrix(input_size, 4 * hidden_size), Matrix(hidden_size, 4 * hidden_size),
          Matrix(1, 4 * hidden_size)};
}

LstmOutput lstm_forward(const LstmParams& p, const std::vector<Matrix>& sequence, const Matrix& h0,
                        const Matrix& c0) {
  const std::size_t H = p.hidden_size(), D = p.input_size();
  require(!sequence.empty(), "lstm_forward: empty sequence");
  require(p.w_input.cols() == 4 * H && p.w_hidden.cols() == 4 * H && p.bias.rows() == 1 &&
              p.bias.cols() == 4 * H,
          "lstm_forward: inconsistent parameter shapes");
  const std::size_t B = sequence.front().rows();
  require(h0.rows() == B && h0.cols() == H && c0.same_shape(h0), "lstm_forward: bad initial state");

  LstmOutput out;
  auto& cache = out.cache;
  cache.inputs = sequence;
  cache.hiddens.push_back(h0);
  cache.cells.push_back(c0);
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const Matrix& x = sequence[t];
    require(x.rows() == B && x.cols() == D, "lstm_forward: input shape mismatch");
    Matrix a;
    matmul(x, p.w_input, a);
    matmul(cache.hiddens.back(), p.w_hidden, a, true);
    add_row_bias(a, p.bias);
    Matrix c(B, H), h(B, H), tc(B, H);
    const Matrix& c_prev = cache.cells.back();
    for (std::size_t b = 0; b < B; ++b) {
      auto g = a.row(b);
      for (std::size_t j = 0; j < H; ++j) {
        g[j] = sig(g[j]);
        g[H + j] = sig(g[H + j]);
        g[2 * H + j] = std::tanh(g[2 * H + j]);
        g[3 * H + j] = sig(g[3 * H + j]);
        c(b, j) = g[H + j] * c_prev(b, j) + g[j] * g[2 * H + j];
        tc(b, j) = std::tanh(c(b, j));
        h(b, j) = g[3 * H + j] * tc(b, j);
      }
    }
    require_finite(c, "lstm cell state");
    cache.gates.push_back(std::move(a));
    cache.cells.push_back(std::move(c));
    cache.cell_tanh.push_back(std::move(tc));
    cache.hiddens.push_back(h);
    out.hidden.push_back(std::move(h));
  }
  out.final_hidden = cache.hiddens.back();
  out.final_cell = cache.cells.back();
  return out;
}

LstmGrads lstm_backward(const LstmParams& p, const LstmCache& cache,
                        const std::vector<Matrix>& d_hidden) {
  const std::size_t T = cache.gates.size();
  const std::size_t H = p.hidden_size();
  require(T > 0 && d_hidden.size() == T, "lstm_backward: gradient/cache length mismatch");
  const std::size_t B = cache.gates.front().rows();

  LstmGrads g;
  g.w_input = Matrix(p.w_input.rows(), p.w_input.cols());
  g.w_hidden = Matrix(p.w_hidden.rows(), p.w_hidden.cols());
  g.bias = Matrix(1, 4 * H);
  g.inputs.resize(T);

  Matrix dh_next(B, H), dc_next(B, H);
  Matrix da(B, 4 * H);
  for (std::size_t t = T; t-- > 0;) {
    require(d_hidden[t].rows() == B && d_hidden[t].cols() == H, "lstm_backward: gradient shape mismatch");
    const Matrix& gates = cache.gates[t];
    const Matrix& c_prev = cache.cells[t];
    const Matrix& tc = cache.cell_tanh[t];
    for (std::size_t b = 0; b < B; ++b) {
      auto gr = gates.row(b);
      auto dar = da.row(b);
      for (std::size_t j = 0; j < H; ++j) {
        const double i = gr[j], f = gr[H + j], cg = gr[2 * H + j], o = gr[3 * H + j];
        const double dh = d_hidden[t](b, j) + dh_next(b, j);
        const double dc = dh * o * (1.0 - tc(b, j) * tc(b, j)) + dc_next(b, j);
        dar[j] = dc * cg * i * (1.0 - i);
        dar[H + j] = dc * c_prev(b, j) * f * (1.0 - f);
        dar[2 * H + j] = dc * i * (1.0 - cg * cg);
        dar[3 * H + j] = dh * tc(b, j) * o * (1.0 - o);
        dc_next(b, j) = dc * f;
      }
    }
    matmul_at_b(cache.inputs[t], da, g.w_input, true);
    matmul_at_b(cache.hiddens[t], da, g.w_hidden, true);
    column_sums(da, g.bias, true);
    matmul_a_bt(da, p.w_input, g.inputs[t]);
    matmul_a_bt(da, p.w_hidden, dh_next);
  }
  g.h0 = std::move(dh_next);
  g.c0 = std::move(dc_next);
  return g;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix y(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto out = y.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) sum += out[c] = std::exp(in[c] - mx);
    for (double& v : out) v /= sum;
  }
  return y;
}

Matrix softmax_backward(const Matrix& y, const Matrix& dy) {
  require(y.same_shape(dy), "softmax_backward: shape mismatch");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) dot += y(r, c) * dy(r, c);
    for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (dy(r, c) - dot);
  }
  return dx;
}

LossResult mse_loss(const Matrix& pred, const Matrix& target) {
  require(pred.same_shape(target) && !pred.empty(), "mse_loss: shape mismatch");
  LossResult r;
  r.grad = Matrix(pred.rows(), pred.cols());
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    r.loss += d * d;
    r.grad.data()[i] = 2.0 * d / n;
  }
  r.loss /= n;
  return r;
}

Histogram smooth_histogram(std::span<const double> h) {
  require(h.size() == kBinCount, "smooth_histogram: expected 6 bins");
  Histogram s;
  double total = 0.0;
  for (std::size_t k = 0; k < kBinCount; ++k) total += s[k] = h[k] + kKlSmoothing;
  for (double& v : s) v /= total;
  return s;
}

double kl_divergence(std::span<const double> target, std::span<const double> pred) {
  const auto t = smooth_histogram(target);
  const auto p = smooth_histogram(pred);
  double kl = 0.0;
  for (std::size_t k = 0; k < kBinCount; ++k) kl += t[k] * std::log(t[k] / p[k]);
  return kl;
}

LossResult kl_loss(const Matrix& target, const Matrix& pred) {
  require(pred.same_shape(target) && pred.cols() == kBinCount && pred.rows() > 0,
          "kl_loss: expected matching B x 6 histograms");
  LossResult r;
  r.grad = Matrix(pred.rows(), pred.cols());
  const double B = static_cast<double>(pred.rows());
  for (std::size_t b = 0; b < pred.rows(); ++b) {
    const auto t = smooth_histogram(target.row(b));
    double total = 0.0;
    for (double v : pred.row(b)) total += v + kKlSmoothing;
    for (std::size_t k = 0; k < kBinCount; ++k) {
      const double p = (pred(b, k) + kKlSmoothing) / total;
      r.loss += t[k] * std::log(t[k] / p);
    }
    // d/dpred_j of -sum_k t_k log((pred_k + e) / total), total = sum(pred) + 6e
    for (std::size_t j = 0; j < kBinCount; ++j)
      r.grad(b, j) = (-t[j] / (pred(b, j) + kKlSmoothing) + 1.0 / total) / B;
  }
  r.loss /= B;
  return r;
}

AdamState::AdamState(std::span<const Matrix* const> params, AdamConfig cfg) : cfg_(cfg) {
  for (const Matrix* p : params) {
    m_.emplace_back(p->rows(), p->cols());
    v_.emplace_back(p->rows(), p->cols());
  }
}

AdamState AdamState::restore(AdamConfig cfg, std::uint64_t steps, std::vector<Matrix> m,
                             std::vector<Matrix> v) {
  require(m.size() == v.size(), "AdamState::restore: moment count mismatch");
  AdamState s;
  s.cfg_ = cfg;
  s.steps_ = steps;
  s.m_ = std::move(m);
  s.v_ = std::move(v);
  return s;
}

void AdamState::step(std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
  require(params.size() == m_.size() && grads.size() == m_.size(), "adam_step: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    require(params[i]->same_shape(m_[i]) && grads[i]->same_shape(m_[i]), "adam_step: shape mismatch");
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* w = params[i]->data();
    const double* g = grads[i]->data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t j = 0; j < m_[i].size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

double clip_global_norm(std::span<Matrix* const> grads, double max_norm) {
  double ss = 0.0;
  for (const Matrix* g : grads)
    for (double v : g->values()) ss += v * v;
  const double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Matrix* g : grads)
      for (double& v : g->values()) v *= scale;
  }
  return norm;
}

void init_uniform(Matrix& m, double limit, Rng& rng) {
  for (double& v : m.values()) v = rng.uniform(-limit, limit);
}

GradCheckReport grad_check(const std::function<double()>& loss, std::span<Matrix* const> params,
                           std::span<const std::string> names, std::span<const Matrix> analytic,
                           double tolerance, double step) {
  require(params.size() == names.size() && params.size() == analytic.size(),
          "grad_check: block count mismatch");
  GradCheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    Matrix& p = *params[b];
    require(p.same_shape(analytic[b]), "grad_check: analytic gradient shape mismatch");
    BlockError be{names[b], p.size(), 0.0};
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double orig = p.data()[j];
      p.data()[j] = orig + step;
      const double up = loss();
      p.data()[j] = orig - step;
      const double down = loss();
      p.data()[j] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[b].data()[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      be.max_rel_error = std::max(be.max_rel_error, std::abs(a - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, be.max_rel_error);
    report.blocks.push_back(std::move(be));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace delfi::nn
