#include <doctest.h>

#include <cmath>
#include <numbers>

#include "delfi/nn.hpp"
#include "oracles.hpp"

using namespace delfi;
using namespace delfi::nn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = scale * rng.normal();
  return m;
}

LstmParams random_lstm(std::size_t D, std::size_t H, Rng& rng) {
  auto p = make_lstm(D, H);
  p.w_input = random_matrix(D, 4 * H, rng, 0.5);
  p.w_hidden = random_matrix(H, 4 * H, rng, 0.5);
  p.bias = random_matrix(1, 4 * H, rng, 0.5);
  return p;
}

std::vector<Matrix> random_sequence(std::size_t T, std::size_t B, std::size_t D, Rng& rng) {
  std::vector<Matrix> seq;
  for (std::size_t t = 0; t < T; ++t) seq.push_back(random_matrix(B, D, rng));
  return seq;
}

}  // namespace

TEST_CASE("zero LSTM parameters give zero hidden states") {
  const auto p = make_lstm(3, 4);
  Rng rng(1);
  const auto seq = random_sequence(5, 2, 3, rng);
  const auto out = lstm_forward(p, seq, Matrix(2, 4), Matrix(2, 4));
  for (const auto& h : out.hidden)
    for (double v : h.values()) CHECK(v == 0.0);
}

TEST_CASE("scalar LSTM step matches hand evaluation") {
  auto p = make_lstm(1, 1);
  // Gate order i, f, g, o.
  const double wi[4] = {0.5, -0.3, 0.8, 0.1}, wh[4] = {0.2, 0.4, -0.6, 0.7}, b[4] = {0.1, 1.0, -0.2, 0.3};
  for (std::size_t g = 0; g < 4; ++g) {
    p.w_input(0, g) = wi[g];
    p.w_hidden(0, g) = wh[g];
    p.bias(0, g) = b[g];
  }
  const double x = 0.9, h0 = 0.25, c0 = -0.4;
  Matrix hm(1, 1, h0), cm(1, 1, c0), xm(1, 1, x);
  const auto out = lstm_forward(p, {xm}, hm, cm);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double i = sig(wi[0] * x + wh[0] * h0 + b[0]);
  const double f = sig(wi[1] * x + wh[1] * h0 + b[1]);
  const double g = std::tanh(wi[2] * x + wh[2] * h0 + b[2]);
  const double o = sig(wi[3] * x + wh[3] * h0 + b[3]);
  const double c = f * c0 + i * g;
  const double h = o * std::tanh(c);
  CHECK(out.final_cell(0, 0) == doctest::Approx(c).epsilon(1e-14));
  CHECK(out.final_hidden(0, 0) == doctest::Approx(h).epsilon(1e-14));
}

TEST_CASE("multi-step LSTM matches the loop oracle") {
  Rng rng(7);
  const auto p = random_lstm(3, 4, rng);
  const auto seq = random_sequence(5, 1, 3, rng);
  const auto out = lstm_forward(p, seq, Matrix(1, 4), Matrix(1, 4));
  std::vector<std::vector<double>> xs;
  for (const auto& m : seq) xs.emplace_back(m.values().begin(), m.values().end());
  const auto want = oracle::lstm_sequence(p, xs);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.hidden[t](0, j) == doctest::Approx(want[t][j]).epsilon(1e-13));
}

TEST_CASE("without recurrence a constant input gives identical steps") {
  Rng rng(3);
  auto p = random_lstm(2, 3, rng);
  p.w_hidden.fill(0.0);
  // Forget gate forced shut so the cell does not accumulate.
  for (std::size_t j = 0; j < 3; ++j) p.bias(0, 3 + j) = -1e3;
  Matrix x(1, 2);
  x(0, 0) = 0.3;
  x(0, 1) = -1.1;
  const auto out = lstm_forward(p, std::vector<Matrix>(12, x), Matrix(1, 3), Matrix(1, 3));
  for (std::size_t t = 1; t < 12; ++t) CHECK(out.hidden[t] == out.hidden[0]);
}

TEST_CASE("LSTM backward matches central differences") {
  Rng rng(11);
  constexpr std::size_t D = 3, H = 4, T = 5, B = 2;
  auto p = random_lstm(D, H, rng);
  const auto seq = random_sequence(T, B, D, rng);
  std::vector<Matrix> upstream;
  for (std::size_t t = 0; t < T; ++t) upstream.push_back(random_matrix(B, H, rng));
  const Matrix zeros(B, H);
  auto loss = [&] {
    const auto out = lstm_forward(p, seq, zeros, zeros);
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < out.hidden[t].size(); ++i) s += out.hidden[t].data()[i] * upstream[t].data()[i];
    return s;
  };
  const auto out = lstm_forward(p, seq, zeros, zeros);
  const auto g = lstm_backward(p, out.cache, upstream);
  Matrix* params[] = {&p.w_input, &p.w_hidden, &p.bias};
  const std::string names[] = {"w_input", "w_hidden", "bias"};
  const Matrix analytic[] = {g.w_input, g.w_hidden, g.bias};
  const auto report = grad_check(loss, params, names, analytic);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-4);
  REQUIRE(report.blocks.size() == 3);
  CHECK(report.blocks[0].count == D * 4 * H);
}

TEST_CASE("LSTM backward: zero upstream and linearity") {
  Rng rng(5);
  const auto p = random_lstm(3, 4, rng);
  const auto seq = random_sequence(4, 2, 3, rng);
  const Matrix zeros(2, 4);
  const auto out = lstm_forward(p, seq, zeros, zeros);

  const auto g0 = lstm_backward(p, out.cache, std::vector<Matrix>(4, Matrix(2, 4)));
  for (double v : g0.w_input.values()) CHECK(v == 0.0);
  for (double v : g0.bias.values()) CHECK(v == 0.0);

  std::vector<Matrix> u1, u2, sum;
  for (int t = 0; t < 4; ++t) {
    u1.push_back(random_matrix(2, 4, rng));
    u2.push_back(random_matrix(2, 4, rng));
    Matrix s(2, 4);
    for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] = u1.back().data()[i] + u2.back().data()[i];
    sum.push_back(s);
  }
  const auto a = lstm_backward(p, out.cache, u1), b = lstm_backward(p, out.cache, u2),
             c = lstm_backward(p, out.cache, sum);
  for (std::size_t i = 0; i < c.w_hidden.size(); ++i)
    CHECK(c.w_hidden.data()[i] == doctest::Approx(a.w_hidden.data()[i] + b.w_hidden.data()[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < c.inputs[0].size(); ++i)
    CHECK(c.inputs[0].data()[i] == doctest::Approx(a.inputs[0].data()[i] + b.inputs[0].data()[i]).epsilon(1e-12));
}

TEST_CASE("dense layer forward and backward") {
  Rng rng(8);
  DenseParams p{random_matrix(4, 3, rng), random_matrix(1, 3, rng)};
  const auto x = random_matrix(5, 4, rng);
  const auto dy = random_matrix(5, 3, rng);
  auto loss = [&] {
    const auto y = dense_forward(p, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * dy.data()[i];
    return s;
  };
  const auto g = dense_backward(p, x, dy);
  Matrix* params[] = {&p.weight, &p.bias};
  const std::string names[] = {"weight", "bias"};
  const Matrix analytic[] = {g.weight, g.bias};
  CHECK(grad_check(loss, params, names, analytic).passed);
}

TEST_CASE("softmax rows sum to one and backward matches differences") {
  Rng rng(4);
  auto z = random_matrix(3, 6, rng, 3.0);
  const auto y = softmax_rows(z);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (double v : y.row(r)) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  const auto dy = random_matrix(3, 6, rng);
  auto loss = [&] {
    const auto yy = softmax_rows(z);
    double s = 0.0;
    for (std::size_t i = 0; i < yy.size(); ++i) s += yy.data()[i] * dy.data()[i];
    return s;
  };
  Matrix* params[] = {&z};
  const std::string names[] = {"logits"};
  const Matrix analytic[] = {softmax_backward(softmax_rows(z), dy)};
  CHECK(grad_check(loss, params, names, analytic).passed);

  Matrix huge(1, 3);
  huge(0, 0) = 1000;
  const auto hy = softmax_rows(huge);
  CHECK(std::isfinite(hy(0, 1)));
  CHECK(hy(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("losses") {
  Matrix a(2, 1), b(2, 1);
  a(0, 0) = 1;
  a(1, 0) = 2;
  b = a;
  CHECK(mse_loss(a, b).loss == 0.0);
  b(1, 0) = 4;
  const auto m = mse_loss(b, a);
  CHECK(m.loss == doctest::Approx(2.0));
  CHECK(m.grad(1, 0) == doctest::Approx(2.0));

  const Histogram onehot = {1, 0, 0, 0, 0, 0};
  const Histogram uniform = {1. / 6, 1. / 6, 1. / 6, 1. / 6, 1. / 6, 1. / 6};
  // Smoothing keeps the uniform histogram uniform and lifts the empty bins to eps/(1+6 eps).
  const double e = 1e-6, hi = (1 + e) / (1 + 6 * e), lo = e / (1 + 6 * e);
  CHECK(kl_divergence(onehot, uniform) == doctest::Approx(hi * std::log(6 * hi) + 5 * lo * std::log(6 * lo)).epsilon(1e-12));
  CHECK(kl_divergence(onehot, uniform) == doctest::Approx(oracle::naive_kl(onehot, uniform)).epsilon(1e-12));
  const Histogram p = {0.1, 0.2, 0.3, 0.15, 0.05, 0.2};
  CHECK(std::abs(kl_divergence(p, p)) < 1e-15);
  CHECK(kl_divergence(onehot, Histogram{0, 1, 0, 0, 0, 0}) > 10.0);
}

TEST_CASE("kl loss gradient matches differences") {
  Rng rng(12);
  Matrix logits = random_matrix(3, 6, rng);
  Matrix target(3, 6);
  for (std::size_t r = 0; r < 3; ++r) target(r, r) = 1.0;
  auto loss = [&] { return kl_loss(target, softmax_rows(logits)).loss; };
  const auto pred = softmax_rows(logits);
  const auto kl = kl_loss(target, pred);
  Matrix* params[] = {&logits};
  const std::string names[] = {"logits"};
  const Matrix analytic[] = {softmax_backward(pred, kl.grad)};
  CHECK(grad_check(loss, params, names, analytic).passed);
}

TEST_CASE("Adam") {
  SUBCASE("one step from zero with unit gradient moves by the learning rate") {
    Matrix w(1, 1), g(1, 1, 1.0);
    const Matrix* pc[] = {&w};
    AdamState adam(pc);
    Matrix* p[] = {&w};
    const Matrix* gr[] = {&g};
    adam.step(p, gr);
    CHECK(w(0, 0) == doctest::Approx(-0.005).epsilon(1e-6));
    CHECK(adam.steps() == 1);
  }
  SUBCASE("zero gradient leaves parameters and advances the counter") {
    Matrix w(2, 2, 3.0), g(2, 2, 0.0);
    const Matrix* pc[] = {&w};
    AdamState adam(pc);
    Matrix* p[] = {&w};
    const Matrix* gr[] = {&g};
    adam.step(p, gr);
    CHECK(w == Matrix(2, 2, 3.0));
    CHECK(adam.steps() == 1);
  }
  SUBCASE("state accumulates across steps") {
    Matrix w1(1, 1), w2(1, 1), g(1, 1, 0.7), g2(1, 1, 1.4);
    const Matrix* pc1[] = {&w1};
    const Matrix* pc2[] = {&w2};
    AdamState a1(pc1), a2(pc2);
    Matrix* p1[] = {&w1};
    Matrix* p2[] = {&w2};
    const Matrix* gr[] = {&g};
    const Matrix* gr2[] = {&g2};
    a1.step(p1, gr);
    a1.step(p1, gr);
    a2.step(p2, gr2);
    CHECK(w1(0, 0) != w2(0, 0));
  }
}

TEST_CASE("global norm clipping") {
  Matrix a(1, 2), b(1, 1);
  a(0, 0) = 3;
  a(0, 1) = 0;
  b(0, 0) = 4;
  Matrix* g[] = {&a, &b};
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(a(0, 0) == 3.0);
  clip_global_norm(g, 1.0);
  CHECK(a(0, 0) == doctest::Approx(0.6));
  CHECK(b(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("grad check on a quadratic is exact") {
  Rng rng(6);
  Matrix p = random_matrix(3, 3, rng);
  auto loss = [&] {
    double s = 0.0;
    for (double v : p.values()) s += 0.5 * v * v;
    return s;
  };
  Matrix* params[] = {&p};
  const std::string names[] = {"p"};
  const Matrix analytic[] = {p};
  const auto r = grad_check(loss, params, names, analytic);
  CHECK(r.passed);
  CHECK(r.max_rel_error < 1e-9);

  Matrix wrong = p;
  wrong(0, 0) += 1.0;
  const Matrix bad[] = {wrong};
  CHECK_FALSE(grad_check(loss, params, names, bad).passed);
}
