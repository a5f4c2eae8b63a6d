// Times the OpenMP kernels against their serial counterparts and checks that
// both produce identical results.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <omp.h>

#include "delfi/baselines.hpp"
#include "delfi/mixture.hpp"
#include "delfi/rng.hpp"
#include "delfi/tensor.hpp"

using namespace delfi;

namespace {

double best_ms(const std::function<void()>& f, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double serial, double parallel, bool same) {
  std::printf("%-34s %10.2f %10.2f %8.2fx  %s\n", name, serial, parallel, serial / parallel,
              same ? "identical" : "MISMATCH");
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.normal();
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"delfi kernel benchmark"};
  int threads = 0, reps = 5;
  std::size_t n = 512;
  app.add_option("--threads", threads, "OpenMP team size (0 = runtime default)");
  app.add_option("--reps", reps, "Repetitions; the best time is reported")->capture_default_str();
  app.add_option("--size", n, "Matrix dimension / batch scale")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) set_thread_count(threads);

  std::printf("threads: %d (omp max %d)\n", thread_count(), omp_get_max_threads());
  std::printf("%-34s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");
  Rng rng(1);

  {
    const auto a = random_matrix(n, n / 2, rng), b = random_matrix(n / 2, n, rng);
    Matrix p, s;
    const double ts = best_ms([&] { reference::matmul(a, b, s); }, reps);
    const double tp = best_ms([&] { matmul(a, b, p); }, reps);
    row("matmul", ts, tp, p == s);
  }
  {
    const auto a = random_matrix(n, n / 2, rng), b = random_matrix(n, n / 2, rng);
    Matrix p, s;
    const double ts = best_ms([&] { reference::matmul_at_b(a, b, s); }, reps);
    const double tp = best_ms([&] { matmul_at_b(a, b, p); }, reps);
    row("matmul_at_b", ts, tp, p == s);
    const double ts2 = best_ms([&] { reference::matmul_a_bt(a, b, s); }, reps);
    const double tp2 = best_ms([&] { matmul_a_bt(a, b, p); }, reps);
    row("matmul_a_bt", ts2, tp2, p == s);
  }
  {
    std::vector<Window> train, queries;
    for (std::size_t i = 0; i < 8 * n; ++i) {
      Window w;
      for (auto& v : w) v = rng.normal();
      (i % 8 == 0 ? queries : train).push_back(w);
    }
    const KnnIndex index(train);
    std::vector<std::vector<Neighbor>> serial, parallel;
    const double ts = best_ms(
        [&] {
          serial.clear();
          for (const auto& q : queries) serial.push_back(index.nearest(q, 5));
        },
        reps);
    const double tp = best_ms([&] { parallel = index.nearest_batch(queries, 5); }, reps);
    row("knn scan (k=5)", ts, tp, serial == parallel);
  }
  {
    MixtureModel m(ModelConfig{Variant::Long, 2, 32, 12}, 2);
    std::vector<Window> batch;
    for (std::size_t i = 0; i < 2 * n; ++i) {
      Window w;
      for (auto& v : w) v = rng.normal();
      batch.push_back(w);
    }
    const int saved = threads;
    std::vector<Histogram> serial, parallel;
    set_thread_count(1);
    const double ts = best_ms([&] { serial = m.forward_long(batch); }, reps);
    set_thread_count(saved);
    const double tp = best_ms([&] { parallel = m.forward_long(batch); }, reps);
    row("long forward (2x32 LSTM)", ts, tp, serial == parallel);
  }
  return 0;
}
