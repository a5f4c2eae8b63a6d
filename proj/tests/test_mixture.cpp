#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "delfi/mixture.hpp"
#include "oracles.hpp"

using namespace delfi;

namespace {

Window random_window(Rng& rng) {
  Window w;
  for (auto& v : w) v = rng.normal();
  return w;
}

Batch random_batch(Variant v, std::size_t n, Rng& rng) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.inputs.push_back(random_window(rng));
    if (v == Variant::Short) {
      b.residuals.push_back(rng.normal());
    } else {
      Histogram h;
      double s = 0.0;
      for (auto& x : h) s += (x = rng.uniform());
      for (auto& x : h) x /= s;
      b.histograms.push_back(h);
    }
  }
  return b;
}

void randomize(MixtureModel& m, Rng& rng, double scale = 0.3) {
  for (auto* p : m.parameters())
    for (auto& v : p->values()) v = scale * rng.normal();
}

}  // namespace

TEST_CASE("parameter layout") {
  const MixtureModel s(ModelConfig{Variant::Short, 2, 5, 1}, 1);
  const MixtureModel l(ModelConfig{Variant::Long, 2, 5, 12}, 1);
  CHECK(s.parameters().size() == 3 * (6 + 2) + 2);
  CHECK(l.parameters().size() == 3 * 6 + 4);
  CHECK(s.parameter_names().front() == "comp0.lstm0.w_input");
  CHECK(s.parameter_names().back() == "aggregator.bias");
  CHECK(l.parameter_names().back() == "long_head.bias");
  CHECK(l.long_head().weight.rows() == 3 * 6 * 5);
  CHECK(s.aggregator().weight.rows() == kWindowSize);
  CHECK(s.group_indices(ParamGroup::Aggregator) == std::vector<std::size_t>{24, 25});
  CHECK(l.group_indices(ParamGroup::Aggregator) == std::vector<std::size_t>{18, 19, 20, 21});
  CHECK(s.component_indices(1).front() == 8);
  CHECK_THROWS_AS(MixtureModel(ModelConfig{Variant::Short, 0, 5, 1}, 1), DomainError);
}

TEST_CASE("short forward matches the compositional oracle") {
  Rng rng(21);
  MixtureModel m(ModelConfig{Variant::Short, 2, 6, 1}, 3);
  randomize(m, rng);
  std::vector<Window> ws;
  for (int i = 0; i < 5; ++i) ws.push_back(random_window(rng));
  const auto got = m.forward_short(ws);
  for (std::size_t i = 0; i < ws.size(); ++i)
    CHECK(got[i] == doctest::Approx(oracle::mixture_short(m, ws[i])).epsilon(1e-12));
}

TEST_CASE("long forward matches the compositional oracle") {
  Rng rng(22);
  MixtureModel m(ModelConfig{Variant::Long, 2, 4, 8}, 3);
  randomize(m, rng);
  std::vector<Window> ws;
  for (int i = 0; i < 4; ++i) ws.push_back(random_window(rng));
  const auto got = m.forward_long(ws);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    const auto want = oracle::mixture_long(m, ws[i]);
    for (std::size_t b = 0; b < kBinCount; ++b) CHECK(got[i][b] == doctest::Approx(want[b]).epsilon(1e-12));
    CHECK(is_valid_histogram(got[i]));
  }
}

TEST_CASE("batched and single-window forward agree across chunk boundaries") {
  Rng rng(23);
  MixtureModel m(ModelConfig{Variant::Short, 1, 3, 1}, 4);
  randomize(m, rng);
  std::vector<Window> ws;
  for (int i = 0; i < 700; ++i) ws.push_back(random_window(rng));
  const auto batch = m.forward_short(ws);
  for (std::size_t i : {0u, 511u, 512u, 699u}) CHECK(batch[i] == doctest::Approx(m.forward_short(ws[i])).epsilon(1e-13));
}

TEST_CASE("attention degeneracy: a dominant aggregator logit selects one component") {
  Rng rng(24);
  MixtureModel m(ModelConfig{Variant::Short, 1, 4, 1}, 5);
  randomize(m, rng);
  m.aggregator().weight.fill(0.0);
  m.aggregator().bias.fill(0.0);
  m.aggregator().bias(0, 1) = 800.0;
  const auto w = random_window(rng);
  const auto a = m.attention(std::span<const Window>(&w, 1));
  CHECK(a(0, 1) == doctest::Approx(1.0));
  // Equivalent model where every component equals component 1.
  MixtureModel only = m;
  only.component(0) = m.component(1);
  only.component(2) = m.component(1);
  CHECK(m.forward_short(w) == doctest::Approx(only.forward_short(w)).epsilon(1e-12));
}

TEST_CASE("uniform attention averages the components") {
  Rng rng(25);
  MixtureModel m(ModelConfig{Variant::Short, 2, 3, 1}, 6);
  randomize(m, rng);
  m.aggregator().weight.fill(0.0);
  m.aggregator().bias.fill(0.0);
  const auto w = random_window(rng);
  double mean = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    MixtureModel solo = m;
    for (std::size_t j = 0; j < 3; ++j) solo.component(j) = m.component(k);
    mean += solo.forward_short(w) / 3.0;
  }
  CHECK(m.forward_short(w) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("permuting components together with aggregator columns leaves outputs unchanged") {
  Rng rng(26);
  for (auto v : {Variant::Short, Variant::Long}) {
    MixtureModel m(ModelConfig{v, 1, 3, 6}, 7);
    randomize(m, rng);
    MixtureModel p = m;
    const std::size_t perm[3] = {2, 0, 1};
    for (std::size_t k = 0; k < 3; ++k) {
      p.component(k) = m.component(perm[k]);
      for (std::size_t i = 0; i < kWindowSize; ++i) p.aggregator().weight(i, k) = m.aggregator().weight(i, perm[k]);
      p.aggregator().bias(0, k) = m.aggregator().bias(0, perm[k]);
    }
    if (v == Variant::Long) {
      // Long head input blocks are component-major; move them with the components.
      const std::size_t block = kWindowLength * 3;
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t r = 0; r < block; ++r)
          for (std::size_t b = 0; b < kBinCount; ++b)
            p.long_head().weight(k * block + r, b) = m.long_head().weight(perm[k] * block + r, b);
    }
    const auto w = random_window(rng);
    if (v == Variant::Short) {
      CHECK(p.forward_short(w) == doctest::Approx(m.forward_short(w)).epsilon(1e-12));
    } else {
      const auto a = p.forward_long(w), b = m.forward_long(w);
      for (std::size_t i = 0; i < kBinCount; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero heads: short predicts zero, long predicts uniform") {
  Rng rng(27);
  MixtureModel s(ModelConfig{Variant::Short, 2, 4, 1}, 8), l(ModelConfig{Variant::Long, 2, 4, 12}, 8);
  s.zero_output_heads();
  l.zero_output_heads();
  for (int i = 0; i < 20; ++i) {
    const auto w = random_window(rng);
    CHECK(s.forward_short(w) == 0.0);
    for (double p : l.forward_long(w)) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  }
}

TEST_CASE("variant misuse is a usage error") {
  const MixtureModel s(ModelConfig{Variant::Short, 1, 2, 1}, 1);
  const Window w{};
  CHECK_THROWS_AS(s.forward_long(w), UsageError);
  CHECK_THROWS_AS(parse_variant("medium"), UsageError);
}

TEST_CASE("gradients match central differences for both variants") {
  Rng rng(28);
  for (auto v : {Variant::Short, Variant::Long}) {
    MixtureModel m(ModelConfig{v, 2, 4, 6}, 9);
    const auto batch = random_batch(v, 4, rng);
    std::vector<Matrix> grads;
    m.loss(batch, &grads);
    const auto report = nn::grad_check([&] { return m.loss(batch); }, m.parameters(), m.parameter_names(), grads);
    CHECK_MESSAGE(report.passed, to_string(v), " max rel err ", report.max_rel_error);
    CHECK(report.blocks.size() == m.parameters().size());
  }
}

TEST_CASE("forced component: gradients touch only that component and never the aggregator") {
  Rng rng(29);
  MixtureModel m(ModelConfig{Variant::Short, 1, 3, 1}, 10);
  const auto batch = random_batch(Variant::Short, 6, rng);
  std::vector<Matrix> grads;
  m.loss(batch, &grads, 1);
  const auto own = m.component_indices(1);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const bool is_own = std::find(own.begin(), own.end(), i) != own.end();
    double norm = 0.0;
    for (double g : grads[i].values()) norm += g * g;
    if (is_own)
      CHECK(norm > 0.0);
    else
      CHECK(norm == 0.0);
  }
  // With component 1 forced, the loss equals that component's MSE alone.
  MixtureModel solo = m;
  solo.aggregator().weight.fill(0.0);
  solo.aggregator().bias.fill(0.0);
  solo.aggregator().bias(0, 1) = 1e3;
  CHECK(m.loss(batch, nullptr, 1) == doctest::Approx(solo.loss(batch)).epsilon(1e-12));
}

TEST_CASE("model serialization round trip") {
  Rng rng(30);
  for (auto v : {Variant::Short, Variant::Long}) {
    MixtureModel m(ModelConfig{v, 2, 3, 24}, 11);
    randomize(m, rng);
    std::array<double, kFeatureCount> mean{}, sd{};
    sd.fill(2.0);
    TrainedModel tm{m, Standardizer(mean, sd), 3.5, v == Variant::Long};
    const auto path = std::filesystem::temp_directory_path() / "delfi_model_roundtrip.bin";
    save_model(path, tm);
    const auto back = load_model(path);
    CHECK(back.model == m);
    CHECK(back.residual_scale == 3.5);
    CHECK(back.ablate_nef == (v == Variant::Long));
    CHECK(back.model.config().horizon == 24);
    CHECK(back.standardizer.stddev() == sd);
    std::filesystem::remove(path);
  }
  std::stringstream junk("DELFIMDLxxxxxxxx");
  io::BinaryReader r(junk);
  CHECK_THROWS_AS(read_model(r), FormatError);
}
