#include "delfi/mixture.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include "delfi/rng.hpp"

namespace delfi {

std::string_view to_string(Variant v) { return v == Variant::Short ? "short" : "long"; }

Variant parse_variant(std::string_view text) {
  if (text == "short") return Variant::Short;
  if (text == "long") return Variant::Long;
  throw UsageError("variant must be 'short' or 'long', got '" + std::string(text) + "'");
}

namespace {

constexpr std::size_t kForwardChunk = 512;

std::vector<Matrix> step_inputs(std::span<const Window> windows) {
  std::vector<Matrix> steps(kWindowLength, Matrix(windows.size(), kFeatureCount));
  for (std::size_t b = 0; b < windows.size(); ++b)
    for (std::size_t t = 0; t < kWindowLength; ++t)
      for (std::size_t f = 0; f < kFeatureCount; ++f) steps[t](b, f) = windows[b][t * kFeatureCount + f];
  return steps;
}

Matrix flat_inputs(std::span<const Window> windows) {
  Matrix x(windows.size(), kWindowSize);
  for (std::size_t b = 0; b < windows.size(); ++b)
    std::copy(windows[b].begin(), windows[b].end(), x.row(b).begin());
  return x;
}

void accumulate(Matrix& into, const Matrix& g) {
  for (std::size_t i = 0; i < into.size(); ++i) into.data()[i] += g.data()[i];
}

}  // namespace

MixtureModel::MixtureModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.layers == 0 || cfg.hidden == 0) throw DomainError("model needs layers >= 1 and hidden >= 1");
  if (cfg.horizon < 1) throw DomainError("model horizon must be >= 1");
  Rng rng(derive_seed(seed, 0x4d4f44454cULL));
  const std::size_t H = cfg.hidden;
  const double lstm_limit = 1.0 / std::sqrt(static_cast<double>(H));
  components_.resize(kComponentCount);
  for (auto& comp : components_) {
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      auto p = nn::make_lstm(l == 0 ? kFeatureCount : H, H);
      nn::init_uniform(p.w_input, lstm_limit, rng);
      nn::init_uniform(p.w_hidden, lstm_limit, rng);
      for (std::size_t j = 0; j < H; ++j) p.bias(0, H + j) = 1.0;
      comp.layers.push_back(std::move(p));
    }
    if (cfg.variant == Variant::Short) {
      comp.head = {Matrix(H, 1), Matrix(1, 1)};
      nn::init_uniform(comp.head.weight, lstm_limit, rng);
    }
  }
  aggregator_ = {Matrix(kWindowSize, kComponentCount), Matrix(1, kComponentCount)};
  nn::init_uniform(aggregator_.weight, 1.0 / std::sqrt(static_cast<double>(kWindowSize)), rng);
  if (cfg.variant == Variant::Long) {
    const std::size_t fan_in = kComponentCount * kWindowLength * H;
    long_head_ = {Matrix(fan_in, kBinCount), Matrix(1, kBinCount)};
    nn::init_uniform(long_head_.weight, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  }
}

std::vector<Matrix*> MixtureModel::parameters() {
  std::vector<Matrix*> out;
  for (auto& comp : components_) {
    for (auto& l : comp.layers) {
      out.push_back(&l.w_input);
      out.push_back(&l.w_hidden);
      out.push_back(&l.bias);
    }
    if (cfg_.variant == Variant::Short) {
      out.push_back(&comp.head.weight);
      out.push_back(&comp.head.bias);
    }
  }
  out.push_back(&aggregator_.weight);
  out.push_back(&aggregator_.bias);
  if (cfg_.variant == Variant::Long) {
    out.push_back(&long_head_.weight);
    out.push_back(&long_head_.bias);
  }
  return out;
}

std::vector<const Matrix*> MixtureModel::parameters() const {
  auto mut = const_cast<MixtureModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> MixtureModel::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto c = "comp" + std::to_string(k);
    for (std::size_t l = 0; l < components_[k].layers.size(); ++l) {
      const auto p = c + ".lstm" + std::to_string(l);
      out.push_back(p + ".w_input");
      out.push_back(p + ".w_hidden");
      out.push_back(p + ".bias");
    }
    if (cfg_.variant == Variant::Short) {
      out.push_back(c + ".head.weight");
      out.push_back(c + ".head.bias");
    }
  }
  out.push_back("aggregator.weight");
  out.push_back("aggregator.bias");
  if (cfg_.variant == Variant::Long) {
    out.push_back("long_head.weight");
    out.push_back("long_head.bias");
  }
  return out;
}

std::vector<ParamGroup> MixtureModel::parameter_groups() const {
  const std::size_t per_comp = 3 * cfg_.layers + (cfg_.variant == Variant::Short ? 2 : 0);
  std::vector<ParamGroup> g(per_comp * kComponentCount, ParamGroup::Components);
  const std::size_t agg = cfg_.variant == Variant::Long ? 4 : 2;
  g.insert(g.end(), agg, ParamGroup::Aggregator);
  return g;
}

std::vector<std::size_t> MixtureModel::group_indices(ParamGroup group) const {
  std::vector<std::size_t> out;
  const auto g = parameter_groups();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i] == group) out.push_back(i);
  return out;
}

std::vector<std::size_t> MixtureModel::component_indices(std::size_t k) const {
  if (k >= kComponentCount) throw DomainError("component index out of range");
  const std::size_t per_comp = 3 * cfg_.layers + (cfg_.variant == Variant::Short ? 2 : 0);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < per_comp; ++i) out.push_back(k * per_comp + i);
  return out;
}

void MixtureModel::zero_output_heads() {
  if (cfg_.variant == Variant::Short) {
    for (auto& c : components_) {
      c.head.weight.fill(0.0);
      c.head.bias.fill(0.0);
    }
  } else {
    long_head_.weight.fill(0.0);
    long_head_.bias.fill(0.0);
  }
}

struct MixtureModel::Cache {
  Matrix flat;
  std::vector<Matrix> steps;
  std::array<bool, kComponentCount> active{};
  std::array<std::vector<nn::LstmOutput>, kComponentCount> layers;
  std::array<Matrix, kComponentCount> residual;  // B x 1, short variant
  Matrix attention;                              // B x 3
  bool forced = false;
  Matrix concat;  // B x (3*T*H), long variant
  Matrix output;  // B x 1 (short) or B x 6 histogram (long)
};

MixtureModel::Cache MixtureModel::forward_cache(std::span<const Window> windows,
                                                std::optional<std::size_t> forced) const {
  if (windows.empty()) throw DomainError("forward: empty batch");
  if (forced && *forced >= kComponentCount) throw DomainError("forced component out of range");
  const std::size_t B = windows.size(), H = cfg_.hidden;
  Cache c;
  c.flat = flat_inputs(windows);
  c.steps = step_inputs(windows);
  c.forced = forced.has_value();

  if (forced) {
    c.attention = Matrix(B, kComponentCount);
    for (std::size_t b = 0; b < B; ++b) c.attention(b, *forced) = 1.0;
  } else {
    c.attention = nn::softmax_rows(nn::dense_forward(aggregator_, c.flat));
  }

  const Matrix zeros(B, H);
  for (std::size_t k = 0; k < kComponentCount; ++k) {
    c.active[k] = !forced || *forced == k;
    if (!c.active[k]) continue;
    const std::vector<Matrix>* seq = &c.steps;
    for (const auto& layer : components_[k].layers) {
      c.layers[k].push_back(nn::lstm_forward(layer, *seq, zeros, zeros));
      seq = &c.layers[k].back().hidden;
    }
  }

  if (cfg_.variant == Variant::Short) {
    c.output = Matrix(B, 1);
    for (std::size_t k = 0; k < kComponentCount; ++k) {
      if (!c.active[k]) continue;
      c.residual[k] = nn::dense_forward(components_[k].head, c.layers[k].back().final_hidden);
      for (std::size_t b = 0; b < B; ++b) c.output(b, 0) += c.attention(b, k) * c.residual[k](b, 0);
    }
  } else {
    c.concat = Matrix(B, kComponentCount * kWindowLength * H);
    for (std::size_t k = 0; k < kComponentCount; ++k) {
      if (!c.active[k]) continue;
      const auto& hs = c.layers[k].back().hidden;
      for (std::size_t t = 0; t < kWindowLength; ++t)
        for (std::size_t b = 0; b < B; ++b) {
          const double a = c.attention(b, k);
          double* dst = c.concat.row(b).data() + (k * kWindowLength + t) * H;
          for (std::size_t j = 0; j < H; ++j) dst[j] = a * hs[t](b, j);
        }
    }
    c.output = nn::softmax_rows(nn::dense_forward(long_head_, c.concat));
  }
  require_finite(c.output, "mixture model output");
  return c;
}

Matrix MixtureModel::attention(std::span<const Window> windows) const {
  return nn::softmax_rows(nn::dense_forward(aggregator_, flat_inputs(windows)));
}

std::vector<double> MixtureModel::forward_short(std::span<const Window> windows) const {
  if (cfg_.variant != Variant::Short) throw UsageError("forward_short called on a long-term model");
  std::vector<double> out;
  out.reserve(windows.size());
  for (std::size_t start = 0; start < windows.size(); start += kForwardChunk) {
    auto chunk = windows.subspan(start, std::min(kForwardChunk, windows.size() - start));
    auto c = forward_cache(chunk, std::nullopt);
    for (std::size_t b = 0; b < chunk.size(); ++b) out.push_back(c.output(b, 0));
  }
  return out;
}

double MixtureModel::forward_short(const Window& w) const {
  return forward_short(std::span<const Window>(&w, 1)).front();
}

std::vector<Histogram> MixtureModel::forward_long(std::span<const Window> windows) const {
  if (cfg_.variant != Variant::Long) throw UsageError("forward_long called on a short-term model");
  std::vector<Histogram> out;
  out.reserve(windows.size());
  for (std::size_t start = 0; start < windows.size(); start += kForwardChunk) {
    auto chunk = windows.subspan(start, std::min(kForwardChunk, windows.size() - start));
    auto c = forward_cache(chunk, std::nullopt);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      Histogram h;
      std::copy(c.output.row(b).begin(), c.output.row(b).end(), h.begin());
      out.push_back(h);
    }
  }
  return out;
}

Histogram MixtureModel::forward_long(const Window& w) const {
  return forward_long(std::span<const Window>(&w, 1)).front();
}

double MixtureModel::loss(const Batch& batch, std::vector<Matrix>* grads,
                          std::optional<std::size_t> forced_component) const {
  const std::size_t B = batch.inputs.size();
  const std::size_t H = cfg_.hidden;
  auto c = forward_cache(batch.inputs, forced_component);

  nn::LossResult lr;
  if (cfg_.variant == Variant::Short) {
    if (batch.residuals.size() != B) throw DomainError("loss: residual target count mismatch");
    Matrix target(B, 1);
    for (std::size_t b = 0; b < B; ++b) target(b, 0) = batch.residuals[b];
    lr = nn::mse_loss(c.output, target);
  } else {
    if (batch.histograms.size() != B) throw DomainError("loss: histogram target count mismatch");
    Matrix target(B, kBinCount);
    for (std::size_t b = 0; b < B; ++b)
      std::copy(batch.histograms[b].begin(), batch.histograms[b].end(), target.row(b).begin());
    lr = nn::kl_loss(target, c.output);
  }
  if (!std::isfinite(lr.loss)) throw NumericError("non-finite loss");
  if (!grads) return lr.loss;

  // Gradients are collected in a zero-valued model of the same shape so the
  // flattening order matches parameters().
  MixtureModel g = *this;
  for (Matrix* p : g.parameters()) p->fill(0.0);

  Matrix d_att(B, kComponentCount);
  std::array<std::vector<Matrix>, kComponentCount> d_top;

  if (cfg_.variant == Variant::Short) {
    const Matrix& dout = lr.grad;
    for (std::size_t k = 0; k < kComponentCount; ++k) {
      if (!c.active[k]) continue;
      Matrix dy(B, 1);
      for (std::size_t b = 0; b < B; ++b) {
        dy(b, 0) = c.attention(b, k) * dout(b, 0);
        d_att(b, k) = c.residual[k](b, 0) * dout(b, 0);
      }
      auto hg = nn::dense_backward(components_[k].head, c.layers[k].back().final_hidden, dy);
      g.components_[k].head.weight = std::move(hg.weight);
      g.components_[k].head.bias = std::move(hg.bias);
      d_top[k].assign(kWindowLength, Matrix(B, H));
      d_top[k].back() = std::move(hg.input);
    }
  } else {
    const Matrix dlogits = nn::softmax_backward(c.output, lr.grad);
    auto hg = nn::dense_backward(long_head_, c.concat, dlogits);
    g.long_head_.weight = std::move(hg.weight);
    g.long_head_.bias = std::move(hg.bias);
    const Matrix& dz = hg.input;
    for (std::size_t k = 0; k < kComponentCount; ++k) {
      if (!c.active[k]) continue;
      const auto& hs = c.layers[k].back().hidden;
      d_top[k].assign(kWindowLength, Matrix(B, H));
      for (std::size_t t = 0; t < kWindowLength; ++t)
        for (std::size_t b = 0; b < B; ++b) {
          const double* dzr = dz.row(b).data() + (k * kWindowLength + t) * H;
          double dot = 0.0;
          for (std::size_t j = 0; j < H; ++j) {
            d_top[k][t](b, j) = c.attention(b, k) * dzr[j];
            dot += hs[t](b, j) * dzr[j];
          }
          d_att(b, k) += dot;
        }
    }
  }

  for (std::size_t k = 0; k < kComponentCount; ++k) {
    if (!c.active[k]) continue;
    std::vector<Matrix> upstream = std::move(d_top[k]);
    for (std::size_t l = cfg_.layers; l-- > 0;) {
      auto lg = nn::lstm_backward(components_[k].layers[l], c.layers[k][l].cache, upstream);
      auto& dst = g.components_[k].layers[l];
      accumulate(dst.w_input, lg.w_input);
      accumulate(dst.w_hidden, lg.w_hidden);
      accumulate(dst.bias, lg.bias);
      upstream = std::move(lg.inputs);
    }
  }

  if (!c.forced) {
    const Matrix dlogits = nn::softmax_backward(c.attention, d_att);
    auto ag = nn::dense_backward(aggregator_, c.flat, dlogits);
    g.aggregator_.weight = std::move(ag.weight);
    g.aggregator_.bias = std::move(ag.bias);
  }

  grads->clear();
  for (const Matrix* p : g.parameters()) grads->push_back(*p);
  return lr.loss;
}

namespace {
constexpr std::string_view kParamMagic = "DELFIPRM";
}

void MixtureModel::write(io::BinaryWriter& w) const {
  w.magic(kParamMagic);
  w.str(to_string(cfg_.variant));
  w.i64(cfg_.horizon);
  w.u64(cfg_.layers);
  w.u64(cfg_.hidden);
  const auto names = parameter_names();
  const auto params = parameters();
  w.u64(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.str(names[i]);
    w.u64(params[i]->rows());
    w.u64(params[i]->cols());
  }
  for (const Matrix* p : params) w.f64s(p->values());
}

MixtureModel MixtureModel::read(io::BinaryReader& r) {
  r.expect_magic(kParamMagic);
  ModelConfig cfg;
  cfg.variant = parse_variant(r.str());
  cfg.horizon = static_cast<int>(r.i64());
  cfg.layers = r.u64();
  cfg.hidden = r.u64();
  if (cfg.layers == 0 || cfg.layers > 64 || cfg.hidden == 0 || cfg.hidden > 4096)
    throw FormatError("model header: implausible layer/hidden sizes");
  MixtureModel m(cfg, 0);
  const auto names = m.parameter_names();
  auto params = m.parameters();
  if (r.u64() != params.size()) throw FormatError("model: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto name = r.str();
    auto rows = r.u64();
    auto cols = r.u64();
    if (name != names[i] || rows != params[i]->rows() || cols != params[i]->cols())
      throw FormatError("model: shape table mismatch at " + name);
  }
  for (Matrix* p : params) {
    auto v = r.f64s();
    if (v.size() != p->size()) throw FormatError("model: value block size mismatch");
    std::copy(v.begin(), v.end(), p->values().begin());
  }
  return m;
}

bool operator==(const MixtureModel& a, const MixtureModel& b) {
  if (a.cfg_.variant != b.cfg_.variant || a.cfg_.layers != b.cfg_.layers ||
      a.cfg_.hidden != b.cfg_.hidden || a.cfg_.horizon != b.cfg_.horizon)
    return false;
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(*pa[i] == *pb[i])) return false;
  return true;
}

namespace {
constexpr std::string_view kModelMagic = "DELFIMDL";
constexpr std::uint64_t kModelVersion = 1;
}  // namespace

void write_model(io::BinaryWriter& w, const TrainedModel& m) {
  w.magic(kModelMagic);
  w.u64(kModelVersion);
  w.u64(kFeatureCount);
  for (auto name : kFeatureNames) w.str(name);
  w.f64s(m.standardizer.mean());
  w.f64s(m.standardizer.stddev());
  w.f64(m.residual_scale);
  w.u64(m.ablate_nef ? 1 : 0);
  w.f64s(BinScheme::lower_edges);
  m.model.write(w);
}

TrainedModel read_model(io::BinaryReader& r) {
  r.expect_magic(kModelMagic);
  if (auto v = r.u64(); v != kModelVersion)
    throw FormatError("unsupported model version " + std::to_string(v));
  if (r.u64() != kFeatureCount) throw FormatError("model: feature count mismatch");
  for (auto name : kFeatureNames)
    if (r.str() != name) throw FormatError("model: feature order mismatch");
  auto mean = r.f64s();
  auto sd = r.f64s();
  if (mean.size() != kFeatureCount || sd.size() != kFeatureCount)
    throw FormatError("model: bad standardizer block");
  std::array<double, kFeatureCount> m{}, s{};
  std::copy(mean.begin(), mean.end(), m.begin());
  std::copy(sd.begin(), sd.end(), s.begin());
  TrainedModel out;
  out.standardizer = Standardizer(m, s);
  out.residual_scale = r.f64();
  out.ablate_nef = r.u64() != 0;
  auto edges = r.f64s();
  if (edges.size() != kBinCount || !std::equal(edges.begin(), edges.end(), BinScheme::lower_edges.begin()))
    throw FormatError("model: bin scheme mismatch");
  out.model = MixtureModel::read(r);
  return out;
}

void save_model(const std::filesystem::path& path, const TrainedModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write model file " + path.string());
  io::BinaryWriter w(out);
  write_model(w, m);
  if (!out) throw IngestError("write failed for " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open model file " + path.string());
  io::BinaryReader r(in);
  return read_model(r);
}

}  // namespace delfi
