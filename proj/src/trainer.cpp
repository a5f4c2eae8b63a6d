#include "delfi/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "delfi/rng.hpp"

namespace delfi {

void TrainConfig::validate() const {
  if (n_epochs < 1 || n_t < 1 || m_t < 1 || pretrain_epochs < 1)
    throw UsageError("epoch and iteration counts must be >= 1");
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (!(clip_norm > 0.0)) throw UsageError("clip norm must be positive");
}

Batch TrainingSet::batch(std::span<const std::size_t> rows) const {
  Batch b;
  b.inputs.reserve(rows.size());
  for (auto r : rows) {
    b.inputs.push_back(inputs[r]);
    if (variant == Variant::Short)
      b.residuals.push_back(residuals[r]);
    else
      b.histograms.push_back(histograms[r]);
  }
  return b;
}

TrainingSet make_training_set(std::span<const PointExample> examples, double residual_scale) {
  TrainingSet set;
  set.variant = Variant::Short;
  for (const auto& ex : examples) {
    set.inputs.push_back(ex.window.values);
    set.residuals.push_back(ex.target / residual_scale);
    set.station.push_back(ex.span.station);
  }
  return set;
}

TrainingSet make_training_set(std::span<const HistogramExample> examples) {
  TrainingSet set;
  set.variant = Variant::Long;
  for (const auto& ex : examples) {
    set.inputs.push_back(ex.window.values);
    set.histograms.push_back(ex.target);
    set.station.push_back(ex.span.station);
  }
  return set;
}

std::vector<double> TrainLog::epoch_means() const {
  std::vector<double> sum, count;
  for (const auto& e : entries) {
    if (e.phase != "components" && e.phase != "aggregator") continue;
    const auto ep = static_cast<std::size_t>(e.epoch);
    if (sum.size() <= ep) {
      sum.resize(ep + 1, 0.0);
      count.resize(ep + 1, 0.0);
    }
    sum[ep] += e.loss;
    count[ep] += 1.0;
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = count[i] > 0 ? sum[i] / count[i] : 0.0;
  return sum;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "phase,epoch,iter,loss\n";
  char buf[64];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.loss);
    out << e.phase << ',' << e.epoch << ',' << e.iter << ',' << buf << '\n';
  }
}

namespace {

template <typename T>
std::vector<T*> select(const std::vector<T*>& all, const std::vector<std::size_t>& idx) {
  std::vector<T*> out;
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

std::vector<const Matrix*> const_view(const std::vector<Matrix*>& v) { return {v.begin(), v.end()}; }

/// One Adam step on the parameters `idx`; other parameters are untouched.
double optimizer_step(MixtureModel& model, const Batch& batch, const std::vector<std::size_t>& idx,
                      nn::AdamState& adam, double clip_norm, std::optional<std::size_t> forced) {
  std::vector<Matrix> grads;
  const double loss = model.loss(batch, &grads, forced);
  auto params = select(model.parameters(), idx);
  std::vector<Matrix*> g;
  for (auto i : idx) g.push_back(&grads[i]);
  nn::clip_global_norm(g, clip_norm);
  adam.step(params, const_view(g));
  return loss;
}

}  // namespace

TrainingState TrainingState::fresh(const MixtureModel& model, const TrainConfig& cfg) {
  auto all = model.parameters();
  nn::AdamConfig ac;
  ac.learning_rate = cfg.learning_rate;
  TrainingState s;
  s.components = nn::AdamState(select(all, model.group_indices(ParamGroup::Components)), ac);
  s.aggregator = nn::AdamState(select(all, model.group_indices(ParamGroup::Aggregator)), ac);
  return s;
}

void pretrain(MixtureModel& model, const StationGrouping& grouping, const TrainingSet& data,
              const TrainConfig& cfg, TrainLog& log) {
  cfg.validate();
  if (data.variant != model.config().variant) throw UsageError("pretrain: data/model variant mismatch");
  nn::AdamConfig ac;
  ac.learning_rate = cfg.learning_rate;
  for (std::size_t k = 0; k < kComponentCount; ++k) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (grouping.component.at(data.station[i]) == k) rows.push_back(i);
    const auto phase = "pretrain_" + std::to_string(k);
    if (rows.empty()) {
      log.warnings.push_back(phase + ": no examples for this component, skipped");
      continue;
    }
    const auto idx = model.component_indices(k);
    nn::AdamState adam(const_view(select(model.parameters(), idx)), ac);
    int iter = 0;
    for (int e = 0; e < cfg.pretrain_epochs; ++e) {
      Rng rng(derive_seed(cfg.seed, 1000 + 100 * k + static_cast<std::uint64_t>(e)));
      rng.shuffle(std::span<std::size_t>(rows));
      for (std::size_t start = 0; start < rows.size(); start += cfg.batch_size) {
        const auto n = std::min(cfg.batch_size, rows.size() - start);
        const auto batch = data.batch(std::span<const std::size_t>(rows).subspan(start, n));
        try {
          const double loss = optimizer_step(model, batch, idx, adam, cfg.clip_norm, k);
          log.entries.push_back({phase, e, iter++, loss});
        } catch (const NumericError& err) {
          throw NumericError(phase + " epoch " + std::to_string(e) + " batch " + std::to_string(iter) +
                             ": " + err.what());
        }
      }
    }
  }
}

void train_alternating(MixtureModel& model, const TrainingSet& data, const TrainConfig& cfg,
                       TrainingState& state, TrainLog& log, const PhaseObserver& observer) {
  cfg.validate();
  if (data.size() == 0) throw UsageError("train_alternating: empty training set");
  if (data.variant != model.config().variant) throw UsageError("train_alternating: data/model variant mismatch");
  const auto start_time = std::chrono::steady_clock::now();
  const auto comp_idx = model.group_indices(ParamGroup::Components);
  const auto agg_idx = model.group_indices(ParamGroup::Aggregator);
  const std::size_t B = std::min(cfg.batch_size, data.size());

  std::vector<std::size_t> order(data.size());
  std::vector<std::size_t> rows(B);
  for (int e = state.next_epoch; e < cfg.n_epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(e)));
    rng.shuffle(std::span<std::size_t>(order));
    std::size_t cursor = 0;
    auto next_batch = [&] {
      for (auto& r : rows) {
        r = order[cursor];
        cursor = (cursor + 1) % order.size();
      }
      return data.batch(rows);
    };
    auto run_phase = [&](const char* phase, int iters, const std::vector<std::size_t>& idx,
                         nn::AdamState& adam) {
      if (observer) observer(phase, e, true);
      for (int it = 0; it < iters; ++it) {
        const auto batch = next_batch();
        try {
          log.entries.push_back({phase, e, it, optimizer_step(model, batch, idx, adam, cfg.clip_norm, std::nullopt)});
        } catch (const NumericError& err) {
          throw NumericError(std::string(phase) + " epoch " + std::to_string(e) + " batch " +
                             std::to_string(it) + ": " + err.what());
        }
      }
      if (observer) observer(phase, e, false);
    };
    run_phase("components", cfg.n_t, comp_idx, state.components);
    run_phase("aggregator", cfg.m_t, agg_idx, state.aggregator);
    state.next_epoch = e + 1;
  }
  log.wall_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
}

double evaluate_loss(const MixtureModel& model, const TrainingSet& data) {
  if (data.size() == 0) throw UsageError("evaluate_loss: empty set");
  constexpr std::size_t chunk = 512;
  double total = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const auto n = std::min(chunk, data.size() - start);
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), start);
    total += model.loss(data.batch(rows)) * static_cast<double>(n);
  }
  return total / static_cast<double>(data.size());
}

namespace {

constexpr std::string_view kCheckpointMagic = "DELFICKP";
constexpr std::uint64_t kCheckpointVersion = 1;

void write_adam(io::BinaryWriter& w, const nn::AdamState& s) {
  const auto& c = s.config();
  w.f64(c.learning_rate);
  w.f64(c.beta1);
  w.f64(c.beta2);
  w.f64(c.epsilon);
  w.u64(s.steps());
  w.u64(s.first_moment().size());
  for (std::size_t i = 0; i < s.first_moment().size(); ++i) {
    w.u64(s.first_moment()[i].rows());
    w.u64(s.first_moment()[i].cols());
    w.f64s(s.first_moment()[i].values());
    w.f64s(s.second_moment()[i].values());
  }
}

nn::AdamState read_adam(io::BinaryReader& r) {
  nn::AdamConfig c;
  c.learning_rate = r.f64();
  c.beta1 = r.f64();
  c.beta2 = r.f64();
  c.epsilon = r.f64();
  const auto steps = r.u64();
  const auto n = r.u64();
  if (n > 4096) throw FormatError("checkpoint: implausible moment count");
  std::vector<Matrix> m, v;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto rows = r.u64();
    const auto cols = r.u64();
    auto mv = r.f64s();
    auto vv = r.f64s();
    if (mv.size() != rows * cols || vv.size() != rows * cols) throw FormatError("checkpoint: bad moment block");
    Matrix a(rows, cols), b(rows, cols);
    std::copy(mv.begin(), mv.end(), a.values().begin());
    std::copy(vv.begin(), vv.end(), b.values().begin());
    m.push_back(std::move(a));
    v.push_back(std::move(b));
  }
  return nn::AdamState::restore(c, steps, std::move(m), std::move(v));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write checkpoint " + path.string());
  io::BinaryWriter w(out);
  w.magic(kCheckpointMagic);
  w.u64(kCheckpointVersion);
  write_model(w, ck.model);
  w.i64(ck.state.next_epoch);
  write_adam(w, ck.state.components);
  write_adam(w, ck.state.aggregator);
  if (!out) throw IngestError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open checkpoint " + path.string());
  io::BinaryReader r(in);
  r.expect_magic(kCheckpointMagic);
  if (auto v = r.u64(); v != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  Checkpoint ck;
  ck.model = read_model(r);
  ck.state.next_epoch = static_cast<int>(r.i64());
  ck.state.components = read_adam(r);
  ck.state.aggregator = read_adam(r);
  return ck;
}

}  // namespace delfi
