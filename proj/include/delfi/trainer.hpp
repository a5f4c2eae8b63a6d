#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string_view>
#include <span>
#include <string>
#include <vector>

#include "delfi/dataset.hpp"
#include "delfi/mixture.hpp"
#include "delfi/nn.hpp"

namespace delfi {

struct TrainConfig {
  int n_epochs = 10;
  int n_t = 10;  // component-group steps per epoch
  int m_t = 10;  // aggregator-group steps per epoch
  int pretrain_epochs = 5;
  double learning_rate = 0.005;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Inputs and targets for one model variant, flattened for batching.
struct TrainingSet {
  Variant variant = Variant::Short;
  std::vector<Window> inputs;
  std::vector<double> residuals;  // scaled residuals (short)
  std::vector<Histogram> histograms;
  std::vector<std::size_t> station;

  std::size_t size() const { return inputs.size(); }
  Batch batch(std::span<const std::size_t> rows) const;
};

TrainingSet make_training_set(std::span<const PointExample> examples, double residual_scale);
TrainingSet make_training_set(std::span<const HistogramExample> examples);

struct LogEntry {
  std::string phase;  // pretrain_<k>, components, aggregator
  int epoch = 0;
  int iter = 0;
  double loss = 0.0;
};

struct TrainLog {
  std::vector<LogEntry> entries;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
  double final_train_loss = 0.0;
  double final_test_loss = 0.0;

  /// Mean logged loss of the alternating phases, per epoch.
  std::vector<double> epoch_means() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Optimizer state carried across alternating phases and epochs.
struct TrainingState {
  nn::AdamState components;
  nn::AdamState aggregator;
  int next_epoch = 0;

  static TrainingState fresh(const MixtureModel& model, const TrainConfig& cfg);
};

/// Trains each component alone on its station group with one-hot attention;
/// the aggregator group is never touched.
void pretrain(MixtureModel& model, const StationGrouping& grouping, const TrainingSet& data,
              const TrainConfig& cfg, TrainLog& log);

/// Alternating optimization: per epoch, n_t component-group Adam steps with
/// the aggregator group frozen, then m_t aggregator-group steps with the
/// components frozen. Resumes at state.next_epoch. `observer`, when set, is
/// called with (phase, epoch, starting) around each phase.
using PhaseObserver = std::function<void(std::string_view phase, int epoch, bool starting)>;

void train_alternating(MixtureModel& model, const TrainingSet& data, const TrainConfig& cfg,
                       TrainingState& state, TrainLog& log, const PhaseObserver& observer = {});

/// Mean loss over the whole set.
double evaluate_loss(const MixtureModel& model, const TrainingSet& data);

struct Checkpoint {
  TrainedModel model;
  TrainingState state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace delfi
