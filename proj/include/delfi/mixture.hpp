#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "delfi/binary_io.hpp"
#include "delfi/data_model.hpp"
#include "delfi/ingest.hpp"
#include "delfi/nn.hpp"

namespace delfi {

enum class Variant { Short, Long };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

struct ModelConfig {
  Variant variant = Variant::Short;
  std::size_t layers = 2;   // LSTM stack depth per component
  std::size_t hidden = 32;  // hidden size per LSTM layer
  int horizon = 1;          // 1 for the short-term model; s for long-term models
};

enum class ParamGroup { Components, Aggregator };

/// One mixture component: a stack of LSTMs. `head` maps the final top-layer
/// hidden state to a residual and exists only in the short-term variant.
struct ComponentNet {
  std::vector<nn::LstmParams> layers;
  nn::DenseParams head;
};

/// A training/evaluation batch. `residuals` (scaled) are read by the short
/// variant, `histograms` by the long variant.
struct Batch {
  std::vector<Window> inputs;
  std::vector<double> residuals;
  std::vector<Histogram> histograms;
};

/// Three stacked-LSTM components mixed by softmax attention from a dense
/// aggregator over the flattened window.
///   short: y = sum_k a_k * head_k(h_k[T-1])
///   long:  p = softmax(W_out * concat_k(a_k * h_k[0..T-1]) + b_out)
class MixtureModel {
 public:
  MixtureModel() = default;
  /// Random initialization: LSTM weights U(-1/sqrt(H), 1/sqrt(H)), dense
  /// weights U(-1/sqrt(fan_in), ...), biases 0, forget-gate bias +1.
  MixtureModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  ComponentNet& component(std::size_t k) { return components_.at(k); }
  const ComponentNet& component(std::size_t k) const { return components_.at(k); }
  nn::DenseParams& aggregator() { return aggregator_; }
  const nn::DenseParams& aggregator() const { return aggregator_; }
  nn::DenseParams& long_head() { return long_head_; }
  const nn::DenseParams& long_head() const { return long_head_; }

  /// Every trainable matrix in canonical order (components 0..2 then
  /// aggregator then long head). Names, groups and gradients share it.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::vector<ParamGroup> parameter_groups() const;
  std::vector<std::size_t> group_indices(ParamGroup g) const;
  std::vector<std::size_t> component_indices(std::size_t k) const;

  /// Zeroes the residual heads (short) or the histogram head (long).
  void zero_output_heads();

  /// Softmax attention weights, one row per window.
  Matrix attention(std::span<const Window> windows) const;

  /// Predicted residuals in scaled units.
  std::vector<double> forward_short(std::span<const Window> windows) const;
  double forward_short(const Window& w) const;

  std::vector<Histogram> forward_long(std::span<const Window> windows) const;
  Histogram forward_long(const Window& w) const;

  /// Mean loss over the batch (MSE for short, smoothed KL for long). When
  /// `grads` is non-null it receives d loss / d parameter for every
  /// parameter in canonical order. `forced_component` replaces the attention
  /// with a one-hot on that component (pre-training).
  double loss(const Batch& batch, std::vector<Matrix>* grads = nullptr,
              std::optional<std::size_t> forced_component = std::nullopt) const;

  void write(io::BinaryWriter& w) const;
  static MixtureModel read(io::BinaryReader& r);

  friend bool operator==(const MixtureModel& a, const MixtureModel& b);

 private:
  struct Cache;
  Cache forward_cache(std::span<const Window> windows, std::optional<std::size_t> forced) const;

  ModelConfig cfg_;
  std::vector<ComponentNet> components_;
  nn::DenseParams aggregator_;
  nn::DenseParams long_head_;
};

/// A model plus everything needed to apply it to raw data.
struct TrainedModel {
  MixtureModel model;
  Standardizer standardizer;
  double residual_scale = 1.0;  // raw residual = scaled residual * residual_scale
  bool ablate_nef = false;
};

/// Versioned binary layout: magic, header (variant, horizon, L, H, feature
/// order, standardizer, residual scale, NEF ablation flag, bin edges), then a
/// shape table and row-major values.
void save_model(const std::filesystem::path& path, const TrainedModel& m);
TrainedModel load_model(const std::filesystem::path& path);
void write_model(io::BinaryWriter& w, const TrainedModel& m);
TrainedModel read_model(io::BinaryReader& r);

}  // namespace delfi
