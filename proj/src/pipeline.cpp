#include "delfi/pipeline.hpp"

namespace delfi {

FeatureSet featurize_files(const std::filesystem::path& stations_csv, double train_fraction,
                           std::vector<std::string>* drop_report) {
  const auto entries = load_station_meta(stations_csv);
  std::vector<StationMeta> metas;
  std::vector<std::vector<StationRecord>> records;
  for (const auto& e : entries) {
    auto load = load_station_csv(e.path, e.meta.station_id);
    if (drop_report)
      for (const auto& d : load.dropped)
        drop_report->push_back(e.meta.station_id + ":" + std::to_string(d.line) + ": " + d.reason);
    metas.push_back(e.meta);
    records.push_back(std::move(load.records));
  }
  return featurize(metas, records, train_fraction);
}

TrainedModel train_model(const FeatureSet& fs, Variant variant, int horizon, const ModelSettings& settings,
                         const TrainConfig& cfg, const DatasetOptions& opts, TrainLog& log) {
  cfg.validate();
  auto [point_train, point_test] = split_train_test(build_point_dataset(fs, opts), fs);
  if (point_train.empty()) throw UsageError("no training examples; is the data long enough?");
  const auto grouping = group_stations_by_residual_variance(point_train, fs);
  log.warnings.insert(log.warnings.end(), grouping.warnings.begin(), grouping.warnings.end());
  const double scale = residual_scale(point_train);

  TrainingSet train_set, test_set;
  ModelConfig mc{variant, settings.layers, settings.hidden, 1};
  if (variant == Variant::Short) {
    train_set = make_training_set(point_train, scale);
    test_set = make_training_set(point_test, scale);
  } else {
    mc.horizon = Horizon::make(horizon, ForecastMode::Probabilistic).hours;
    auto [h_train, h_test] = split_train_test(build_histogram_dataset(fs, horizon, opts), fs);
    if (h_train.empty()) throw UsageError("no histogram training examples for horizon " + std::to_string(horizon));
    train_set = make_training_set(h_train);
    test_set = make_training_set(h_test);
  }

  TrainedModel out{MixtureModel(mc, cfg.seed), fs.standardizer, scale, opts.ablate_nef};
  pretrain(out.model, grouping, train_set, cfg, log);
  auto state = TrainingState::fresh(out.model, cfg);
  train_alternating(out.model, train_set, cfg, state, log);
  log.final_train_loss = evaluate_loss(out.model, train_set);
  log.final_test_loss = test_set.size() > 0 ? evaluate_loss(out.model, test_set) : 0.0;
  return out;
}

ExperimentResult run_experiment(const FeatureSet& fs, const ExperimentConfig& cfg) {
  ExperimentResult r;
  r.short_model = train_model(fs, Variant::Short, 1, cfg.model, cfg.train, {}, r.logs["short"]);
  for (int s : cfg.bench.probabilistic_horizons)
    r.long_models.emplace(
        s, train_model(fs, Variant::Long, s, cfg.model, cfg.train, {}, r.logs["long_s" + std::to_string(s)]));
  BenchmarkModels bm;
  bm.short_model = &r.short_model;
  for (const auto& [s, m] : r.long_models) bm.long_models[s] = &m;
  r.report = run_benchmark(fs, bm, cfg.bench);
  return r;
}

std::string model_filename(Variant v, int horizon) {
  return v == Variant::Short ? "model_short.bin" : "model_long_s" + std::to_string(horizon) + ".bin";
}

}  // namespace delfi
