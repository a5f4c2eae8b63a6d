#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "delfi/forecaster.hpp"
#include "delfi/pipeline.hpp"
#include "delfi/synth.hpp"

using namespace delfi;

namespace fs = std::filesystem;

TEST_CASE("files to features to models to report") {
  const auto dir = fs::temp_directory_path() / "delfi_pipeline_test";
  fs::remove_all(dir);
  synth::write_dataset(dir, synth::generate(4, 500, 21));

  std::vector<std::string> dropped;
  const auto feats = featurize_files(dir / "stations.csv", 0.85, &dropped);
  CHECK(dropped.empty());
  REQUIRE(feats.stations.size() == 4);
  CHECK(feats.standardizer.fitted());

  save_feature_set(dir / "features.bin", feats);
  const auto again = load_feature_set(dir / "features.bin");
  CHECK(again.stations[2].rows.size() == feats.stations[2].rows.size());

  ExperimentConfig cfg;
  cfg.model = {1, 6};
  cfg.train.n_epochs = 2;
  cfg.train.n_t = 3;
  cfg.train.m_t = 3;
  cfg.train.pretrain_epochs = 1;
  cfg.bench.point_horizons = {1, 6};
  cfg.bench.probabilistic_horizons = {6, 12};
  cfg.bench.eval_stride = 3;
  const auto r = run_experiment(feats, cfg);

  CHECK(r.long_models.size() == 2);
  CHECK(r.logs.count("short") == 1);
  CHECK(r.logs.count("long_s12") == 1);
  CHECK(r.report.cells.size() == 3 * 2 + 2 * 2);
  for (const auto& c : r.report.cells) {
    REQUIRE_MESSAGE(c.value.has_value(), c.method, " ", c.horizon);
    CHECK(std::isfinite(*c.value));
    CHECK(*c.value >= 0.0);
  }
  CHECK(r.short_model.residual_scale > 0.0);

  save_model(dir / model_filename(Variant::Long, 12), r.long_models.at(12));
  const auto loaded = load_model(dir / "model_long_s12.bin");
  CHECK(loaded.model == r.long_models.at(12).model);
  fs::remove_all(dir);
}

TEST_CASE("NEF ablation flows into the trained model") {
  const auto d = synth::generate(3, 400, 22);
  const auto feats = featurize(d.stations, d.records, 0.85);
  TrainConfig cfg;
  cfg.n_epochs = 1;
  cfg.n_t = 2;
  cfg.m_t = 2;
  cfg.pretrain_epochs = 1;
  TrainLog log;
  const auto m = train_model(feats, Variant::Long, 6, {1, 4}, cfg, {true}, log);
  CHECK(m.ablate_nef);
  CHECK(m.model.config().horizon == 6);
  CHECK(evaluate_histogram_model(feats, m, 1) > 0.0);
  CHECK_THROWS_AS(train_model(feats, Variant::Long, 5, {1, 4}, cfg, {}, log), DomainError);
}
