#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "delfi/baselines.hpp"
#include "delfi/evaluation.hpp"
#include "delfi/forecaster.hpp"
#include "delfi/pipeline.hpp"
#include "delfi/synth.hpp"
#include "delfi/tensor.hpp"

namespace fs = std::filesystem;
using namespace delfi;

namespace {

// Parsed as "key = value" lines; '#' starts a comment. Each entry becomes a
// "--key=value" argument placed before the real ones, so command-line flags
// (last occurrence wins) override the file.
std::vector<std::string> config_file_args(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open config file " + path.string());
  std::vector<std::string> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--config", path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || key == "config")
      throw CLI::ValidationError("--config", path.string() + ":" + std::to_string(lineno) + ": bad key");
    if (value == "true")
      out.push_back("--" + key);
    else if (value != "false")
      out.push_back("--" + key + "=" + value);
  }
  return out;
}

void write_effective_config(const CLI::App& cmd, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto path = out_dir / ("config_" + cmd.get_name() + ".txt");
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  for (const auto* opt : cmd.get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    std::string value;
    if (opt->get_type_size() == 0) {
      value = opt->count() > 0 ? "true" : "false";
    } else {
      const auto& res = opt->results();
      value = res.empty() ? opt->get_default_str() : res.back();
    }
    out << name << " = " << value << '\n';
  }
}

struct Common {
  std::string out = ".";
  std::uint64_t seed = 1;
  int threads = 0;
  std::string config;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker thread cap (0 = runtime default)")->capture_default_str();
  cmd->add_option("--config", c.config, "key = value file using the flag names");
}

struct TrainFlags {
  std::string features;
  std::string variant;
  int horizon = 0;
  bool ablate_nef = false;
  ModelSettings model;
  TrainConfig train;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--layers", f.model.layers, "Stacked LSTM layers per component")->capture_default_str();
  cmd->add_option("--hidden", f.model.hidden, "LSTM hidden width")->capture_default_str();
  cmd->add_option("--epochs", f.train.n_epochs, "Alternating-optimization epochs")->capture_default_str();
  cmd->add_option("--component-iters", f.train.n_t, "Component steps per epoch")->capture_default_str();
  cmd->add_option("--aggregator-iters", f.train.m_t, "Aggregator steps per epoch")->capture_default_str();
  cmd->add_option("--pretrain-epochs", f.train.pretrain_epochs, "Per-component pre-training epochs")
      ->capture_default_str();
  cmd->add_option("--lr", f.train.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", f.train.batch_size, "Minibatch size")->capture_default_str();
  cmd->add_option("--clip-norm", f.train.clip_norm, "Global gradient-norm clip")->capture_default_str();
  cmd->add_flag("--ablate-nef", f.ablate_nef, "Zero the NEF feature in every window");
}

int run_synth(const Common& c, std::size_t stations, std::size_t hours, double advection) {
  synth::Profile profile;
  profile.advection = advection;
  const auto data = synth::generate(stations, hours, c.seed, profile);
  synth::write_dataset(c.out, data);
  std::cout << "wrote " << stations << " stations x " << hours << " h to " << c.out << "\n";
  return 0;
}

int run_featurize(const Common& c, const std::string& data, double fraction) {
  std::vector<std::string> dropped;
  const auto feats = featurize_files(data, fraction, &dropped);
  fs::create_directories(c.out);
  save_feature_set(fs::path(c.out) / "features.bin", feats);
  for (const auto& d : dropped) std::cerr << "dropped " << d << "\n";
  std::size_t rows = 0;
  for (const auto& s : feats.stations) rows += s.rows.size();
  std::cout << "featurized " << feats.stations.size() << " stations, " << rows << " rows, " << dropped.size()
            << " dropped\n";
  return 0;
}

int run_train(const Common& c, TrainFlags f) {
  const auto variant = parse_variant(f.variant);
  if (variant == Variant::Long && f.horizon == 0)
    throw CLI::ValidationError("--horizon", "required for --variant long");
  f.train.seed = c.seed;
  const auto feats = load_feature_set(f.features);
  TrainLog log;
  const auto model = train_model(feats, variant, f.horizon, f.model, f.train, {f.ablate_nef}, log);
  const auto file = fs::path(c.out) / model_filename(variant, f.horizon);
  save_model(file, model);
  const auto stem = variant == Variant::Short ? std::string("short") : "long_s" + std::to_string(f.horizon);
  log.write_csv(fs::path(c.out) / ("train_log_" + stem + ".csv"));
  for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";
  std::printf("saved %s  train_loss=%.6g  test_loss=%.6g  (%.1f s)\n", file.string().c_str(),
              log.final_train_loss, log.final_test_loss, log.wall_seconds);
  return 0;
}

int run_predict(const Common& c, const std::string& features, const std::string& model_path, int horizon) {
  const auto feats = load_feature_set(features);
  const auto model = load_model(model_path);
  const DatasetOptions opts{model.ablate_nef};
  const auto out_file = fs::path(c.out) / "predictions.csv";
  fs::create_directories(c.out);
  if (model.model.config().variant == Variant::Short) {
    if (horizon < 1 || horizon > kMaxPointHorizon)
      throw CLI::ValidationError("--horizon", "point horizon must be in [1, 24]");
    const auto test = split_train_test(build_point_dataset(feats, opts), feats).second;
    std::vector<ForecastOrigin> origins;
    for (const auto& ex : test) origins.push_back({ex.window.values, ex.last_pm25});
    const auto pred = rollout(origins, horizon, delfi_predictor(model), model.standardizer);
    std::vector<PointPrediction> rows;
    for (std::size_t i = 0; i < test.size(); ++i)
      rows.push_back({feats.stations[test[i].span.station].meta.station_id, test[i].window.end_timestamp, horizon,
                      pred[i].back()});
    write_predictions_csv(out_file, rows);
    std::cout << "wrote " << rows.size() << " point predictions to " << out_file.string() << "\n";
  } else {
    const int s = model.model.config().horizon;
    if (horizon != 0 && horizon != s)
      throw CLI::ValidationError("--horizon", "model was trained for horizon " + std::to_string(s));
    const auto test = split_train_test(build_histogram_dataset(feats, s, opts), feats).second;
    std::vector<Window> windows;
    for (const auto& ex : test) windows.push_back(ex.window.values);
    const auto hist = model.model.forward_long(windows);
    std::vector<HistogramPrediction> rows;
    for (std::size_t i = 0; i < test.size(); ++i)
      rows.push_back({feats.stations[test[i].span.station].meta.station_id, test[i].window.end_timestamp, s, hist[i]});
    write_predictions_csv(out_file, rows);
    std::cout << "wrote " << rows.size() << " histogram predictions to " << out_file.string() << "\n";
  }
  return 0;
}

int run_evaluate(const Common& c, const std::string& features, const std::string& models_dir, std::size_t k,
                 std::size_t stride) {
  const auto feats = load_feature_set(features);
  BenchmarkConfig bc;
  bc.knn_k = k;
  bc.eval_stride = stride;
  bc.seed = c.seed;
  std::optional<TrainedModel> short_model;
  std::map<int, TrainedModel> long_models;
  BenchmarkModels bm;
  const fs::path dir = models_dir;
  if (fs::exists(dir / model_filename(Variant::Short, 1))) {
    short_model = load_model(dir / model_filename(Variant::Short, 1));
    bm.short_model = &*short_model;
  }
  for (int s : bc.probabilistic_horizons) {
    const auto p = dir / model_filename(Variant::Long, s);
    if (!fs::exists(p)) continue;
    bm.long_models[s] = &long_models.emplace(s, load_model(p)).first->second;
  }
  const auto report = run_benchmark(feats, bm, bc);
  fs::create_directories(c.out);
  report.write_csv(fs::path(c.out) / "report.csv");
  std::ofstream(fs::path(c.out) / "report.txt") << report.table();
  std::cout << report.table();
  return 0;
}

int run_gradcheck(const Common& c, int layers, int hidden, int batch_size) {
  bool ok = true;
  for (auto variant : {Variant::Short, Variant::Long}) {
    ModelConfig mc{variant, static_cast<std::size_t>(layers), static_cast<std::size_t>(hidden),
                   variant == Variant::Long ? 6 : 1};
    MixtureModel model(mc, c.seed);
    std::mt19937_64 gen(c.seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Batch batch;
    for (int b = 0; b < batch_size; ++b) {
      Window w;
      for (auto& v : w) v = normal(gen);
      batch.inputs.push_back(w);
      if (variant == Variant::Short) {
        batch.residuals.push_back(normal(gen));
      } else {
        Histogram h;
        double sum = 0.0;
        for (auto& v : h) sum += (v = unit(gen));
        for (auto& v : h) v /= sum;
        batch.histograms.push_back(h);
      }
    }
    std::vector<Matrix> grads;
    model.loss(batch, &grads);
    const auto names = model.parameter_names();
    const auto params = model.parameters();
    const auto report = nn::grad_check([&] { return model.loss(batch); }, params, names, grads);
    std::cout << to_string(variant) << " variant\n";
    for (const auto& b : report.blocks)
      std::printf("  %-28s %6zu  max_rel_err=%.3e\n", b.name.c_str(), b.count, b.max_rel_error);
    std::printf("  overall max_rel_err=%.3e  %s\n", report.max_rel_error, report.passed ? "ok" : "FAILED");
    ok = ok && report.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"delfi: spatio-temporal PM2.5 forecasting"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic multi-station dataset");
  add_common(synth_cmd, common);
  std::size_t n_stations = synth::kDefaultStations, n_hours = synth::kDefaultHours;
  double advection = 1.0;
  synth_cmd->add_option("--stations", n_stations, "Number of stations")->capture_default_str();
  synth_cmd->add_option("--hours", n_hours, "Hours per station")->capture_default_str();
  synth_cmd->add_option("--advection", advection, "Upwind transport strength (0 disables)")->capture_default_str();

  auto* feat_cmd = app.add_subcommand("featurize", "Ingest station CSVs, compute NEF and standardize");
  add_common(feat_cmd, common);
  std::string data_path;
  double train_fraction = 0.85;
  feat_cmd->add_option("--data", data_path, "stations.csv listing station files")->required()->check(CLI::ExistingFile);
  feat_cmd->add_option("--train-fraction", train_fraction, "Per-station training share")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Train a short (point) or long (histogram) model");
  add_common(train_cmd, common);
  TrainFlags tf;
  train_cmd->add_option("--features", tf.features, "features.bin from featurize")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--variant", tf.variant, "short or long")
      ->required()
      ->check(CLI::IsMember({"short", "long"}));
  train_cmd->add_option("--horizon", tf.horizon, "Histogram horizon in hours (long variant)");
  add_train_flags(train_cmd, tf);

  auto* pred_cmd = app.add_subcommand("predict", "Forecast every test-split origin with a trained model");
  add_common(pred_cmd, common);
  std::string pred_features, model_path;
  int pred_horizon = 0;
  pred_cmd->add_option("--features", pred_features, "features.bin")->required()->check(CLI::ExistingFile);
  pred_cmd->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  pred_cmd->add_option("--horizon", pred_horizon, "Point horizon (1-24); long models use their own");

  auto* eval_cmd = app.add_subcommand("evaluate", "MAE and KL grids for KNN, linear and trained models");
  add_common(eval_cmd, common);
  std::string eval_features, models_dir;
  std::size_t knn_k = 5, eval_stride = 1;
  eval_cmd->add_option("--features", eval_features, "features.bin")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--models", models_dir, "Directory holding model_*.bin")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--k", knn_k, "KNN neighbour count")->capture_default_str();
  eval_cmd->add_option("--eval-stride", eval_stride, "Evaluate every n-th test origin")->capture_default_str();

  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter block");
  add_common(gc_cmd, common);
  int gc_layers = 2, gc_hidden = 4, gc_batch = 4;
  gc_cmd->add_option("--layers", gc_layers)->capture_default_str();
  gc_cmd->add_option("--hidden", gc_hidden)->capture_default_str();
  gc_cmd->add_option("--batch", gc_batch)->capture_default_str();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    // Splice config-file entries in right after the subcommand name.
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string file;
      if (args[i] == "--config" && i + 1 < args.size())
        file = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0)
        file = args[i].substr(9);
      if (file.empty()) continue;
      const auto extra = config_file_args(file);
      std::size_t insert_at = 0;
      if (!args.empty() && args[0].rfind("-", 0) != 0) insert_at = 1;
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at), extra.begin(), extra.end());
      break;
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (common.threads > 0) set_thread_count(common.threads);
    auto* cmd = app.get_subcommands().front();
    write_effective_config(*cmd, common.out);
    if (cmd == synth_cmd) return run_synth(common, n_stations, n_hours, advection);
    if (cmd == feat_cmd) return run_featurize(common, data_path, train_fraction);
    if (cmd == train_cmd) return run_train(common, tf);
    if (cmd == pred_cmd) return run_predict(common, pred_features, model_path, pred_horizon);
    if (cmd == eval_cmd) return run_evaluate(common, eval_features, models_dir, knn_k, eval_stride);
    return run_gradcheck(common, gc_layers, gc_hidden, gc_batch);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.get_subcommands().front()->help();
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
