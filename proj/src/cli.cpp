#include "texanom/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include "texanom/config.hpp"
#include "texanom/dataio.hpp"
#include "texanom/metrics.hpp"
#include "texanom/pipeline.hpp"
#include "texanom/rng.hpp"
#include "texanom/train.hpp"

namespace texanom::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::shared_ptr<spdlog::logger> logger() {
  if (auto existing = spdlog::get("texanom")) return existing;
  auto log = spdlog::stderr_color_mt("texanom");
  log->set_pattern("[%H:%M:%S] %^%l%$ %v");
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv("TEXANOM_LOG")) level = spdlog::level::from_str(env);
  log->set_level(level);
  return log;
}

struct CommonOptions {
  std::string config;
  std::string model;
  std::string image;
  std::string out;
  std::optional<double> gamma;
  std::string calibration;
  std::optional<int> erode_radius;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::string dump_maps;
  bool deterministic = false;
};

config::RunConfig resolve_config(const CommonOptions& o, bool required) {
  config::RunConfig c;
  if (!o.config.empty())
    c = config::RunConfig::load(o.config);
  else if (required)
    throw ConfigError("--config: a run configuration is required");
  if (o.seed) c.seed = *o.seed;
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("--threads: must be positive");
    c.threads = *o.threads;
    c.deterministic = false;
  }
  if (o.deterministic) c.deterministic = true;
  if (o.erode_radius) {
    if (*o.erode_radius < 0) throw ConfigError("--erode-radius: must be >= 0");
    c.inference.erode_radius = *o.erode_radius;
  }
  c.propagate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Without a config the inference patch follows the model's training patch.
pipeline::InferenceConfig inference_for(const config::RunConfig& c, const autoencoder::ModelParams& model,
                                        bool from_file) {
  pipeline::InferenceConfig inf = c.inference;
  if (!from_file && model.patch_size > 0) {
    inf.patch_size = model.patch_size;
    inf.stride = std::min(inf.stride, inf.patch_size);
  }
  inf.validate();
  return inf;
}

AnomalyMap score_image(const GrayImage& image, const autoencoder::ModelParams& model,
                       const pipeline::InferenceConfig& inf) {
  if (image.rows() < inf.patch_size || image.cols() < inf.patch_size)
    throw ConfigError("image " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                      " is smaller than inference.patch_size " + std::to_string(inf.patch_size));
  const GrayImage recon = pipeline::reconstruct_full(image, model, inf);
  return pipeline::anomaly_map(image, recon, inf);
}

std::uint64_t hash_file(const fs::path& path, std::uint64_t h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str(), fnv1a(path.filename().string(), h));
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

AnomalyMask ground_truth(const dataio::LabeledImage& item, const GrayImage& image) {
  AnomalyMask gt;
  if (item.mask) {
    gt = dataio::load_mask(*item.mask);
  } else if (item.image.parent_path().filename() == "good") {
    gt = AnomalyMask(image.rows(), image.cols(), 0);
  } else {
    throw ConfigError("missing ground-truth mask for " + item.image.string());
  }
  if (!gt.same_shape(image)) throw ConfigError("ground-truth mask shape differs from " + item.image.string());
  return gt;
}

int cmd_train(const CommonOptions& o) {
  auto log = logger();
  config::RunConfig c = resolve_config(o, true);
  if (!o.out.empty()) c.output_dir = o.out;
  if (c.dataset_root.empty()) throw ConfigError("dataset.root: missing");
  const auto index = dataio::index_mvtec(c.dataset_root, c.validation);
  log->info("training on {} images, {} patches of {}x{}, loss {}", index.train_normal.size(), c.train.patch_count,
            c.train.patch_size, c.train.patch_size, similarity::to_string(c.train.loss));
  fs::create_directories(c.output_dir);
  write_text(c.output_dir / "config.toml", c.to_toml());

  std::ostringstream csv;
  csv << "epoch,mean_loss,learning_rate\n";
  const auto result = autoencoder::train(index, c.architecture(), c.train, [&](const autoencoder::EpochReport& r) {
    csv << r.epoch << "," << fmt_double(r.mean_loss) << "," << fmt_double(r.learning_rate) << "\n";
    log->info("epoch {:4d}  loss {:.6f}  lr {:.3g}", r.epoch, r.mean_loss, r.learning_rate);
  });
  write_text(c.output_dir / "loss.csv", csv.str());
  autoencoder::save_model(result.model, c.output_dir / "model.cwae");
  log->info("wrote {}", (c.output_dir / "model.cwae").string());
  return ok;
}

int cmd_score(const CommonOptions& o) {
  const config::RunConfig c = resolve_config(o, false);
  const auto model = autoencoder::load_model(o.model);
  const auto inf = inference_for(c, model, !o.config.empty());
  const GrayImage image = dataio::load_image(o.image);
  const AnomalyMap map = score_image(image, model, inf);
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  dataio::write_anomaly_map(map, out);
  if (o.gamma) {
    const auto mask = pipeline::binarize_and_erode(map, *o.gamma, inf.erode_radius, inf.post_process);
    fs::path mask_path = out;
    mask_path.replace_filename(out.stem().string() + "_mask.png");
    dataio::save_mask_png(mask, mask_path);
  }
  logger()->info("wrote {}", out.string());
  return ok;
}

int cmd_reconstruct(const CommonOptions& o) {
  const config::RunConfig c = resolve_config(o, false);
  const auto model = autoencoder::load_model(o.model);
  const auto inf = inference_for(c, model, !o.config.empty());
  const GrayImage image = dataio::load_image(o.image);
  if (image.rows() < inf.patch_size || image.cols() < inf.patch_size)
    throw ConfigError("image is smaller than inference.patch_size");
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  dataio::save_image(pipeline::reconstruct_full(image, model, inf), out);
  return ok;
}

int cmd_calibrate(const CommonOptions& o) {
  const config::RunConfig c = resolve_config(o, true);
  const auto model = autoencoder::load_model(o.model);
  const auto inf = inference_for(c, model, true);
  const auto index = dataio::index_mvtec(c.dataset_root, c.validation);
  if (index.validation_defective.empty()) throw ConfigError("dataset.validation: no validation images listed");

  std::vector<std::pair<AnomalyMap, AnomalyMask>> pairs;
  std::uint64_t h = fnv1a("validation");
  for (const auto& item : index.validation_defective) {
    if (!item.mask && item.image.parent_path().filename() != "good")
      throw ConfigError("dataset.validation: no ground-truth mask for " + item.image.string());
    const GrayImage image = dataio::load_image(item.image);
    AnomalyMask gt = ground_truth(item, image);
    h = hash_file(item.image, h);
    if (item.mask) h = hash_file(*item.mask, h);
    pairs.emplace_back(score_image(image, model, inf), std::move(gt));
  }
  const auto normal = pipeline::normal_scores(pairs);
  const double gamma = pipeline::calibrate_threshold(normal, inf.target_fpr);

  json j;
  j["gamma"] = gamma;
  j["target_fpr"] = inf.target_fpr;
  j["achieved_fpr"] = pipeline::empirical_fpr(normal, gamma);
  j["normal_pixels"] = normal.size();
  j["validation_images"] = pairs.size();
  j["validation_hash"] = hex(h);
  j["config_hash"] = c.hash();
  const fs::path out = o.out.empty() ? c.output_dir / "calibration.json" : fs::path(o.out);
  write_text(out, j.dump(2) + "\n");
  logger()->info("gamma = {:.6f} (achieved FPR {:.4f} on {} normal pixels)", gamma, j["achieved_fpr"].get<double>(),
                 normal.size());
  return ok;
}

double gamma_from(const CommonOptions& o, const config::RunConfig& c) {
  if (o.gamma) return *o.gamma;
  const fs::path path = o.calibration.empty() ? c.output_dir / "calibration.json" : fs::path(o.calibration);
  std::ifstream in(path);
  if (!in) throw ConfigError("--gamma: not given and no calibration record at " + path.string());
  try {
    return json::parse(in).at("gamma").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError("--calibration: malformed record " + path.string() + ": " + e.what());
  }
}

int cmd_evaluate(const CommonOptions& o) {
  const config::RunConfig c = resolve_config(o, true);
  const auto model = autoencoder::load_model(o.model);
  const auto inf = inference_for(c, model, true);
  const double gamma = gamma_from(o, c);
  const auto index = dataio::index_mvtec(c.dataset_root, c.validation);
  if (index.test.empty()) throw ConfigError("dataset.root: no test images");

  metrics::Evaluator eval;
  for (const auto& item : index.test) {
    const GrayImage image = dataio::load_image(item.image);
    const AnomalyMask gt = ground_truth(item, image);
    const AnomalyMap map = score_image(image, model, inf);
    if (!o.dump_maps.empty()) {
      const fs::path dir = fs::path(o.dump_maps) / item.image.parent_path().filename();
      fs::create_directories(dir);
      dataio::write_anomaly_map_raw(map, dir / (item.image.stem().string() + ".tam"));
    }
    eval.add(map, gt, pipeline::binarize_and_erode(map, gamma, inf.erode_radius, inf.post_process));
    logger()->debug("scored {}", item.image.string());
  }
  const auto report = eval.report(gamma, c.hash());
  const fs::path out = o.out.empty() ? c.output_dir / "report.json" : fs::path(o.out);
  write_text(out, report.to_json() + "\n");
  logger()->info("AUC {:.4f}  normalized AUC@0.3 {:.4f}  median coverage {:.4f}", report.auc,
                 report.normalized_auc_03, report.median_coverage);
  return ok;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Texture anomaly detection with a CW-SSIM autoencoder", args.empty() ? "texanom" : args.front()};
  app.require_subcommand(1);
  CommonOptions o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--threads", o.threads, "Worker threads");
    sub->add_flag("--deterministic", o.deterministic, "Force single-threaded bit-reproducible execution");
    sub->add_option("--seed", o.seed, "Override the configured seed");
  };

  auto* train = app.add_subcommand("train", "Train an autoencoder on train/good");
  train->add_option("--config", o.config, "Run configuration")->required()->check(CLI::ExistingFile);
  train->add_option("--out", o.out, "Output directory (overrides output.dir)");
  add_common(train);

  auto* score = app.add_subcommand("score", "Write the anomaly map of one image");
  score->add_option("--model", o.model, "Model file")->required()->check(CLI::ExistingFile);
  score->add_option("--image", o.image, "Input image")->required()->check(CLI::ExistingFile);
  score->add_option("--out", o.out, "Anomaly map path")->required();
  score->add_option("--config", o.config, "Run configuration for inference settings")->check(CLI::ExistingFile);
  score->add_option("--gamma", o.gamma, "Threshold; also writes <out>_mask.png");
  score->add_option("--erode-radius", o.erode_radius, "Disk radius for mask post-processing");
  add_common(score);

  auto* reconstruct = app.add_subcommand("reconstruct", "Write the full-image reconstruction");
  reconstruct->add_option("--model", o.model, "Model file")->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--image", o.image, "Input image")->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--out", o.out, "Output image (.png or .pgm)")->required();
  reconstruct->add_option("--config", o.config, "Run configuration")->check(CLI::ExistingFile);
  add_common(reconstruct);

  auto* calibrate = app.add_subcommand("calibrate", "Pick the threshold on validation images");
  calibrate->add_option("--config", o.config, "Run configuration")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--model", o.model, "Model file")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--out", o.out, "Calibration record path");
  add_common(calibrate);

  auto* evaluate = app.add_subcommand("evaluate", "Pixel AUC and defect coverage on the test split");
  evaluate->add_option("--config", o.config, "Run configuration")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--model", o.model, "Model file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--gamma", o.gamma, "Threshold");
  evaluate->add_option("--calibration", o.calibration, "Calibration record supplying gamma");
  evaluate->add_option("--erode-radius", o.erode_radius, "Disk radius for mask post-processing");
  evaluate->add_option("--out", o.out, "Report path");
  evaluate->add_option("--dump-maps", o.dump_maps, "Directory for per-image anomaly maps");
  add_common(evaluate);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return usage_error;
  }

  try {
    if (*train) return cmd_train(o);
    if (*score) return cmd_score(o);
    if (*reconstruct) return cmd_reconstruct(o);
    if (*calibrate) return cmd_calibrate(o);
    if (*evaluate) return cmd_evaluate(o);
  } catch (const ConfigError& e) {
    logger()->error("{}", e.what());
    return usage_error;
  } catch (const ContractError& e) {
    logger()->error("{}", e.what());
    return usage_error;
  } catch (const FormatError& e) {
    logger()->error("{}", e.what());
    return usage_error;
  } catch (const IoError& e) {
    logger()->error("{}", e.what());
    return usage_error;
  } catch (const DomainError& e) {
    logger()->error("{}", e.what());
    return usage_error;
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return runtime_error;
  }
  return usage_error;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace texanom::cli
