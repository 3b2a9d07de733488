#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dvton/archive.hpp"
#include "dvton/data.hpp"
#include "dvton/error.hpp"
#include "dvton/imaging.hpp"
#include "dvton/metrics.hpp"
#include "dvton/parallel.hpp"
#include "dvton/pipeline.hpp"
#include "dvton/runtime.hpp"
#include "dvton/trainer.hpp"

namespace fs = std::filesystem;
using namespace dvton;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInvalidArgument:
      return kExitUsage;
    case ErrorKind::kNumeric:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

const char* exit_class(int code) {
  switch (code) {
    case kExitUsage:
      return "usage";
    case kExitNumeric:
      return "numeric";
    default:
      return "data";
  }
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int report_error(int code, const std::string& detail, const std::string& msg) {
  std::cerr << "error[" << exit_class(code) << ":" << detail << "]: " << one_line(msg) << "\n";
  return code;
}

struct GenDataArgs {
  int n = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string mode = "paired";
  int size = 64;
};

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
};

struct SampleArgs {
  std::string checkpoint, source, reference, mask, pose, out;
  std::string mask_polarity = "edit-white";
  int steps = SamplerConfig::kDefaultSteps;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string checkpoint, data, report, generated, features_generated, features_real;
  std::string mode = "paired";
  int steps = SamplerConfig::kDefaultSteps;
  std::uint64_t seed = 0;
};

struct ExperimentArgs {
  std::string configs = "token_concat,channel_concat,control_net";
  int budget = 0;
  std::string data, config, out;
  int eval_pairs = 16;
  bool pose_ablation = false;
};

TrainConfig read_train_config(const std::string& path) {
  if (path.empty()) {
    spdlog::info("no --config given; using the desk preset for every key");
    return TrainConfig::desk();
  }
  const ParsedConfig parsed = load_config(path);
  std::map<std::string, std::string> values;
  std::istringstream lines(parsed.config.to_text());
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    values[line.substr(0, eq)] = line.substr(eq + 1);
  }
  values["preset"] = "desk";
  for (const auto& key : parsed.defaulted) spdlog::info("config key '{}' not set; using {}", key, values[key]);
  return parsed.config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + path.string());
}

int cmd_gen_data(const GenDataArgs& a) {
  require(a.n >= 1, ErrorKind::kInvalidArgument, "--n must be at least 1");
  const SplitMode mode = split_mode_from_string(a.mode);
  const auto pairs = make_split(a.n, a.seed, mode, a.size);
  write_vton_layout(a.out, pairs);
  spdlog::info("wrote {} {} pairs to {}", pairs.size(), a.mode, a.out);
  return kExitOk;
}

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg = read_train_config(a.config);
  std::optional<Checkpoint> resumed;
  if (!a.resume.empty()) {
    resumed = a.config.empty() ? load_checkpoint(a.resume) : load_checkpoint(a.resume, cfg.model);
    const int iterations = a.config.empty() ? resumed->config.iterations : cfg.iterations;
    cfg = resumed->config;
    cfg.iterations = iterations;
    spdlog::info("resuming from {} at step {}", a.resume, resumed->state.step);
  }
  const auto data = load_vton_layout(a.data, {cfg.image_size});
  require(!data.empty(), ErrorKind::kFormat, "dataset " + a.data + " has no pairs");
  for (const auto& p : data) {
    require(p.mask.edit_count() > 0, ErrorKind::kFormat, "pair '" + p.name + "' has an empty edit region");
  }
  fs::create_directories(a.out);
  const Codec codec = resumed ? resumed->codec : make_codec(cfg, data);
  TrainingState state = resumed ? std::move(resumed->state) : TrainingState::initial(cfg);
  write_text(fs::path(a.out) / "config.txt", cfg.to_text());

  std::ofstream log(fs::path(a.out) / "runlog.jsonl", std::ios::app);
  require(static_cast<bool>(log), ErrorKind::kIo, "cannot write run log in " + a.out);
  const fs::path latest = fs::path(a.out) / "checkpoint.dvt";
  spdlog::info("training {} ({} pairs, {} steps, config hash {})", to_string(cfg.model.mode), data.size(),
               cfg.iterations, config_hash(cfg));
  train(state, data, cfg, codec, cfg.iterations, [&](const RunRecord& r, const TrainingState& s) {
    log << r.to_json_line() << "\n";
    if (r.iteration % cfg.log_interval == 0) {
      spdlog::info("step {} loss {:.6f} grad_norm {:.4f} ({:.2f}s)", r.iteration, r.loss, r.grad_norm,
                   r.wall_time);
    }
    if (cfg.checkpoint_interval > 0 && r.iteration % cfg.checkpoint_interval == 0) {
      save_checkpoint(latest, cfg, s, codec);
      log.flush();
    }
  });
  save_checkpoint(latest, cfg, state, codec);
  spdlog::info("checkpoint written to {}", latest.string());
  return kExitOk;
}

int cmd_sample(const SampleArgs& a) {
  require(a.steps >= 1, ErrorKind::kInvalidArgument, "--steps must be at least 1");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const ModelConfig& model = ck.config.model;
  const MaskPolarity polarity =
      a.mask_polarity == "keep-white" ? MaskPolarity::kKeepIsWhite : MaskPolarity::kEditIsWhite;
  require(a.mask_polarity == "keep-white" || a.mask_polarity == "edit-white", ErrorKind::kInvalidArgument,
          "--mask-polarity must be edit-white or keep-white");

  SamplePair pair;
  pair.name = fs::path(a.source).stem().string();
  pair.source = read_image(a.source);
  pair.reference = read_image(a.reference);
  pair.mask = read_mask(a.mask, polarity);
  const int size = ck.config.image_size;
  auto check_extent = [&](int h, int w, const std::string& what) {
    require(h == size && w == size, ErrorKind::kShapeMismatch,
            what + " is " + std::to_string(h) + "x" + std::to_string(w) + " but the checkpoint expects " +
                std::to_string(size) + "x" + std::to_string(size));
  };
  check_extent(pair.source.height, pair.source.width, "source");
  check_extent(pair.reference.height, pair.reference.width, "reference");
  check_extent(pair.mask.height, pair.mask.width, "mask");
  if (!a.pose.empty()) {
    pair.pose.image = read_image(a.pose);
    check_extent(pair.pose.image.height, pair.pose.image.width, "pose");
  } else {
    require(model.pose == PoseStrategy::kNone, ErrorKind::kInvalidArgument,
            "checkpoint uses pose=" + to_string(model.pose) + "; pass --pose");
    pair.pose.image = Image(size, size);
  }

  SamplerConfig scfg = ck.config.sampler;
  scfg.steps = a.steps;
  scfg.seed = a.seed;
  const Image out = synthesize(pair, ck.state.params, model, ck.codec, scfg);
  write_png(a.out, out);
  spdlog::info("wrote {} ({} steps, seed {})", a.out, scfg.steps, scfg.seed);
  return kExitOk;
}

int cmd_eval(const EvalArgs& a) {
  const SplitMode mode = split_mode_from_string(a.mode);
  MetricReport report;
  std::string hash = "none";
  std::optional<Checkpoint> ck;
  if (!a.checkpoint.empty()) {
    ck = load_checkpoint(a.checkpoint);
    hash = config_hash(ck->config);
  }

  if (!a.features_generated.empty() || !a.features_real.empty()) {
    require(!a.features_generated.empty() && !a.features_real.empty(), ErrorKind::kInvalidArgument,
            "--features-generated and --features-real go together");
    report = evaluate_features(read_features(a.features_generated), read_features(a.features_real));
    report.split_id = "features";
  } else {
    require(!a.data.empty(), ErrorKind::kInvalidArgument, "--data is required");
    const int size = ck ? ck->config.image_size : 64;
    auto split = load_vton_layout(a.data, {size});
    require(!split.empty(), ErrorKind::kFormat, "dataset " + a.data + " has no pairs");
    if (mode == SplitMode::kPaired) {
      for (const auto& p : split) {
        require(p.target.has_value(), ErrorKind::kInvalidArgument,
                "paired evaluation needs targets; pair '" + p.name + "' is unpaired");
      }
    }
    std::vector<Image> generated(split.size());
    if (!a.generated.empty()) {
      for (std::size_t i = 0; i < split.size(); ++i) {
        fs::path file = fs::path(a.generated) / (split[i].name + ".png");
        if (!fs::exists(file)) file = fs::path(a.generated) / (split[i].name + ".jpg");
        require(fs::exists(file), ErrorKind::kIo, "missing generated image for '" + split[i].name + "'");
        generated[i] = pad_resize(read_image(file), size);
      }
    } else {
      require(ck.has_value(), ErrorKind::kInvalidArgument, "pass --checkpoint or --generated");
      SamplerConfig base = ck->config.sampler;
      base.steps = a.steps;
      base.seed = a.seed;
      parallel_for(static_cast<int>(split.size()), default_threads(), [&](int i) {
        SamplerConfig s = base;
        s.seed = item_seed(base.seed, i);
        generated[i] = synthesize(split[i], ck->state.params, ck->config.model, ck->codec, s);
      });
    }
    report = evaluate_run(generated, split, ProjectionExtractor(), mode);
  }
  report.run_id = a.checkpoint.empty() ? "generated" : fs::path(a.checkpoint).stem().string();
  report.config_hash = hash;
  report.write(a.report);
  for (const auto& [k, v] : report.metrics) spdlog::info("{} = {:.6f}", k, v);
  return kExitOk;
}

std::vector<ModelConfig> parse_config_list(const std::string& list, const ModelConfig& base) {
  std::vector<ModelConfig> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    ModelConfig m = base;
    const auto plus = item.find('+');
    m.mode = conditioning_mode_from_string(item.substr(0, plus));
    if (plus != std::string::npos) m.pose = pose_strategy_from_string(item.substr(plus + 1));
    if (m.mode != ConditioningMode::kTokenConcat && m.pose == PoseStrategy::kConcat) {
      fail(ErrorKind::kInvalidArgument, "pose=concat needs token_concat (" + item + ")");
    }
    out.push_back(m);
  }
  require(!out.empty(), ErrorKind::kInvalidArgument, "--configs is empty");
  return out;
}

int cmd_experiment(const ExperimentArgs& a) {
  require(a.budget >= 1, ErrorKind::kInvalidArgument, "--budget must be at least 1");
  TrainConfig cfg = read_train_config(a.config);
  cfg.iterations = a.budget;
  const auto configs = parse_config_list(a.configs, cfg.model);
  const auto split = load_vton_layout(a.data, {cfg.image_size});
  ExperimentOptions opts;
  opts.eval_pairs = a.eval_pairs;
  opts.log = [](const std::string& s) { spdlog::info("{}", s); };
  ExperimentResult res = run_experiment(configs, cfg, split, opts);

  nlohmann::json doc;
  doc["budget"] = a.budget;
  doc["reports"] = nlohmann::json::array();
  for (const auto& r : res.reports) doc["reports"].push_back(r.to_json());
  doc["ordering"] = res.ordering;

  if (a.pose_ablation) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < res.reports.size(); ++i) {
      if (res.reports[i].value("ssim") > res.reports[best].value("ssim")) best = i;
    }
    spdlog::info("pose ablation on {}", res.reports[best].run_id);
    ExperimentResult pose = run_experiment(pose_ablation_configs(configs[best]), cfg, split, opts);
    doc["pose_ablation"] = nlohmann::json::array();
    for (const auto& r : pose.reports) doc["pose_ablation"].push_back(r.to_json());
    res.table += "\npose ablation\n" + pose.table;
  }

  std::cout << res.table << res.ordering << "\n";
  if (!a.out.empty()) {
    write_text(a.out, doc.dump(2) + "\n");
    spdlog::info("report written to {}", a.out);
  }
  return kExitOk;
}

int cmd_inspect(const std::string& path) {
  const TensorArchive a = TensorArchive::load(path);
  std::cout << "metadata:\n";
  for (const auto& [k, v] : a.metadata.items()) {
    if (k == "rng" || k == "order") continue;
    if (v.is_string()) {
      std::string s = v.get<std::string>();
      std::replace(s.begin(), s.end(), '\n', ' ');
      std::cout << "  " << k << ": " << s << "\n";
    } else {
      std::cout << "  " << k << ": " << v.dump() << "\n";
    }
  }
  std::size_t total = 0;
  std::cout << "tensors:\n";
  for (const auto& name : a.names()) {
    const auto shape = a.shape(name);
    std::size_t count = 1;
    std::string dims;
    for (auto d : shape) {
      count *= static_cast<std::size_t>(d);
      dims += (dims.empty() ? "" : "x") + std::to_string(d);
    }
    if (name.rfind("params/", 0) == 0) total += count;
    std::cout << "  " << name << " " << a.dtype(name) << " " << dims << "\n";
  }
  std::cout << "parameters: " << total << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  dvton::tune_allocator();
  spdlog::set_default_logger(spdlog::stderr_color_mt("dvton"));
  spdlog::set_pattern("[%H:%M:%S] %v");

  CLI::App app{"Diffusion-transformer virtual try-on toolkit"};
  app.require_subcommand(1, 1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic split in VITON-HD layout");
  gen_cmd->add_option("--n", gen.n, "Number of pairs")->required();
  gen_cmd->add_option("--seed", gen.seed, "Split seed");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--mode", gen.mode, "paired | unpaired")->check(CLI::IsMember({"paired", "unpaired"}));
  gen_cmd->add_option("--size", gen.size, "Image side in pixels");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a denoiser");
  train_cmd->add_option("--config", tr.config, "key=value config file");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--resume", tr.resume, "Checkpoint to continue from");

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Generate one try-on image");
  sample_cmd->add_option("--checkpoint", sa.checkpoint)->required();
  sample_cmd->add_option("--source", sa.source)->required();
  sample_cmd->add_option("--reference", sa.reference)->required();
  sample_cmd->add_option("--mask", sa.mask)->required();
  sample_cmd->add_option("--mask-polarity", sa.mask_polarity, "edit-white | keep-white");
  sample_cmd->add_option("--pose", sa.pose);
  sample_cmd->add_option("--steps", sa.steps, "Euler steps");
  sample_cmd->add_option("--seed", sa.seed, "Noise seed");
  sample_cmd->add_option("--out", sa.out, "Output PNG")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or generated images");
  eval_cmd->add_option("--checkpoint", ev.checkpoint);
  eval_cmd->add_option("--data", ev.data, "Dataset directory");
  eval_cmd->add_option("--mode", ev.mode, "paired | unpaired")->check(CLI::IsMember({"paired", "unpaired"}));
  eval_cmd->add_option("--report", ev.report, "Report JSON path")->required();
  eval_cmd->add_option("--generated", ev.generated, "Directory of generated <stem>.png images");
  eval_cmd->add_option("--features-generated", ev.features_generated, "Feature archive of generated images");
  eval_cmd->add_option("--features-real", ev.features_real, "Feature archive of real images");
  eval_cmd->add_option("--steps", ev.steps, "Euler steps");
  eval_cmd->add_option("--seed", ev.seed, "Noise seed");

  ExperimentArgs ex;
  auto* exp_cmd = app.add_subcommand("experiment", "Compare conditioning configurations");
  exp_cmd->add_option("--configs", ex.configs, "Comma list, e.g. token_concat,channel_concat+stitch");
  exp_cmd->add_option("--budget", ex.budget, "Training steps per configuration")->required();
  exp_cmd->add_option("--data", ex.data, "Paired dataset directory")->required();
  exp_cmd->add_option("--config", ex.config, "Base key=value config file");
  exp_cmd->add_option("--eval-pairs", ex.eval_pairs, "Pairs used for evaluation");
  exp_cmd->add_option("--out", ex.out, "Report JSON path");
  exp_cmd->add_flag("--pose-ablation", ex.pose_ablation, "Rerun the best config with each pose strategy");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print an archive's metadata and tensors");
  inspect_cmd->add_option("--checkpoint", inspect_path, "Checkpoint or feature archive")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(kExitUsage, "args", e.what());
  }
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*sample_cmd) return cmd_sample(sa);
    if (*eval_cmd) return cmd_eval(ev);
    if (*exp_cmd) return cmd_experiment(ex);
    if (*inspect_cmd) return cmd_inspect(inspect_path);
  } catch (const Error& e) {
    return report_error(exit_code(e.kind()), std::string(to_string(e.kind())), e.what());
  } catch (const std::exception& e) {
    return report_error(kExitData, "io", e.what());
  }
  return kExitUsage;
}
