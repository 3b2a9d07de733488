#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dvton/backbone.hpp"
#include "dvton/codec.hpp"
#include "dvton/data.hpp"
#include "dvton/flow.hpp"
#include "dvton/metrics.hpp"
#include "dvton/model_config.hpp"
#include "dvton/rng.hpp"

namespace dvton {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int iterations = 3000;
  std::uint64_t seed = 0;
  int image_size = 64;
  double bbox_relax_prob = 0.5;
  TimeDistribution time_distribution = TimeDistribution::kUniform;
  ModelConfig model;
  CodecConfig codec;
  SamplerConfig sampler;
  int checkpoint_interval = 500;
  int log_interval = 50;

  // 64x64 images, f=2, p=2, d=128, depth 6, 4 heads.
  static TrainConfig desk();
  // lr 1e-5, batch 32, 5000 iterations, 512x512 images.
  static TrainConfig paper();

  void validate() const;
  // Flat key=value text; parse_config(to_text()) reproduces the config.
  std::string to_text() const;
  bool operator==(const TrainConfig&) const = default;
};

// Short hex digest of the full configuration.
std::string config_hash(const TrainConfig& cfg);

struct ConfigKey {
  std::string name;
  std::string description;
};
const std::vector<ConfigKey>& config_keys();

struct ParsedConfig {
  TrainConfig config;
  std::vector<std::string> defaulted;  // documented keys absent from the file
};

// Flat UTF-8 key=value lines; '#' starts a comment. `preset` (desk|paper)
// selects the base values. Unknown keys, duplicates and bad values are
// ErrorKind::kFormat errors naming the key and line.
ParsedConfig parse_config(const std::string& text, const std::string& source = "config");
ParsedConfig load_config(const std::filesystem::path& path);

struct RunRecord {
  std::int64_t iteration = 0;
  double loss = 0.0;
  double wall_time = 0.0;  // seconds spent in the step
  double grad_norm = 0.0;
  std::string to_json_line() const;
};

// Everything that evolves during training.
struct TrainingState {
  ModelParams<float> params;
  ModelParams<float> adam_m;
  ModelParams<float> adam_v;
  std::int64_t step = 0;
  RandomStream data_order;
  RandomStream time;
  RandomStream noise;
  RandomStream padding;
  RandomStream augment;
  std::vector<int> order;  // current epoch permutation
  int cursor = 0;

  static TrainingState initial(const TrainConfig& cfg);
};

// Pixel-patch codec, or the learned codec fitted to the training images.
Codec make_codec(const TrainConfig& cfg, const std::vector<SamplePair>& train);

// Indices of the next batch; draws a fresh permutation at each epoch start.
std::vector<int> next_batch(TrainingState& state, int dataset_size, int batch_size);

// One optimizer step on `batch`. Throws ErrorKind::kNumeric naming the item
// when a loss is not finite.
RunRecord train_step(TrainingState& state, const std::vector<const SamplePair*>& batch,
                     const TrainConfig& cfg, const Codec& codec);

using RecordSink = std::function<void(const RunRecord&, const TrainingState&)>;

// Runs until state.step == until, calling sink after every step.
void train(TrainingState& state, const std::vector<SamplePair>& data, const TrainConfig& cfg,
           const Codec& codec, std::int64_t until, const RecordSink& sink = {});

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction.
void adam_update(TrainingState& state, const ModelParams<float>& grads, double lr);

struct Checkpoint {
  TrainConfig config;
  TrainingState state;
  Codec codec;
};

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg,
                     const TrainingState& state, const Codec& codec);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Also requires the stored model config to equal `expected`
// (ErrorKind::kCheckpoint otherwise).
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

// --- configuration comparison ----------------------------------------------

struct ExperimentOptions {
  int eval_pairs = 16;  // leading pairs of the split used for evaluation
  std::function<void(const std::string&)> log;
};

struct ExperimentResult {
  std::vector<MetricReport> reports;  // one per configuration, input order
  std::string table;                  // SSIM / FID / KID rows
  std::string ordering;               // observed vs reference ordering
};

// Swaps every reference for the next pair's reference and drops targets.
std::vector<SamplePair> unpaired_view(const std::vector<SamplePair>& split);

// Mean |velocity(mask) - velocity(inverted latent mask)| at a fixed x_t, t,
// with every other input held fixed.
double mask_sensitivity(const SamplePair& pair, const ModelParams<float>& params,
                        const ModelConfig& cfg, const Codec& codec, std::uint64_t seed);

// Trains each configuration from the same seed on `split` for cfg.iterations
// steps, then evaluates paired SSIM and unpaired FID/KID on the leading
// eval_pairs pairs. Reports carry "ssim", "fid", "kid", "mask_sensitivity"
// and "final_loss".
ExperimentResult run_experiment(const std::vector<ModelConfig>& configs, const TrainConfig& cfg,
                                const std::vector<SamplePair>& split, const ExperimentOptions& opts = {});

// The best configuration rerun with pose none / concat / stitch (concat only
// where the conditioning mode supports it).
std::vector<ModelConfig> pose_ablation_configs(const ModelConfig& winner);

// Ordering the desk-scale table is compared against.
inline constexpr const char* kReferenceOrdering = "token_concat > channel_concat > control_net";

std::string render_table(const std::vector<MetricReport>& reports);

}  // namespace dvton
