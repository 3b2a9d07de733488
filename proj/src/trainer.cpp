#include "dvton/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dvton/archive.hpp"
#include "dvton/conditioning.hpp"
#include "dvton/error.hpp"
#include "dvton/parallel.hpp"
#include "dvton/pipeline.hpp"

namespace dvton {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr const char* kCheckpointFormat = "dvton-checkpoint";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_integer(const std::string& s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument(s);
  return v;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct KeySpec {
  ConfigKey doc;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = [] {
    std::vector<KeySpec> k;
    auto add = [&](std::string name, std::string desc, auto set, auto get) {
      k.push_back({{std::move(name), std::move(desc)}, set, get});
    };
    add("learning_rate", "Adam step size",
        [](TrainConfig& c, const std::string& v) { c.learning_rate = parse_double(v); },
        [](const TrainConfig& c) { return fmt_double(c.learning_rate); });
    add("batch_size", "pairs per optimizer step",
        [](TrainConfig& c, const std::string& v) { c.batch_size = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.batch_size); });
    add("iterations", "total optimizer steps",
        [](TrainConfig& c, const std::string& v) { c.iterations = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.iterations); });
    add("seed", "master seed of every random stream",
        [](TrainConfig& c, const std::string& v) { c.seed = parse_integer<std::uint64_t>(v); },
        [](const TrainConfig& c) { return std::to_string(c.seed); });
    add("image_size", "square image side in pixels",
        [](TrainConfig& c, const std::string& v) { c.image_size = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.image_size); });
    add("bbox_relax_prob", "probability of replacing a mask by its bounding box",
        [](TrainConfig& c, const std::string& v) { c.bbox_relax_prob = parse_double(v); },
        [](const TrainConfig& c) { return fmt_double(c.bbox_relax_prob); });
    add("time_distribution", "uniform | logit_normal",
        [](TrainConfig& c, const std::string& v) { c.time_distribution = time_distribution_from_string(v); },
        [](const TrainConfig& c) { return to_string(c.time_distribution); });
    add("checkpoint_interval", "steps between checkpoints (0 = final only)",
        [](TrainConfig& c, const std::string& v) { c.checkpoint_interval = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.checkpoint_interval); });
    add("log_interval", "steps between log lines",
        [](TrainConfig& c, const std::string& v) { c.log_interval = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.log_interval); });
    add("config", "token_concat | channel_concat | control_net",
        [](TrainConfig& c, const std::string& v) { c.model.mode = conditioning_mode_from_string(v); },
        [](const TrainConfig& c) { return to_string(c.model.mode); });
    add("pose", "none | concat | stitch",
        [](TrainConfig& c, const std::string& v) { c.model.pose = pose_strategy_from_string(v); },
        [](const TrainConfig& c) { return to_string(c.model.pose); });
    add("depth", "transformer blocks",
        [](TrainConfig& c, const std::string& v) { c.model.depth = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.model.depth); });
    add("width", "token width d",
        [](TrainConfig& c, const std::string& v) { c.model.width = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.model.width); });
    add("heads", "attention heads",
        [](TrainConfig& c, const std::string& v) { c.model.heads = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.model.heads); });
    add("patch", "latent patch size p",
        [](TrainConfig& c, const std::string& v) { c.model.patch = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.model.patch); });
    add("mlp_ratio", "MLP hidden width over d",
        [](TrainConfig& c, const std::string& v) { c.model.mlp_ratio = parse_double(v); },
        [](const TrainConfig& c) { return fmt_double(c.model.mlp_ratio); });
    add("control_depth", "blocks copied into the control branch",
        [](TrainConfig& c, const std::string& v) { c.model.control_depth = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.model.control_depth); });
    add("time_freq_dim", "sinusoidal time embedding size",
        [](TrainConfig& c, const std::string& v) { c.model.time_freq_dim = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.model.time_freq_dim); });
    add("positions", "shared | offset (condition token positions)",
        [](TrainConfig& c, const std::string& v) { c.model.positions = position_mode_from_string(v); },
        [](const TrainConfig& c) { return to_string(c.model.positions); });
    add("mask_padding", "keep | edit (mask beside the reference)",
        [](TrainConfig& c, const std::string& v) { c.model.mask_padding = mask_padding_from_string(v); },
        [](const TrainConfig& c) { return to_string(c.model.mask_padding); });
    add("noise_padding", "gaussian | zeros (noise beside the reference)",
        [](TrainConfig& c, const std::string& v) { c.model.noise_padding = noise_padding_from_string(v); },
        [](const TrainConfig& c) { return to_string(c.model.noise_padding); });
    add("codec", "pixel-patch | learned",
        [](TrainConfig& c, const std::string& v) { c.codec.mode = codec_mode_from_string(v); },
        [](const TrainConfig& c) { return to_string(c.codec.mode); });
    add("codec_factor", "spatial downsampling factor f",
        [](TrainConfig& c, const std::string& v) { c.codec.factor = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.codec.factor); });
    add("latent_channels", "latent channels c (3 f^2 for pixel-patch)",
        [](TrainConfig& c, const std::string& v) {
          c.codec.channels = parse_integer<int>(v);
          c.model.latent_channels = c.codec.channels;
        },
        [](const TrainConfig& c) { return std::to_string(c.codec.channels); });
    add("mixing_seed", "seed of the orthonormal channel mixing, or none",
        [](TrainConfig& c, const std::string& v) {
          if (v == "none") {
            c.codec.mixing_seed.reset();
          } else {
            c.codec.mixing_seed = parse_integer<std::uint64_t>(v);
          }
        },
        [](const TrainConfig& c) {
          return c.codec.mixing_seed ? std::to_string(*c.codec.mixing_seed) : std::string("none");
        });
    add("sampler_steps", "Euler steps at sampling time",
        [](TrainConfig& c, const std::string& v) { c.sampler.steps = parse_integer<int>(v); },
        [](const TrainConfig& c) { return std::to_string(c.sampler.steps); });
    add("sampler_seed", "seed of sampling noise",
        [](TrainConfig& c, const std::string& v) { c.sampler.seed = parse_integer<std::uint64_t>(v); },
        [](const TrainConfig& c) { return std::to_string(c.sampler.seed); });
    return k;
  }();
  return specs;
}

template <typename T>
std::vector<Mat<T>*> arrays_of(ModelParams<T>& p) {
  std::vector<Mat<T>*> out;
  p.visit([&](const std::string&, Mat<T>& m) { out.push_back(&m); });
  return out;
}

template <typename T>
std::vector<const Mat<T>*> arrays_of(const ModelParams<T>& p) {
  std::vector<const Mat<T>*> out;
  p.visit([&](const std::string&, const Mat<T>& m) { out.push_back(&m); });
  return out;
}

void add_into(ModelParams<float>& total, const ModelParams<float>& g) {
  auto dst = arrays_of(total);
  auto src = arrays_of(g);
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
}

void set_zero(ModelParams<float>& p) {
  for (auto* m : arrays_of(p)) m->setZero();
}

struct PreparedItem {
  AssembledInput input;
  LatentGrid target;
  double t = 0.0;
};

}  // namespace

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.learning_rate = 1e-5;
  c.batch_size = 32;
  c.iterations = 5000;
  c.image_size = 512;
  c.codec.factor = 8;
  c.codec.channels = 3 * 8 * 8;
  c.model.latent_channels = c.codec.channels;
  return c;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::kInvalidArgument, msg); };
  if (!(learning_rate >= 0.0)) bad("learning_rate must be >= 0");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (iterations < 0) bad("iterations must be >= 0");
  if (image_size < 1) bad("image_size must be >= 1");
  if (!(bbox_relax_prob >= 0.0 && bbox_relax_prob <= 1.0)) bad("bbox_relax_prob must lie in [0, 1]");
  if (checkpoint_interval < 0) bad("checkpoint_interval must be >= 0");
  if (log_interval < 1) bad("log_interval must be >= 1");
  if (sampler.steps < 1) bad("sampler_steps must be >= 1");
  model.validate();
  codec.validate();
  if (model.latent_channels != codec.channels) bad("model and codec disagree on latent channels");
  if (image_size % (codec.factor * model.patch) != 0) {
    bad("image_size " + std::to_string(image_size) + " is not divisible by codec_factor * patch = " +
        std::to_string(codec.factor * model.patch));
  }
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& k : key_specs()) out += k.doc.name + "=" + k.get(*this) + "\n";
  return out;
}

std::string config_hash(const TrainConfig& cfg) { return hex64(fnv1a(cfg.to_text())); }

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k{{"preset", "desk | paper: base values the other keys override"}};
    for (const auto& s : key_specs()) k.push_back(s.doc);
    return k;
  }();
  return keys;
}

ParsedConfig parse_config(const std::string& text, const std::string& source) {
  std::map<std::string, std::pair<std::string, int>> values;
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::kFormat,
            source + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const bool known = key == "preset" || std::any_of(key_specs().begin(), key_specs().end(),
                                                      [&](const KeySpec& s) { return s.doc.name == key; });
    require(known, ErrorKind::kFormat, source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    require(!values.count(key), ErrorKind::kFormat,
            source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    values[key] = {value, lineno};
  }

  ParsedConfig out;
  if (auto it = values.find("preset"); it != values.end()) {
    const auto& [v, lineno] = it->second;
    if (v == "desk") {
      out.config = TrainConfig::desk();
    } else if (v == "paper") {
      out.config = TrainConfig::paper();
    } else {
      fail(ErrorKind::kFormat,
           source + ":" + std::to_string(lineno) + ": key 'preset': expected desk|paper, got '" + v + "'");
    }
  } else {
    out.defaulted.push_back("preset");
  }
  for (const auto& spec : key_specs()) {
    const auto it = values.find(spec.doc.name);
    if (it == values.end()) {
      out.defaulted.push_back(spec.doc.name);
      continue;
    }
    const auto& [v, lineno] = it->second;
    try {
      spec.set(out.config, v);
    } catch (const std::exception& e) {
      fail(ErrorKind::kFormat, source + ":" + std::to_string(lineno) + ": key '" + spec.doc.name +
                                   "': invalid value '" + v + "'");
    }
  }
  if (values.count("codec_factor") && !values.count("latent_channels") &&
      out.config.codec.mode == CodecMode::kPixelPatch) {
    out.config.codec.channels = 3 * out.config.codec.factor * out.config.codec.factor;
    out.config.model.latent_channels = out.config.codec.channels;
  }
  try {
    out.config.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, source + ": " + e.what());
  }
  return out;
}

ParsedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string RunRecord::to_json_line() const {
  nlohmann::json j{{"iteration", iteration}, {"loss", loss}, {"wall_time", wall_time}, {"grad_norm", grad_norm}};
  return j.dump();
}

TrainingState TrainingState::initial(const TrainConfig& cfg) {
  TrainingState s;
  s.params = init_params(cfg.model, RandomStream::named(cfg.seed, "init").next_u64());
  s.adam_m = s.params.zeros_like();
  s.adam_v = s.params.zeros_like();
  s.data_order = RandomStream::named(cfg.seed, "data-order");
  s.time = RandomStream::named(cfg.seed, "time");
  s.noise = RandomStream::named(cfg.seed, "noise");
  s.padding = RandomStream::named(cfg.seed, "padding");
  s.augment = RandomStream::named(cfg.seed, "augment");
  return s;
}

Codec make_codec(const TrainConfig& cfg, const std::vector<SamplePair>& train) {
  if (cfg.codec.mode == CodecMode::kPixelPatch) return Codec(cfg.codec);
  std::vector<Image> images;
  for (const auto& p : train) {
    images.push_back(p.source);
    images.push_back(p.reference);
  }
  return Codec::fit_learned(cfg.codec, images);
}

std::vector<int> next_batch(TrainingState& state, int dataset_size, int batch_size) {
  require(dataset_size >= 1, ErrorKind::kInvalidArgument, "training set is empty");
  std::vector<int> batch;
  while (static_cast<int>(batch.size()) < batch_size) {
    if (static_cast<int>(state.order.size()) != dataset_size || state.cursor >= dataset_size) {
      state.order.resize(dataset_size);
      for (int i = 0; i < dataset_size; ++i) state.order[i] = i;
      for (int i = dataset_size - 1; i > 0; --i) {
        std::swap(state.order[i], state.order[state.data_order.below(static_cast<std::uint64_t>(i) + 1)]);
      }
      state.cursor = 0;
    }
    batch.push_back(state.order[state.cursor++]);
  }
  return batch;
}

void adam_update(TrainingState& state, const ModelParams<float>& grads, double lr) {
  const double step = static_cast<double>(state.step + 1);
  const float inv_bc1 = static_cast<float>(1.0 / (1.0 - std::pow(kBeta1, step)));
  const float inv_bc2 = static_cast<float>(1.0 / (1.0 - std::pow(kBeta2, step)));
  const float b1 = static_cast<float>(kBeta1);
  const float b2 = static_cast<float>(kBeta2);
  const float eps = static_cast<float>(kAdamEps);
  const float lr_f = static_cast<float>(lr);
  auto p = arrays_of(state.params);
  auto m = arrays_of(state.adam_m);
  auto v = arrays_of(state.adam_v);
  auto g = arrays_of(grads);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i]->array() = b1 * m[i]->array() + (1.0f - b1) * g[i]->array();
    v[i]->array() = b2 * v[i]->array() + (1.0f - b2) * g[i]->array().square();
    if (lr_f == 0.0f) continue;
    p[i]->array() -= lr_f * (m[i]->array() * inv_bc1) / ((v[i]->array() * inv_bc2).sqrt() + eps);
  }
}

RunRecord train_step(TrainingState& state, const std::vector<const SamplePair*>& batch,
                     const TrainConfig& cfg, const Codec& codec) {
  require(!batch.empty(), ErrorKind::kInvalidArgument, "train_step needs a nonempty batch");
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig& model = cfg.model;
  const int n = static_cast<int>(batch.size());

  std::vector<PreparedItem> items(n);
  for (int i = 0; i < n; ++i) {
    const SamplePair aug = augment_mask(*batch[i], cfg.bbox_relax_prob, state.augment);
    const EncodedConditions enc = encode_conditions(aug, model, codec);
    const LatentGrid x_data = codec.encode(training_image(aug));
    items[i].t = draw_time(state.time, cfg.time_distribution);
    const LatentGrid noise = gaussian_like(x_data.h, x_data.w, x_data.c, state.noise);
    items[i].target = velocity_target(x_data, noise);
    items[i].input = assemble(make_bundle(enc, interpolate(x_data, noise, items[i].t).x), model, state.padding);
  }

  auto item_loss = [&](int i, ModelParams<float>& g) {
    float loss = 0.0f;
    try {
      loss = velocity_matching_loss<float>(items[i].input, items[i].target, items[i].t, state.params, model, &g);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumeric) throw;
      loss = std::numeric_limits<float>::quiet_NaN();
    }
    require(std::isfinite(loss), ErrorKind::kNumeric,
            "non-finite loss at step " + std::to_string(state.step + 1) + " on item '" + batch[i]->name + "'");
    return static_cast<double>(loss);
  };

  ModelParams<float> total = state.params.zeros_like();
  std::vector<double> losses(n);
  const int threads = std::min(default_threads(), n);
  if (threads <= 1) {
    ModelParams<float> g = state.params.zeros_like();
    for (int i = 0; i < n; ++i) {
      if (i > 0) set_zero(g);
      losses[i] = item_loss(i, g);
      add_into(total, g);
    }
  } else {
    std::vector<ModelParams<float>> per_item(n, total);
    parallel_for(n, threads, [&](int i) { losses[i] = item_loss(i, per_item[i]); });
    for (int i = 0; i < n; ++i) add_into(total, per_item[i]);
  }

  const float inv_n = 1.0f / static_cast<float>(n);
  double sq = 0.0;
  for (auto* a : arrays_of(total)) {
    *a *= inv_n;
    sq += a->template cast<double>().squaredNorm();
  }
  adam_update(state, total, cfg.learning_rate);
  ++state.step;

  RunRecord rec;
  rec.iteration = state.step;
  double sum = 0.0;
  for (double l : losses) sum += l;
  rec.loss = sum / n;
  rec.grad_norm = std::sqrt(sq);
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

void train(TrainingState& state, const std::vector<SamplePair>& data, const TrainConfig& cfg,
           const Codec& codec, std::int64_t until, const RecordSink& sink) {
  while (state.step < until) {
    const std::vector<int> idx = next_batch(state, static_cast<int>(data.size()), cfg.batch_size);
    std::vector<const SamplePair*> batch;
    for (int i : idx) batch.push_back(&data[i]);
    const RunRecord rec = train_step(state, batch, cfg, codec);
    if (sink) sink(rec, state);
  }
}

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg, const TrainingState& state,
                     const Codec& codec) {
  TensorArchive a;
  a.metadata["format"] = kCheckpointFormat;
  a.metadata["config"] = cfg.to_text();
  a.metadata["config_hash"] = config_hash(cfg);
  a.metadata["step"] = state.step;
  a.metadata["order"] = state.order;
  a.metadata["cursor"] = state.cursor;
  a.metadata["rng"] = {{"data_order", state.data_order.state()},
                       {"time", state.time.state()},
                       {"noise", state.noise.state()},
                       {"padding", state.padding.state()},
                       {"augment", state.augment.state()}};
  state.params.visit([&](const std::string& name, const MatF& m) { a.add("params/" + name, m); });
  state.adam_m.visit([&](const std::string& name, const MatF& m) { a.add("adam_m/" + name, m); });
  state.adam_v.visit([&](const std::string& name, const MatF& m) { a.add("adam_v/" + name, m); });
  if (codec.config().mode == CodecMode::kLearned) {
    a.add("codec/basis", MatD(codec.mixing()));
    a.add("codec/mean", MatD(codec.mean().transpose()));
  }
  a.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive a = TensorArchive::load(path);
  const std::string p = path.string();
  require(a.metadata.value("format", "") == kCheckpointFormat, ErrorKind::kCheckpoint,
          "not a checkpoint: " + p);
  TrainConfig cfg;
  TrainingState state;
  try {
    cfg = parse_config(a.metadata.at("config").get<std::string>(), p + "[config]").config;
    state.step = a.metadata.at("step").get<std::int64_t>();
    state.order = a.metadata.at("order").get<std::vector<int>>();
    state.cursor = a.metadata.at("cursor").get<int>();
    const auto& rng = a.metadata.at("rng");
    state.data_order.set_state(rng.at("data_order").get<std::string>());
    state.time.set_state(rng.at("time").get<std::string>());
    state.noise.set_state(rng.at("noise").get<std::string>());
    state.padding.set_state(rng.at("padding").get<std::string>());
    state.augment.set_state(rng.at("augment").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCheckpoint, "corrupt checkpoint manifest in " + p + ": " + e.what());
  }

  state.params = init_params(cfg.model, 0).zeros_like();
  state.adam_m = state.params.zeros_like();
  state.adam_v = state.params.zeros_like();
  auto fill = [&](const std::string& prefix, ModelParams<float>& dst) {
    dst.visit([&](const std::string& name, MatF& m) {
      const std::string key = prefix + name;
      require(a.has(key), ErrorKind::kCheckpoint, "checkpoint " + p + " lacks tensor '" + key + "'");
      const auto shape = a.shape(key);
      const bool same = shape.size() == 2 && shape[0] == m.rows() && shape[1] == m.cols();
      require(same, ErrorKind::kCheckpoint,
              "tensor '" + key + "' in " + p + " does not match the stored model config (expected " +
                  std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")");
      m = a.get_f32(key);
    });
  };
  fill("params/", state.params);
  fill("adam_m/", state.adam_m);
  fill("adam_v/", state.adam_v);

  if (cfg.codec.mode == CodecMode::kLearned) {
    require(a.has("codec/basis") && a.has("codec/mean"), ErrorKind::kCheckpoint,
            "checkpoint " + p + " lacks the learned codec weights");
    const MatD mean = a.get_f64("codec/mean");
    return {cfg, std::move(state),
            Codec(cfg.codec, Codec::Matrix(a.get_f64("codec/basis")), Eigen::VectorXd(mean.transpose()))};
  }
  return {cfg, std::move(state), Codec(cfg.codec)};
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  require(ck.config.model == expected, ErrorKind::kCheckpoint,
          "checkpoint model config {" + ck.config.model.canonical() + "} differs from the expected {" +
              expected.canonical() + "}");
  return ck;
}

std::vector<SamplePair> unpaired_view(const std::vector<SamplePair>& split) {
  require(split.size() >= 2, ErrorKind::kInvalidArgument, "an unpaired view needs at least 2 pairs");
  std::vector<SamplePair> out = split;
  const std::size_t n = split.size();
  for (std::size_t i = 0; i < n; ++i) {
    const SamplePair& donor = split[(i + 1) % n];
    out[i].reference = donor.reference;
    out[i].cloth_name = donor.cloth_name;
    out[i].target.reset();
    if (out[i].synth && donor.synth) out[i].synth->reference_garment = donor.synth->reference_garment;
  }
  return out;
}

double mask_sensitivity(const SamplePair& pair, const ModelParams<float>& params, const ModelConfig& cfg,
                        const Codec& codec, std::uint64_t seed) {
  const EncodedConditions enc = encode_conditions(pair, cfg, codec);
  const LatentGrid x_data = codec.encode(training_image(pair));
  const LatentGrid noise = initial_noise(x_data.h, x_data.w, x_data.c, seed);
  const LatentGrid x_t = interpolate(x_data, noise, 0.5).x;
  ConditionBundle a = make_bundle(enc, x_t);
  ConditionBundle b = a;
  for (auto& v : b.mask->data) v = static_cast<std::uint8_t>(1 - v);
  RandomStream pa = RandomStream::named(seed, "sensitivity-padding");
  RandomStream pb = pa;
  const LatentGrid va = predict_denoised(a, 0.5, params, cfg, pa);
  const LatentGrid vb = predict_denoised(b, 0.5, params, cfg, pb);
  double sum = 0.0;
  for (std::size_t i = 0; i < va.data.size(); ++i) sum += std::abs(static_cast<double>(va.data[i]) - vb.data[i]);
  return sum / static_cast<double>(va.data.size());
}

std::vector<ModelConfig> pose_ablation_configs(const ModelConfig& winner) {
  std::vector<ModelConfig> out;
  for (PoseStrategy p : {PoseStrategy::kNone, PoseStrategy::kConcat, PoseStrategy::kStitch}) {
    if (p == PoseStrategy::kConcat && winner.mode != ConditioningMode::kTokenConcat) continue;
    ModelConfig c = winner;
    c.pose = p;
    out.push_back(c);
  }
  return out;
}

std::string render_table(const std::vector<MetricReport>& reports) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %10s %12s %14s %14s\n", "config", "SSIM(up)", "FID(down)",
                "KIDx1000(down)", "mask_sens");
  out += line;
  auto get = [](const MetricReport& r, const char* k) {
    return r.has(k) ? r.value(k) : std::numeric_limits<double>::quiet_NaN();
  };
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-28s %10.4f %12.4f %14.4f %14.3e\n", r.run_id.c_str(), get(r, "ssim"),
                  get(r, "fid"), get(r, "kid"), get(r, "mask_sensitivity"));
    out += line;
  }
  return out;
}

namespace {

std::string run_name(const ModelConfig& m) {
  std::string name = to_string(m.mode);
  if (m.pose != PoseStrategy::kNone) name += "+pose_" + to_string(m.pose);
  return name;
}

std::string ordering_summary(const std::vector<ModelConfig>& configs, const std::vector<MetricReport>& reports) {
  std::vector<std::size_t> idx(reports.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return reports[a].value("ssim") > reports[b].value("ssim"); });
  std::string observed;
  std::vector<ConditioningMode> observed_modes;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (k) observed += " > ";
    observed += reports[idx[k]].run_id;
    observed_modes.push_back(configs[idx[k]].mode);
  }
  const std::vector<ConditioningMode> reference{ConditioningMode::kTokenConcat, ConditioningMode::kChannelConcat,
                                                ConditioningMode::kControlNet};
  std::vector<ConditioningMode> expected;
  for (auto m : reference) {
    if (std::find(observed_modes.begin(), observed_modes.end(), m) != observed_modes.end()) expected.push_back(m);
  }
  std::vector<ConditioningMode> distinct;
  for (auto m : observed_modes) {
    if (std::find(distinct.begin(), distinct.end(), m) == distinct.end()) distinct.push_back(m);
  }
  const bool match = distinct == expected;
  return "ordering by SSIM: observed " + observed + "; reference " + kReferenceOrdering + "; " +
         (match ? "matches" : "differs") + " (informational)";
}

}  // namespace

ExperimentResult run_experiment(const std::vector<ModelConfig>& configs, const TrainConfig& cfg,
                                const std::vector<SamplePair>& split, const ExperimentOptions& opts) {
  require(!configs.empty(), ErrorKind::kInvalidArgument, "experiment needs at least one configuration");
  require(split.size() >= 2, ErrorKind::kInvalidArgument, "experiment needs at least 2 pairs");
  for (const auto& p : split) {
    require(p.target.has_value(), ErrorKind::kInvalidArgument,
            "experiment split must be paired; pair '" + p.name + "' has no target");
  }
  const int n_eval = std::clamp(opts.eval_pairs, 2, static_cast<int>(split.size()));
  const std::vector<SamplePair> paired(split.begin(), split.begin() + n_eval);
  const std::vector<SamplePair> unpaired = unpaired_view(paired);
  const ProjectionExtractor extractor;
  auto log = [&](const std::string& s) {
    if (opts.log) opts.log(s);
  };

  ExperimentResult result;
  for (const ModelConfig& model : configs) {
    TrainConfig c = cfg;
    c.model = model;
    c.validate();
    const Codec codec = make_codec(c, split);
    TrainingState state = TrainingState::initial(c);
    double last_loss = 0.0;
    const std::string name = run_name(model);
    train(state, split, c, codec, c.iterations, [&](const RunRecord& r, const TrainingState&) {
      last_loss = r.loss;
      if (r.iteration % c.log_interval == 0 || r.iteration == c.iterations) {
        log(name + " step " + std::to_string(r.iteration) + " loss " + fmt_double(r.loss));
      }
    });

    auto generate = [&](const std::vector<SamplePair>& pairs) {
      std::vector<Image> out(pairs.size());
      parallel_for(static_cast<int>(pairs.size()), default_threads(), [&](int i) {
        SamplerConfig s = c.sampler;
        s.seed = item_seed(c.sampler.seed, i);
        out[i] = synthesize(pairs[i], state.params, model, codec, s);
      });
      return out;
    };
    const MetricReport pr = evaluate_run(generate(paired), paired, extractor, SplitMode::kPaired);
    const MetricReport ur = evaluate_run(generate(unpaired), unpaired, extractor, SplitMode::kUnpaired);

    double sens = 0.0;
    const int n_sens = std::min(n_eval, 4);
    for (int i = 0; i < n_sens; ++i) sens += mask_sensitivity(paired[i], state.params, model, codec, item_seed(c.seed, i));

    MetricReport r;
    r.run_id = name;
    r.config_hash = config_hash(c);
    r.split_id = pr.split_id;
    r.n = n_eval;
    r.set("ssim", pr.value("ssim"));
    r.set("fid", ur.value("fid"));
    r.set("kid", ur.value("kid"));
    r.set("mask_sensitivity", sens / n_sens);
    r.set("final_loss", last_loss);
    for (const auto& [k, v] : r.metrics) {
      require(std::isfinite(v), ErrorKind::kNumeric, "metric " + k + " of " + name + " is not finite");
    }
    log(name + " done: ssim " + fmt_double(r.value("ssim")));
    result.reports.push_back(std::move(r));
  }
  result.table = render_table(result.reports);
  result.ordering = ordering_summary(configs, result.reports);
  return result;
}

}  // namespace dvton
