#include "rcalad/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "rcalad/error.hpp"
#include "rcalad/rng.hpp"

namespace rcalad {

namespace {

// Reads the keys of one mapping and remembers which ones were consumed, so
// leftovers can be reported as unknown.
class Section {
public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    require(!node_ || node_.IsNull() || node_.IsMap(), ErrorCode::config,
            (path_.empty() ? std::string("config") : path_) + " must be a mapping");
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  template <class T>
  void read(const std::string& key, T& out) {
    used_.insert(key);
    if (!has(key)) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      fail(ErrorCode::config, "bad value for " + where(key));
    }
  }

  template <class T, class F>
  void read_as(const std::string& key, T& out, F&& parse) {
    std::string text;
    read(key, text);
    if (!has(key)) return;
    try {
      out = parse(text);
    } catch (const Error& e) {
      fail(ErrorCode::config, where(key) + ": " + e.what());
    }
  }

  Section child(const std::string& key) {
    used_.insert(key);
    return Section(has(key) ? node_[key] : YAML::Node(), where(key));
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      require(used_.count(key) == 1, ErrorCode::config, "unknown config key '" + where(key) + "'");
    }
  }

private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

std::string str(const std::filesystem::path& p) { return p.string(); }

} // namespace

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "toy") return DatasetKind::toy;
  if (name == "arrhythmia") return DatasetKind::arrhythmia;
  if (name == "kdd") return DatasetKind::kdd;
  if (name == "thyroid") return DatasetKind::thyroid;
  if (name == "musk") return DatasetKind::musk;
  if (name == "csv") return DatasetKind::csv;
  fail(ErrorCode::config, "unknown dataset '" + std::string(name) + "'");
}

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::toy: return "toy";
    case DatasetKind::arrhythmia: return "arrhythmia";
    case DatasetKind::kdd: return "kdd";
    case DatasetKind::thyroid: return "thyroid";
    case DatasetKind::musk: return "musk";
    case DatasetKind::csv: return "csv";
  }
  return "?";
}

double default_alpha(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::arrhythmia: return 0.15;
    case DatasetKind::kdd: return 0.20;
    case DatasetKind::thyroid: return 0.025;
    case DatasetKind::musk: return 0.032;
    case DatasetKind::toy: return 100.0 / 600.0;  // matches the default test mix
    case DatasetKind::csv: return 0.1;
  }
  return 0.1;
}

ArchKind ExperimentConfig::arch_kind() const {
  if (arch.kind) return *arch.kind;
  switch (dataset.kind) {
    case DatasetKind::toy: return ArchKind::toy;
    case DatasetKind::kdd: return ArchKind::kdd;
    case DatasetKind::thyroid: return ArchKind::thyroid;
    case DatasetKind::musk: return ArchKind::musk;
    case DatasetKind::arrhythmia:
    case DatasetKind::csv: return ArchKind::arrhythmia;
  }
  return ArchKind::arrhythmia;
}

void ExperimentConfig::validate() const {
  require(runs >= 1, ErrorCode::config, "runs must be >= 1");
  require(alpha >= 0 && alpha <= 1, ErrorCode::config, "alpha must lie in [0,1]");
  require(dataset.subsample > 0 && dataset.subsample <= 1, ErrorCode::config,
          "dataset.subsample must lie in (0,1]");
  require(dataset.kind != DatasetKind::csv || !dataset.path.empty(), ErrorCode::config,
          "dataset.path is required for csv datasets");
  require(dataset.kind != DatasetKind::csv || !dataset.schema.empty(), ErrorCode::config,
          "dataset.schema is required for csv datasets");
  if (dataset.kind == DatasetKind::toy)
    require(dataset.toy.train_normal >= 2 && dataset.toy.noise >= 0, ErrorCode::config,
            "toy protocol needs >= 2 training rows and noise >= 0");
  split.validate();
  train.validate();
  // the score must be computable from the variant's discriminators
  const Toggles& t = train.toggles;
  const bool ok = [&] {
    switch (score.kind) {
      case ScoreKind::l1:
      case ScoreKind::l2: return true;
      case ScoreKind::logits:
      case ScoreKind::features: return t.use_dxx;
      case ScoreKind::fm: return t.use_dxxzz;
      case ScoreKind::all: return t.use_dxx && t.use_dzz && t.use_dxxzz;
    }
    return false;
  }();
  require(ok, ErrorCode::config,
          std::string(to_string(score.kind)) + " is not available for variant " +
              std::string(to_string(variant)) + " / these toggles");
}

ExperimentConfig parse_config(std::string_view yaml, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml));
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::config, source + ": " + e.what());
  }
  ExperimentConfig c;
  Section top(root, "");

  Section ds = top.child("dataset");
  ds.read_as("name", c.dataset.kind, parse_dataset_kind);
  std::string path, schema;
  ds.read("path", path);
  ds.read("schema", schema);
  c.dataset.path = path;
  c.dataset.schema = schema;
  ds.read("row_limit", c.dataset.row_limit);
  ds.read("subsample", c.dataset.subsample);
  ds.read_as("scale", c.dataset.scale, parse_scale_method);
  Section toy = ds.child("toy");
  toy.read_as("kind", c.dataset.toy.kind, parse_toy_kind);
  toy.read("train_normal", c.dataset.toy.train_normal);
  toy.read("test_normal", c.dataset.toy.test_normal);
  toy.read("test_anomaly", c.dataset.toy.test_anomaly);
  toy.read("noise", c.dataset.toy.noise);
  toy.finish();
  // the toy ring is already unit scale; standardizing would distort it
  if (!ds.has("scale") && c.dataset.kind == DatasetKind::toy) c.dataset.scale = ScaleMethod::none;
  ds.finish();

  // published batch/epochs for the tabular sets; toy values were tuned
  switch (c.dataset.kind) {
    case DatasetKind::kdd:
      c.train.batch_size = 50;
      c.train.max_epochs = 100;
      break;
    case DatasetKind::toy:
      c.train.batch_size = 64;
      c.train.max_epochs = 200;
      c.train.adam.lr = Real(1e-4);
      break;
    default:
      c.train.batch_size = 32;
      c.train.max_epochs = 1000;
  }

  Section arch = top.child("arch");
  ArchKind ak{};
  arch.read_as("kind", ak, parse_arch_kind);
  if (arch.has("kind")) c.arch.kind = ak;
  arch.read("latent_dim", c.arch.latent_dim);
  arch.finish();

  Section tr = top.child("train");
  tr.read_as("variant", c.variant, parse_variant);
  c.train.toggles = toggles_for(c.variant);
  // individual switches override the variant, e.g. for ablation grids
  Section tg = tr.child("toggles");
  tg.read("dxx", c.train.toggles.use_dxx);
  tg.read("dzz", c.train.toggles.use_dzz);
  tg.read("dxxzz", c.train.toggles.use_dxxzz);
  tg.read("sigma", c.train.toggles.use_sigma);
  tg.finish();
  tr.read("epochs", c.train.max_epochs);
  tr.read("batch_size", c.train.batch_size);
  double lr = c.train.adam.lr, b1 = c.train.adam.beta1, b2 = c.train.adam.beta2,
         ratio = c.train.sigma_batch_ratio;
  tr.read("lr", lr);
  tr.read("beta1", b1);
  tr.read("beta2", b2);
  tr.read("sigma_batch_ratio", ratio);
  c.train.adam.lr = static_cast<Real>(lr);
  c.train.adam.beta1 = static_cast<Real>(b1);
  c.train.adam.beta2 = static_cast<Real>(b2);
  c.train.sigma_batch_ratio = static_cast<Real>(ratio);
  tr.read_as("sigma", c.train.sigma, parse_sigma_kind);
  tr.read("d_steps_per_g_step", c.train.d_steps_per_g_step);
  tr.read("power_iterations", c.train.power_iterations);
  tr.read("saturating_generator_loss", c.train.saturating_generator_loss);
  tr.read("encoder_adversarial_real", c.train.encoder_adversarial_real);
  tr.read("checkpoint_every", c.train.checkpoint_every);
  tr.finish();

  Section sc = top.child("score");
  sc.read_as("kind", c.score.kind, parse_score_kind);
  Section orient = sc.child("orientation");
  for (ScoreKind k : kAllScores) {
    const std::string key(to_string(k));
    orient.read_as(key, c.score.orientation.sign[static_cast<std::size_t>(k)],
                   [](const std::string& s) {
                     if (s == "as_is") return Sign::as_is;
                     if (s == "negate") return Sign::negate;
                     fail(ErrorCode::config, "expected as_is or negate, got '" + s + "'");
                   });
  }
  orient.finish();
  sc.finish();

  Section sp = top.child("split");
  sp.read("train_fraction", c.split.train_fraction);
  sp.read("validation_fraction", c.split.validation_fraction);
  c.alpha = default_alpha(c.dataset.kind);
  sp.read("alpha", c.alpha);
  sp.finish();

  top.read("runs", c.runs);
  top.read("seed", c.seed);
  std::string out = c.output.string(), baseline;
  top.read("output", out);
  top.read("baseline", baseline);
  c.output = out;
  c.baseline = baseline;
  top.finish();

  c.train.seed = c.seed;
  c.split.seed = c.seed;
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::config, source + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

namespace {

void emit_body(YAML::Emitter& y, const ExperimentConfig& c, bool with_outputs) {
  y << YAML::BeginMap;
  y << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "name" << YAML::Value << std::string(to_string(c.dataset.kind));
  y << YAML::Key << "path" << YAML::Value << str(c.dataset.path);
  y << YAML::Key << "schema" << YAML::Value << str(c.dataset.schema);
  y << YAML::Key << "row_limit" << YAML::Value << c.dataset.row_limit;
  y << YAML::Key << "subsample" << YAML::Value << c.dataset.subsample;
  y << YAML::Key << "scale" << YAML::Value << std::string(to_string(c.dataset.scale));
  y << YAML::Key << "toy" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "kind" << YAML::Value
    << (c.dataset.toy.kind == ToyKind::gaussian_ring ? "gaussian_ring" : "two_gaussians");
  y << YAML::Key << "train_normal" << YAML::Value << c.dataset.toy.train_normal;
  y << YAML::Key << "test_normal" << YAML::Value << c.dataset.toy.test_normal;
  y << YAML::Key << "test_anomaly" << YAML::Value << c.dataset.toy.test_anomaly;
  y << YAML::Key << "noise" << YAML::Value << c.dataset.toy.noise;
  y << YAML::EndMap << YAML::EndMap;

  y << YAML::Key << "arch" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "kind" << YAML::Value << std::string(to_string(c.arch_kind()));
  y << YAML::Key << "latent_dim" << YAML::Value << c.arch.latent_dim;
  y << YAML::EndMap;

  const TrainConfig& t = c.train;
  y << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "variant" << YAML::Value << std::string(to_string(c.variant));
  y << YAML::Key << "toggles" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "dxx" << YAML::Value << t.toggles.use_dxx;
  y << YAML::Key << "dzz" << YAML::Value << t.toggles.use_dzz;
  y << YAML::Key << "dxxzz" << YAML::Value << t.toggles.use_dxxzz;
  y << YAML::Key << "sigma" << YAML::Value << t.toggles.use_sigma;
  y << YAML::EndMap;
  y << YAML::Key << "epochs" << YAML::Value << t.max_epochs;
  y << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
  y << YAML::Key << "lr" << YAML::Value << static_cast<double>(t.adam.lr);
  y << YAML::Key << "beta1" << YAML::Value << static_cast<double>(t.adam.beta1);
  y << YAML::Key << "beta2" << YAML::Value << static_cast<double>(t.adam.beta2);
  y << YAML::Key << "sigma" << YAML::Value << std::string(to_string(t.sigma));
  y << YAML::Key << "sigma_batch_ratio" << YAML::Value << static_cast<double>(t.sigma_batch_ratio);
  y << YAML::Key << "d_steps_per_g_step" << YAML::Value << t.d_steps_per_g_step;
  y << YAML::Key << "power_iterations" << YAML::Value << t.power_iterations;
  y << YAML::Key << "saturating_generator_loss" << YAML::Value << t.saturating_generator_loss;
  y << YAML::Key << "encoder_adversarial_real" << YAML::Value << t.encoder_adversarial_real;
  y << YAML::Key << "checkpoint_every" << YAML::Value << t.checkpoint_every;
  y << YAML::EndMap;

  y << YAML::Key << "score" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "kind" << YAML::Value << std::string(to_string(c.score.kind));
  y << YAML::Key << "orientation" << YAML::Value << YAML::BeginMap;
  for (ScoreKind k : kAllScores)
    y << YAML::Key << std::string(to_string(k)) << YAML::Value
      << (c.score.orientation.of(k) == Sign::negate ? "negate" : "as_is");
  y << YAML::EndMap << YAML::EndMap;

  y << YAML::Key << "split" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "train_fraction" << YAML::Value << c.split.train_fraction;
  y << YAML::Key << "validation_fraction" << YAML::Value << c.split.validation_fraction;
  y << YAML::Key << "alpha" << YAML::Value << c.alpha;
  y << YAML::EndMap;

  y << YAML::Key << "runs" << YAML::Value << c.runs;
  y << YAML::Key << "seed" << YAML::Value << c.seed;
  if (with_outputs) {
    y << YAML::Key << "output" << YAML::Value << str(c.output);
    y << YAML::Key << "baseline" << YAML::Value << str(c.baseline);
  }
  y << YAML::EndMap;
}

std::string emit(const ExperimentConfig& c, bool with_outputs) {
  YAML::Emitter y;
  y.SetDoublePrecision(17);
  emit_body(y, c, with_outputs);
  return std::string(y.c_str()) + "\n";
}

} // namespace

std::string to_yaml(const ExperimentConfig& config) { return emit(config, true); }

std::uint64_t config_hash(const ExperimentConfig& config) { return fnv1a64(emit(config, false)); }

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("RCALAD_DATA_DIR"); env && *env) return env;
  return "data";
}

std::filesystem::path resolve_data_path(const DatasetConfig& d) {
  if (!d.path.empty()) return d.path;
  switch (d.kind) {
    case DatasetKind::arrhythmia: return data_dir() / "arrhythmia.data";
    case DatasetKind::kdd: return data_dir() / "kddcup.data_10_percent";
    case DatasetKind::thyroid: return data_dir() / "thyroid.csv";
    case DatasetKind::musk: return data_dir() / "musk.csv";
    default: return {};
  }
}

std::filesystem::path resolve_schema_path(const DatasetConfig& d) {
  if (!d.schema.empty()) return d.schema;
  const std::string file = std::string(to_string(d.kind)) + ".yaml";
  const auto local = data_dir() / "schemas" / file;
  if (std::filesystem::exists(local)) return local;
#ifdef RCALAD_SCHEMA_DIR
  return std::filesystem::path(RCALAD_SCHEMA_DIR) / file;
#else
  return local;
#endif
}

} // namespace rcalad
