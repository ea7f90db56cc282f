#include "rcalad/experiment.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "rcalad/checkpoint.hpp"
#include "rcalad/error.hpp"
#include "rcalad/rng.hpp"

namespace rcalad {

namespace {

using Json = nlohmann::json;

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

Json maybe(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorCode::io, "failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string run_dir_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "run_%03zu", i);
  return buf;
}

PreparedData prepare_toy(const ExperimentConfig& c, std::uint64_t seed) {
  const ToyProtocol& t = c.dataset.toy;
  const RngStream root = RngStream(seed).derive("toy");
  PreparedData p;
  p.train = synth_toy({t.kind, t.train_normal, 0, t.noise, root.derive("train").key()});
  p.test = synth_toy({t.kind, t.test_normal, t.test_anomaly, t.noise, root.derive("test").key()});
  p.validation = Dataset{Tensor::matrix(0, 2), {}};
  p.feature_names = {"f0", "f1"};
  p.source_rows = p.train.size() + p.test.size();
  return p;
}

PreparedData prepare_tabular(const ExperimentConfig& c, std::uint64_t seed) {
  const auto path = resolve_data_path(c.dataset);
  require(std::filesystem::exists(path), ErrorCode::ingestion,
          "dataset file not found: " + path.string() +
              " (set dataset.path or RCALAD_DATA_DIR)");
  const Schema schema = Schema::load(resolve_schema_path(c.dataset));
  const RawTable table = load_tabular(path, schema, c.dataset.row_limit);
  require(!table.labels.empty(), ErrorCode::ingestion,
          path.string() + ": schema has no label column");

  // vocabulary from the whole file so the width does not depend on the seed
  const OneHotEncoder enc = OneHotEncoder::fit(table);
  PreparedData p;
  p.feature_names = enc.feature_names();
  p.dropped_columns = table.dropped;
  p.source_rows = table.size();
  Dataset all{enc.transform(table, &p.unseen_categories), table.labels};
  if (schema.expected_features)
    require(all.x.cols() == schema.expected_features, ErrorCode::ingestion,
            path.string() + ": encoded width " + std::to_string(all.x.cols()) + ", schema expects " +
                std::to_string(schema.expected_features));

  if (c.dataset.subsample < 1) {
    const auto n = static_cast<std::size_t>(
        std::llround(c.dataset.subsample * static_cast<double>(all.size())));
    const auto rows = stratified_subsample(all.y, n, RngStream(seed).derive("subsample").key());
    all = all.select(rows);
  }
  SplitSpec spec = c.split;
  spec.seed = seed;
  const Split s = split(all.y, spec);
  Dataset train = all.select(s.train_normal);
  Dataset val = all.select(s.validation);
  Dataset test = all.select(s.test);
  const Scaler scaler = Scaler::fit(train.x, c.dataset.scale);
  train.x = scaler.transform(train.x);
  val.x = scaler.transform(val.x);
  test.x = scaler.transform(test.x);
  p.train = std::move(train);
  p.validation = std::move(val);
  p.test = std::move(test);
  return p;
}

} // namespace

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  PreparedData p =
      config.dataset.kind == DatasetKind::toy ? prepare_toy(config, seed) : prepare_tabular(config, seed);
  if (config.dataset.kind == DatasetKind::toy && config.dataset.scale != ScaleMethod::none) {
    const Scaler s = Scaler::fit(p.train.x, config.dataset.scale);
    p.train.x = s.transform(p.train.x);
    p.test.x = s.transform(p.test.x);
  }
  return p;
}

ModelBundle build_bundle(const ExperimentConfig& config, std::size_t input_dim, std::uint64_t seed) {
  const BundleSpec spec = default_arch(config.arch_kind(), input_dim, config.arch.latent_dim);
  RngStream rng = RngStream(seed).derive("model");
  return ModelBundle::build(spec, config.train.toggles, rng);
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RCALAD_THREADS"); env && *env) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

RunResult run_single(const ExperimentConfig& config, std::size_t index, const RunOptions& options) {
  RunResult r;
  r.index = index;
  r.seed = config.run_seed(index);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const PreparedData data = prepare_data(config, r.seed);
    ModelBundle bundle = build_bundle(config, data.input_dim(), r.seed);
    TrainConfig tc = config.train;
    tc.seed = r.seed;
    Trainer trainer(bundle, tc);
    const std::uint64_t hash = config_hash(config);
    Trainer::EpochHook hook;
    std::filesystem::path ckdir;
    if (options.checkpoint_dir) {
      ckdir = *options.checkpoint_dir / run_dir_name(index);
      hook = [&](const Trainer& tr, const EpochRecord& rec) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%05zu.ckpt", rec.epoch + 1);
        save_checkpoint(ckdir / name, tr, hash);
      };
    }
    r.history = trainer.fit(data.train.x, hook);
    if (options.checkpoint_dir) save_checkpoint(ckdir / "final.ckpt", trainer, hash);
    if (r.history.failure) {
      r.failure = "numerical: " + *r.history.failure;
    } else {
      r.scores = orient(score_batch(bundle, data.test.x), config.score.orientation);
      r.labels = data.test.y;
      const ScoreColumn& s = r.scores.get(config.score.kind);
      const Classification c = prf1(threshold_flags(s, config.alpha), r.labels);
      Metrics m = evaluate(s, r.labels, config.alpha);
      r.metrics = m;
      r.counts = c.counts;
    }
  } catch (const Error& e) {
    r.failure = std::string(to_string(e.code())) + ": " + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (options.log) {
    std::string line = run_dir_name(index) + " seed " + std::to_string(r.seed);
    if (r.metrics)
      line += " f1 " + num(r.metrics->f1) + " auroc " + num(r.metrics->auroc);
    else
      line += " FAILED " + r.failure.value_or("?");
    options.log(line);
  }
  return r;
}

Report run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Report rep;
  rep.config = config;
  rep.config_hash = config_hash(config);
  rep.runs.resize(config.runs);

  const std::size_t workers = std::min(resolve_threads(options.threads), config.runs);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  RunOptions opts = options;
  if (options.log)
    opts.log = [&](const std::string& s) {
      std::lock_guard<std::mutex> lock(log_mutex);
      options.log(s);
    };
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < config.runs;) rep.runs[i] = run_single(config, i, opts);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<Metrics> ok;
  for (const auto& r : rep.runs)
    if (r.metrics) ok.push_back(*r.metrics);
  if (!ok.empty()) rep.aggregate = aggregate_runs(ok);

  if (!config.baseline.empty()) {
    try {
      const auto base = load_run_f1(config.baseline);
      require(ok.size() == config.runs, ErrorCode::insufficient_data,
              "some runs failed, so per-run pairs are incomplete");
      require(base.size() == ok.size(), ErrorCode::contract,
              "baseline has " + std::to_string(base.size()) + " runs, this experiment " +
                  std::to_string(ok.size()));
      std::vector<double> f1;
      for (const auto& m : ok) f1.push_back(m.f1);
      rep.wilcoxon = wilcoxon_signed_rank(f1, base);
    } catch (const Error& e) {
      rep.wilcoxon_note = e.what();
    }
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::vector<double> load_run_f1(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    fail(ErrorCode::io, path.string() + ": " + e.what());
  }
  require(j.contains("runs") && j["runs"].is_array(), ErrorCode::io,
          path.string() + ": no runs array");
  std::vector<double> f1;
  for (const auto& r : j["runs"]) {
    require(r.contains("f1") && r["f1"].is_number(), ErrorCode::insufficient_data,
            path.string() + ": run " + r.value("run", Json(-1)).dump() + " has no f1");
    f1.push_back(r["f1"].get<double>());
  }
  return f1;
}

std::string metrics_json(const Report& rep) {
  const ExperimentConfig& c = rep.config;
  Json j;
  char hash[20];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(rep.config_hash));
  j["config_hash"] = hash;
  j["dataset"] = std::string(to_string(c.dataset.kind));
  j["variant"] = std::string(to_string(c.variant));
  j["score"] = std::string(to_string(c.score.kind));
  j["alpha"] = c.alpha;
  j["seed"] = c.seed;
  const auto names = {"precision", "recall", "f1", "auroc"};
  if (rep.aggregate) {
    const RunAggregate& a = *rep.aggregate;
    const Summary* s[] = {&a.precision, &a.recall, &a.f1, &a.auroc};
    j["n_runs"] = a.n_runs;
    std::size_t k = 0;
    for (const char* n : names) {
      j[n] = maybe(s[k]->mean);
      j["mean"][n] = maybe(s[k]->mean);
      j["std"][n] = maybe(s[k]->std);
      ++k;
    }
  } else {
    j["n_runs"] = 0;
    for (const char* n : names) j[n] = nullptr;
    j["mean"] = nullptr;
    j["std"] = nullptr;
  }
  j["runs"] = Json::array();
  for (const auto& r : rep.runs) {
    Json jr;
    jr["run"] = r.index;
    jr["seed"] = r.seed;
    jr["epochs"] = r.history.epochs.size();
    if (r.metrics) {
      jr["precision"] = r.metrics->precision;
      jr["recall"] = r.metrics->recall;
      jr["f1"] = r.metrics->f1;
      jr["auroc"] = maybe(r.metrics->auroc);
      jr["undefined"] = {{"precision", r.metrics->precision_undefined},
                         {"recall", r.metrics->recall_undefined}};
      jr["confusion"] = {{"tp", r.counts->tp}, {"fp", r.counts->fp},
                         {"fn", r.counts->fn}, {"tn", r.counts->tn}};
    }
    jr["failure"] = r.failure ? Json(*r.failure) : Json(nullptr);
    j["runs"].push_back(jr);
  }
  if (rep.wilcoxon)
    j["wilcoxon"] = {{"statistic", rep.wilcoxon->statistic},
                     {"p_value", rep.wilcoxon->p_value},
                     {"n", rep.wilcoxon->n},
                     {"exact", rep.wilcoxon->exact}};
  else
    j["wilcoxon"] = nullptr;
  if (rep.wilcoxon_note) j["wilcoxon_note"] = *rep.wilcoxon_note;
  return j.dump(2) + "\n";
}

std::string scores_csv(const ScoreTable& scores, const std::vector<int>& labels) {
  require(labels.empty() || labels.size() == scores.rows, ErrorCode::contract,
          "labels and scores differ in length");
  std::string out = "sample_id";
  for (ScoreKind k : kAllScores) out += "," + std::string(to_string(k));
  out += ",label\n";
  for (std::size_t i = 0; i < scores.rows; ++i) {
    out += std::to_string(i);
    for (ScoreKind k : kAllScores) {
      out += ',';
      if (scores.has(k)) out += num(scores.get(k)[i]);
    }
    out += ',';
    if (!labels.empty()) out += std::to_string(labels[i]);
    out += '\n';
  }
  return out;
}

void write_scores_csv(const ScoreTable& scores, const std::vector<int>& labels,
                      const std::filesystem::path& path) {
  write_text(path, scores_csv(scores, labels));
}

ScoreDump read_scores_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ingestion,
          path.string() + ": empty score file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) header.push_back(cell);
  }
  require(header.size() == kScoreKinds + 2 && header.front() == "sample_id" &&
              header.back() == "label",
          ErrorCode::ingestion, path.string() + ": unexpected header");
  ScoreDump d;
  std::array<bool, kScoreKinds> present{};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    require(cells.size() == header.size(), ErrorCode::ingestion,
            path.string() + ": line " + std::to_string(line_no) + " has the wrong field count");
    for (std::size_t k = 0; k < kScoreKinds; ++k) {
      const std::string& cell = cells[k + 1];
      if (d.scores.rows == 0) {
        present[k] = !cell.empty();
        if (present[k]) d.scores.columns[k].emplace();
      }
      require(present[k] == !cell.empty(), ErrorCode::ingestion,
              path.string() + ": line " + std::to_string(line_no) + " has a ragged score column");
      if (!present[k]) continue;
      double v = 0;
      const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      require(r.ec == std::errc() && r.ptr == cell.data() + cell.size(), ErrorCode::ingestion,
              path.string() + ": line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      d.scores.columns[k]->push_back(static_cast<Real>(v));
    }
    if (!cells.back().empty()) d.labels.push_back(std::stoi(cells.back()));
    ++d.scores.rows;
  }
  require(d.labels.empty() || d.labels.size() == d.scores.rows, ErrorCode::ingestion,
          path.string() + ": some rows lack labels");
  return d;
}

std::string loss_history_csv(const TrainHistory& history) {
  std::string out = "epoch,steps";
  for (std::size_t t = 0; t < kTermCount; ++t)
    out += "," + std::string(term_name(static_cast<Term>(t)));
  out += ",d_total,g_total\n";
  for (const auto& e : history.epochs) {
    out += std::to_string(e.epoch) + "," + std::to_string(e.steps);
    for (std::size_t t = 0; t < kTermCount; ++t) {
      out += ',';
      if (e.mean.enabled[t]) out += num(e.mean.terms[t]);
    }
    out += "," + num(e.mean.discriminator_total) + "," + num(e.mean.generator_total) + "\n";
  }
  return out;
}

void emit_report(const Report& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "metrics.json", metrics_json(rep));
  write_text(dir / "config.yaml", to_yaml(rep.config));
  Json timing;
  timing["total_seconds"] = rep.seconds;
  timing["runs"] = Json::array();
  for (const auto& r : rep.runs) {
    timing["runs"].push_back({{"run", r.index}, {"seconds", r.seconds}});
    const auto rd = dir / run_dir_name(r.index);
    write_text(rd / "loss_history.csv", loss_history_csv(r.history));
    if (r.metrics) write_scores_csv(r.scores, r.labels, rd / "scores.csv");
  }
  write_text(dir / "timing.json", timing.dump(2) + "\n");
}

} // namespace rcalad
