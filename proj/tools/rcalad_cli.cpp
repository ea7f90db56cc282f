// rcalad command-line front end: train, score, eval, run, ablate, stats, toy.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <nlohmann/json.hpp>

#include "rcalad/checkpoint.hpp"
#include "rcalad/error.hpp"
#include "rcalad/experiment.hpp"

using namespace rcalad;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::string out;
  std::string score;
  std::string variant;
};

void add_common(CLI::App* cmd, Common& c, bool with_runs) {
  cmd->add_option("--config", c.config, "experiment YAML")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "base seed (overrides config)");
  if (with_runs) cmd->add_option("--runs", c.runs, "number of runs (overrides config)");
  cmd->add_option("--out", c.out, "output directory (overrides config)");
  cmd->add_option("--score", c.score, "l1|l2|logits|features|fm|all");
  cmd->add_option("--variant", c.variant, "ali|alice|alad|calad|ralad|rcalad");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.runs) cfg.runs = *c.runs;
  if (!c.out.empty()) cfg.output = c.out;
  if (!c.score.empty()) cfg.score.kind = parse_score_kind(c.score);
  if (!c.variant.empty()) {
    cfg.variant = parse_variant(c.variant);
    cfg.train.toggles = toggles_for(cfg.variant);
  }
  cfg.train.seed = cfg.seed;
  cfg.split.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

void log_line(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

void print_summary(const Report& rep) {
  if (!rep.aggregate) {
    std::printf("no run produced metrics\n");
    return;
  }
  const auto& a = *rep.aggregate;
  std::printf("%s %s %s runs=%zu  P %.4f  R %.4f  F1 %.4f ± %.4f  AUROC %.4f\n",
              std::string(to_string(rep.config.dataset.kind)).c_str(),
              std::string(to_string(rep.config.variant)).c_str(),
              std::string(to_string(rep.config.score.kind)).c_str(), a.n_runs, a.precision.mean,
              a.recall.mean, a.f1.mean, a.f1.std, a.auroc.mean);
}

int cmd_train(const Common& c, const std::string& checkpoint, const std::string& resume) {
  const ExperimentConfig cfg = resolve(c);
  const PreparedData data = prepare_data(cfg, cfg.seed);
  ModelBundle bundle = build_bundle(cfg, data.input_dim(), cfg.seed);
  Trainer trainer(bundle, cfg.train);
  const auto hash = config_hash(cfg);
  if (!resume.empty()) {
    const auto info = load_checkpoint(resume, trainer, hash);
    log_line("resumed at epoch " + std::to_string(info.epoch));
  }
  const fs::path ck = checkpoint.empty() ? cfg.output / "model.ckpt" : fs::path(checkpoint);
  const auto history = trainer.fit(data.train.x, [&](const Trainer& t, const EpochRecord& r) {
    save_checkpoint(ck, t, hash);
    log_line("epoch " + std::to_string(r.epoch + 1) + " checkpoint " + ck.string());
  });
  save_checkpoint(ck, trainer, hash);
  fs::create_directories(cfg.output);
  std::ofstream(cfg.output / "loss_history.csv") << loss_history_csv(history);
  if (history.failure) throw rcalad::Error(rcalad::ErrorCode::numerical, *history.failure);
  std::printf("trained %zu epochs (%llu steps) -> %s\n", trainer.epoch(),
              static_cast<unsigned long long>(trainer.global_step()), ck.string().c_str());
  return 0;
}

int cmd_score(const Common& c, const std::string& checkpoint) {
  const ExperimentConfig cfg = resolve(c);
  const PreparedData data = prepare_data(cfg, cfg.seed);
  ModelBundle bundle = build_bundle(cfg, data.input_dim(), cfg.seed);
  Trainer trainer(bundle, cfg.train);
  load_checkpoint(checkpoint, trainer, config_hash(cfg));
  const ScoreTable s = orient(score_batch(bundle, data.test.x), cfg.score.orientation);
  const fs::path out = cfg.output / "scores.csv";
  write_scores_csv(s, data.test.y, out);
  std::printf("%zu rows -> %s\n", s.rows, out.string().c_str());
  return 0;
}

int cmd_eval(const std::string& scores, const std::string& score, double alpha,
             const std::string& out) {
  const ScoreDump d = read_scores_csv(scores);
  const ScoreKind kind = parse_score_kind(score);
  const Metrics m = evaluate(d.scores.get(kind), d.labels, alpha);
  nlohmann::json j = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
                      {"auroc", std::isnan(m.auroc) ? nlohmann::json(nullptr) : nlohmann::json(m.auroc)},
                      {"score", std::string(to_string(kind))}, {"alpha", alpha},
                      {"rows", d.scores.rows}};
  const std::string text = j.dump(2) + "\n";
  if (out.empty())
    std::printf("%s", text.c_str());
  else
    std::ofstream(out) << text;
  return 0;
}

int cmd_run(const Common& c, const std::string& checkpoints) {
  const ExperimentConfig cfg = resolve(c);
  RunOptions opt;
  opt.log = log_line;
  if (!checkpoints.empty()) opt.checkpoint_dir = checkpoints;
  const Report rep = run_experiment(cfg, opt);
  emit_report(rep, cfg.output);
  print_summary(rep);
  if (!rep.aggregate) {
    nlohmann::json j = {{"error", "all_runs_failed"},
                        {"message", rep.runs.front().failure.value_or("unknown")}};
    std::fprintf(stderr, "%s\n", j.dump().c_str());
    return 1;
  }
  return 0;
}

int cmd_ablate(const Common& c, std::vector<std::string> variants, const std::string& reference) {
  ExperimentConfig base = resolve(c);
  if (variants.empty()) variants = {"ali", "alice", "alad", "calad", "ralad", "rcalad"};
  nlohmann::json summary;
  std::map<std::string, std::vector<double>> f1;
  for (const auto& name : variants) {
    ExperimentConfig cfg = base;
    cfg.variant = parse_variant(name);
    cfg.train.toggles = toggles_for(cfg.variant);
    cfg.output = base.output / name;
    cfg.baseline.clear();
    nlohmann::json entry;
    try {
      cfg.validate();
    } catch (const rcalad::Error& e) {
      entry["skipped"] = e.what();
      summary["variants"][name] = entry;
      log_line(name + ": skipped (" + e.what() + ")");
      continue;
    }
    RunOptions opt;
    opt.log = [&](const std::string& s) { log_line(name + " " + s); };
    const Report rep = run_experiment(cfg, opt);
    emit_report(rep, cfg.output);
    print_summary(rep);
    if (rep.aggregate) {
      entry["f1_mean"] = rep.aggregate->f1.mean;
      entry["f1_std"] = rep.aggregate->f1.std;
      entry["n_runs"] = rep.aggregate->n_runs;
      for (const auto& r : rep.runs)
        if (r.metrics) f1[name].push_back(r.metrics->f1);
    } else {
      entry["f1_mean"] = nullptr;
    }
    summary["variants"][name] = entry;
  }
  if (f1.count(reference)) {
    for (const auto& [name, values] : f1) {
      if (name == reference) continue;
      try {
        const auto w = wilcoxon_signed_rank(f1[reference], values);
        summary["wilcoxon_vs_" + reference][name] = {
            {"statistic", w.statistic}, {"p_value", w.p_value}, {"n", w.n}};
      } catch (const rcalad::Error& e) {
        summary["wilcoxon_vs_" + reference][name] = {{"error", e.what()}};
      }
    }
  }
  summary["score"] = std::string(to_string(base.score.kind));
  fs::create_directories(base.output);
  std::ofstream(base.output / "ablation.json") << summary.dump(2) << "\n";
  return 0;
}

int cmd_stats(const std::string& a, const std::string& b) {
  const auto fa = load_run_f1(a);
  const auto fb = load_run_f1(b);
  const auto w = wilcoxon_signed_rank(fa, fb);
  nlohmann::json j = {{"statistic", w.statistic}, {"p_value", w.p_value}, {"n", w.n},
                      {"exact", w.exact},         {"w_plus", w.w_plus},   {"w_minus", w.w_minus}};
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

int cmd_toy(const std::string& kind, std::size_t normal, std::size_t anomaly, double noise,
            std::uint64_t seed, const std::string& out) {
  const Dataset d = synth_toy({parse_toy_kind(kind), normal, anomaly, noise, seed});
  write_csv(d, out);
  std::printf("%zu rows (%zu anomalies) -> %s\n", d.size(), d.anomalies(), out.c_str());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"GAN-based anomaly detection with cycle-consistent discriminators"};
  app.require_subcommand(1);

  Common train_c, score_c, run_c, ablate_c;
  std::string checkpoint, resume, score_ckpt, run_ckpt;
  auto* train = app.add_subcommand("train", "fit one model and write a checkpoint");
  add_common(train, train_c, false);
  train->add_option("--checkpoint", checkpoint, "checkpoint path (default <out>/model.ckpt)");
  train->add_option("--resume", resume, "continue from this checkpoint")->check(CLI::ExistingFile);

  auto* score = app.add_subcommand("score", "score the test split with a trained checkpoint");
  add_common(score, score_c, false);
  score->add_option("--checkpoint", score_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);

  std::string scores_path, eval_score = "fm", eval_out;
  double alpha = 0.1;
  auto* eval = app.add_subcommand("eval", "metrics from a score dump");
  eval->add_option("--scores", scores_path, "scores.csv")->required()->check(CLI::ExistingFile);
  eval->add_option("--score", eval_score, "score column");
  eval->add_option("--alpha", alpha, "contamination rate")->check(CLI::Range(0.0, 1.0));
  eval->add_option("--out", eval_out, "write JSON here instead of stdout");

  auto* run = app.add_subcommand("run", "full protocol: every run, metrics and report");
  add_common(run, run_c, true);
  run->add_option("--checkpoint", run_ckpt, "directory for per-run checkpoints");

  std::vector<std::string> variants;
  std::string reference = "rcalad";
  auto* ablate = app.add_subcommand("ablate", "the protocol once per variant");
  add_common(ablate, ablate_c, true);
  ablate->add_option("--variants", variants, "subset of variants (default all six)");
  ablate->add_option("--reference", reference, "variant the others are tested against");

  std::string stats_a, stats_b;
  auto* stats = app.add_subcommand("stats", "signed-rank test on per-run F1 of two reports");
  stats->add_option("a", stats_a, "metrics.json")->required()->check(CLI::ExistingFile);
  stats->add_option("b", stats_b, "metrics.json")->required()->check(CLI::ExistingFile);

  std::string toy_kind = "gaussian_ring", toy_out = "toy.csv";
  std::size_t toy_n = 1000, toy_a = 0;
  double toy_noise = 0.05;
  std::uint64_t toy_seed = 0;
  auto* toy = app.add_subcommand("toy", "write a synthetic 2-D dataset as CSV");
  toy->add_option("--kind", toy_kind, "gaussian_ring|two_gaussians");
  toy->add_option("--normal", toy_n, "normal rows");
  toy->add_option("--anomaly", toy_a, "anomalous rows");
  toy->add_option("--noise", toy_noise, "noise std");
  toy->add_option("--seed", toy_seed, "seed");
  toy->add_option("--out", toy_out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) {
      nlohmann::json j = {{"error", "usage"}, {"message", e.what()}};
      std::fprintf(stderr, "%s\n", j.dump().c_str());
    }
    return app.exit(e);
  }
  try {
    if (*train) return cmd_train(train_c, checkpoint, resume);
    if (*score) return cmd_score(score_c, score_ckpt);
    if (*eval) return cmd_eval(scores_path, eval_score, alpha, eval_out);
    if (*run) return cmd_run(run_c, run_ckpt);
    if (*ablate) return cmd_ablate(ablate_c, variants, reference);
    if (*stats) return cmd_stats(stats_a, stats_b);
    if (*toy) return cmd_toy(toy_kind, toy_n, toy_a, toy_noise, toy_seed, toy_out);
  } catch (const rcalad::Error& e) {
    // one machine-readable line
    nlohmann::json j = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", j.dump().c_str());
    return 2;
  } catch (const std::exception& e) {
    nlohmann::json j = {{"error", "internal"}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", j.dump().c_str());
    return 3;
  }
  return 0;
}
