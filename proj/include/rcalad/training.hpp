#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rcalad/networks.hpp"
#include "rcalad/optimizer.hpp"

namespace rcalad {

enum class SigmaKind { normal_0_1, normal_0_2, uniform_m1_1 };

SigmaKind parse_sigma_kind(std::string_view name);
std::string_view to_string(SigmaKind kind);

/// i.i.d. standard normal codes, shape [n, dim].
Tensor sample_latent(std::size_t n, std::size_t dim, RngStream& rng);
/// Draws from the supplementary distribution, shape [n, dim].
Tensor sample_supplementary(SigmaKind kind, std::size_t n, std::size_t dim, RngStream& rng);

/// Discriminator objective terms, each stored as -E[log ...] so that every
/// term is ln 2 when the discriminator answers 0.5.
enum class Term {
  dxz_real,
  dxz_fake,
  dxx_real,
  dxx_fake,
  dzz_real,
  dzz_fake,
  dxxzz_real,
  dxxzz_fake,
  sigma,
};
inline constexpr std::size_t kTermCount = 9;

std::string_view term_name(Term t);
bool term_enabled(Term t, const Toggles& toggles);

struct LossBreakdown {
  std::array<Real, kTermCount> terms{};
  std::array<bool, kTermCount> enabled{};
  Real discriminator_total = 0;
  Real generator_total = 0;

  Real term(Term t) const { return terms[static_cast<std::size_t>(t)]; }
  std::size_t enabled_count() const;
};

struct LossBatch {
  Tensor x;        // real rows [n, input_dim]
  Tensor z;        // prior codes [n, latent_dim]
  Tensor x_sigma;  // supplementary rows [m, input_dim]; unused without the sigma term
};

struct LossOptions {
  Mode mode = Mode::train;
  /// Generator/encoder minimise the objective itself instead of -log D(fake).
  bool saturating_generator_loss = false;
  /// Adds -log(1 - D) on the real-side pairs that contain E(x).
  bool encoder_adversarial_real = false;
};

/// A loss recorded on a tape, ready for backward().
struct LossGraph {
  Var total;
  std::array<Var, kTermCount> terms{};
};

/// Discriminator loss: sum of the enabled terms. E and G enter as constants,
/// discriminator parameters as gradient leaves. `dropout` seeds one named
/// sub-stream per call site.
LossGraph discriminator_loss_graph(Tape& tape, ModelBundle& bundle, const LossBatch& batch,
                                   const Toggles& toggles, const RngStream& dropout,
                                   const LossOptions& options = {});

/// Generator/encoder loss over the enabled fake-side terms. Discriminator
/// parameters enter as constants.
LossGraph generator_loss_graph(Tape& tape, ModelBundle& bundle, const LossBatch& batch,
                               const Toggles& toggles, const RngStream& dropout,
                               const LossOptions& options = {});

/// Value-only wrappers. Both throw NumericalError naming the first
/// non-finite term.
LossBreakdown loss_discriminators(ModelBundle& bundle, const LossBatch& batch,
                                  const Toggles& toggles, const RngStream& dropout,
                                  const LossOptions& options = {});
Real loss_generator_encoder(ModelBundle& bundle, const LossBatch& batch, const Toggles& toggles,
                            const RngStream& dropout, const LossOptions& options = {});

inline constexpr Real kProbabilityClamp = Real(1e-7);

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 1;
  std::uint64_t seed = 0;
  Toggles toggles;
  SigmaKind sigma = SigmaKind::normal_0_1;
  std::size_t d_steps_per_g_step = 1;
  Real sigma_batch_ratio = 1;
  int power_iterations = 1;
  bool saturating_generator_loss = false;
  bool encoder_adversarial_real = false;
  /// Epochs between checkpoint callbacks; 0 disables them.
  std::size_t checkpoint_every = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  LossBreakdown mean;
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  /// Set when training stopped on a numerical failure.
  std::optional<std::string> failure;
  std::optional<std::string> failed_term;
};

/// Alternating optimisation of one bundle. Every random draw of a step is a
/// function of (seed, global step, call site), so resuming from a
/// checkpoint only needs the step and epoch counters plus optimizer state.
class Trainer {
public:
  Trainer(ModelBundle& bundle, TrainConfig config);

  /// One update of all enabled discriminators followed by one encoder /
  /// generator update. On a non-finite term nothing is modified and a
  /// NumericalError is thrown.
  LossBreakdown step(const Tensor& x_batch);

  /// Epoch hook, called after every `checkpoint_every` epochs.
  using EpochHook = std::function<void(const Trainer&, const EpochRecord&)>;

  /// Runs the remaining epochs up to max_epochs over shuffled minibatches.
  /// A numerical failure stops training and is reported in the history.
  TrainHistory fit(const Tensor& data, const EpochHook& on_checkpoint = {});

  const TrainConfig& config() const { return config_; }
  ModelBundle& bundle() { return bundle_; }
  const ModelBundle& bundle() const { return bundle_; }
  std::uint64_t global_step() const { return global_step_; }
  std::size_t epoch() const { return epoch_; }
  void set_progress(std::uint64_t global_step, std::size_t epoch);

  OptimizerState& d_optimizer() { return opt_d_; }
  OptimizerState& g_optimizer() { return opt_g_; }
  const OptimizerState& d_optimizer() const { return opt_d_; }
  const OptimizerState& g_optimizer() const { return opt_g_; }

  std::vector<Parameter*> d_parameters();
  std::vector<Parameter*> g_parameters();

private:
  ModelBundle& bundle_;
  TrainConfig config_;
  OptimizerState opt_d_;
  OptimizerState opt_g_;
  std::uint64_t global_step_ = 0;
  std::size_t epoch_ = 0;
};

/// Minibatch order for one epoch: a permutation of [0, n).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch);

} // namespace rcalad
