#include "rcalad/training.hpp"

#include <chrono>
#include <cmath>

#include "rcalad/error.hpp"

namespace rcalad {

SigmaKind parse_sigma_kind(std::string_view name) {
  if (name == "normal_0_1") return SigmaKind::normal_0_1;
  if (name == "normal_0_2") return SigmaKind::normal_0_2;
  if (name == "uniform_m1_1") return SigmaKind::uniform_m1_1;
  fail(ErrorCode::config, "unknown supplementary distribution '" + std::string(name) + "'");
}

std::string_view to_string(SigmaKind kind) {
  switch (kind) {
    case SigmaKind::normal_0_1: return "normal_0_1";
    case SigmaKind::normal_0_2: return "normal_0_2";
    case SigmaKind::uniform_m1_1: return "uniform_m1_1";
  }
  return "?";
}

Tensor sample_latent(std::size_t n, std::size_t dim, RngStream& rng) {
  Tensor t = Tensor::matrix(n, dim);
  for (auto& v : t.values()) v = static_cast<Real>(rng.normal());
  return t;
}

Tensor sample_supplementary(SigmaKind kind, std::size_t n, std::size_t dim, RngStream& rng) {
  Tensor t = Tensor::matrix(n, dim);
  const double sd2 = std::sqrt(2.0);
  for (auto& v : t.values()) {
    switch (kind) {
      case SigmaKind::normal_0_1: v = static_cast<Real>(rng.normal()); break;
      case SigmaKind::normal_0_2: v = static_cast<Real>(sd2 * rng.normal()); break;
      case SigmaKind::uniform_m1_1: v = static_cast<Real>(rng.uniform(-1.0, 1.0)); break;
    }
  }
  return t;
}

std::string_view term_name(Term t) {
  switch (t) {
    case Term::dxz_real: return "dxz_real";
    case Term::dxz_fake: return "dxz_fake";
    case Term::dxx_real: return "dxx_real";
    case Term::dxx_fake: return "dxx_fake";
    case Term::dzz_real: return "dzz_real";
    case Term::dzz_fake: return "dzz_fake";
    case Term::dxxzz_real: return "dxxzz_real";
    case Term::dxxzz_fake: return "dxxzz_fake";
    case Term::sigma: return "sigma";
  }
  return "?";
}

bool term_enabled(Term t, const Toggles& toggles) {
  switch (t) {
    case Term::dxz_real:
    case Term::dxz_fake: return true;
    case Term::dxx_real:
    case Term::dxx_fake: return toggles.use_dxx;
    case Term::dzz_real:
    case Term::dzz_fake: return toggles.use_dzz;
    case Term::dxxzz_real:
    case Term::dxxzz_fake: return toggles.use_dxxzz;
    case Term::sigma: return toggles.use_sigma;
  }
  return false;
}

std::size_t LossBreakdown::enabled_count() const {
  std::size_t n = 0;
  for (bool e : enabled) n += e;
  return n;
}

namespace {

constexpr std::array<Term, kTermCount> kAllTerms = {
    Term::dxz_real, Term::dxz_fake,   Term::dxx_real,   Term::dxx_fake, Term::dzz_real,
    Term::dzz_fake, Term::dxxzz_real, Term::dxxzz_fake, Term::sigma};

bool is_real_side(Term t) {
  return t == Term::dxz_real || t == Term::dxx_real || t == Term::dzz_real ||
         t == Term::dxxzz_real;
}

// Lazily records the E/G chains needed by the enabled terms and the
// discriminator probabilities on one tape.
class LossBuilder {
public:
  LossBuilder(Tape& tape, ModelBundle& bundle, const LossBatch& batch, const RngStream& dropout,
              Mode mode, bool train_discriminators)
      : tape_(tape), b_(bundle), drop_(dropout), mode_(mode), train_d_(train_discriminators) {
    require(batch.x.rank() == 2 && batch.x.rows() >= 1, ErrorCode::contract, "empty x batch");
    require(batch.x.cols() == b_.input_dim(), ErrorCode::shape,
            "x batch has shape " + to_string(batch.x.shape()) + ", expected width " +
                std::to_string(b_.input_dim()));
    x_ = tape_.constant(batch.x);
    z_batch_ = &batch.z;
    sigma_batch_ = &batch.x_sigma;
  }

  // V term for t on the discriminator side: log D(real) or log(1 - D(fake)).
  Var v_term(Term t) {
    const Var p = prob(t);
    return mean(log(is_real_side(t) ? p : one_minus(p)));
  }

  // -log D(fake): what the generator side minimises for a fake term.
  Var fooled(Term t) { return scale(mean(log(prob(t))), -1); }
  // -log(1 - D(real)) for a real pair.
  Var exposed(Term t) { return scale(mean(log(one_minus(prob(t)))), -1); }

private:
  Var z() {
    if (!z_) {
      require(z_batch_->rank() == 2 && z_batch_->cols() == b_.latent_dim() &&
                  z_batch_->rows() >= 1,
              ErrorCode::shape, "z batch has shape " + to_string(z_batch_->shape()));
      z_ = tape_.constant(*z_batch_);
    }
    return *z_;
  }
  Var xs() {
    if (!xs_) {
      require(sigma_batch_->rank() == 2 && sigma_batch_->cols() == b_.input_dim() &&
                  sigma_batch_->rows() >= 1,
              ErrorCode::shape, "supplementary batch has shape " + to_string(sigma_batch_->shape()));
      xs_ = tape_.constant(*sigma_batch_);
    }
    return *xs_;
  }

  Var run(const Network& net, std::initializer_list<Var> in, std::string_view site, bool trainable) {
    RngStream rng = drop_.derive(site);
    const std::vector<Var> inputs(in);
    return net.forward(tape_, inputs, mode_, rng, trainable).output;
  }
  Var enc(Var in, std::string_view site) { return run(b_.encoder, {in}, site, !train_d_); }
  Var gen(Var in, std::string_view site) { return run(b_.generator, {in}, site, !train_d_); }

  Var ex() { return ex_ ? *ex_ : *(ex_ = enc(x_, "E(x)")); }
  Var gz() { return gz_ ? *gz_ : *(gz_ = gen(z(), "G(z)")); }
  Var gex() { return gex_ ? *gex_ : *(gex_ = gen(ex(), "G(E(x))")); }
  Var egz() { return egz_ ? *egz_ : *(egz_ = enc(gz(), "E(G(z))")); }
  Var egex() { return egex_ ? *egex_ : *(egex_ = enc(gex(), "E(G(E(x)))")); }
  Var exs() { return exs_ ? *exs_ : *(exs_ = enc(xs(), "E(xs)")); }

  const Network& need(const std::optional<Network>& d, const char* name) {
    require(d.has_value(), ErrorCode::contract, std::string(name) + " is not part of this bundle");
    return *d;
  }

  Var prob(Term t) {
    const std::string_view site = term_name(t);
    Var p;
    switch (t) {
      case Term::dxz_real: p = run(b_.d_xz, {x_, ex()}, site, train_d_); break;
      case Term::dxz_fake: p = run(b_.d_xz, {gz(), z()}, site, train_d_); break;
      case Term::dxx_real: p = run(need(b_.d_xx, "d_xx"), {x_, x_}, site, train_d_); break;
      case Term::dxx_fake: p = run(need(b_.d_xx, "d_xx"), {x_, gex()}, site, train_d_); break;
      case Term::dzz_real: p = run(need(b_.d_zz, "d_zz"), {z(), z()}, site, train_d_); break;
      case Term::dzz_fake: p = run(need(b_.d_zz, "d_zz"), {z(), egz()}, site, train_d_); break;
      case Term::dxxzz_real:
        p = run(need(b_.d_xxzz, "d_xxzz"), {x_, x_, ex(), ex()}, site, train_d_);
        break;
      case Term::dxxzz_fake:
        p = run(need(b_.d_xxzz, "d_xxzz"), {x_, gex(), ex(), egex()}, site, train_d_);
        break;
      case Term::sigma: p = run(b_.d_xz, {xs(), exs()}, site, train_d_); break;
    }
    return clamp(p, kProbabilityClamp, 1 - kProbabilityClamp);
  }

  Tape& tape_;
  ModelBundle& b_;
  const RngStream& drop_;
  Mode mode_;
  bool train_d_;
  Var x_;
  const Tensor* z_batch_ = nullptr;
  const Tensor* sigma_batch_ = nullptr;
  std::optional<Var> z_, xs_, ex_, gz_, gex_, egz_, egex_, exs_;
};

Var sum_terms(const std::vector<Var>& parts) {
  Var total = parts.at(0);
  for (std::size_t i = 1; i < parts.size(); ++i) total = add(total, parts[i]);
  return total;
}

void check_finite(const LossGraph& g, std::string_view which) {
  for (Term t : kAllTerms) {
    const Var& v = g.terms[static_cast<std::size_t>(t)];
    if (v.valid() && !std::isfinite(v.value().item()))
      throw NumericalError(std::string(term_name(t)),
                           std::string(which) + " loss term '" + std::string(term_name(t)) +
                               "' is not finite");
  }
  if (!std::isfinite(g.total.value().item()))
    throw NumericalError("total", std::string(which) + " loss is not finite");
}

} // namespace

LossGraph discriminator_loss_graph(Tape& tape, ModelBundle& bundle, const LossBatch& batch,
                                   const Toggles& toggles, const RngStream& dropout,
                                   const LossOptions& options) {
  LossBuilder build(tape, bundle, batch, dropout, options.mode, true);
  LossGraph g;
  std::vector<Var> parts;
  for (Term t : kAllTerms) {
    if (!term_enabled(t, toggles)) continue;
    Var term = scale(build.v_term(t), -1);
    g.terms[static_cast<std::size_t>(t)] = term;
    parts.push_back(term);
  }
  g.total = sum_terms(parts);
  return g;
}

LossGraph generator_loss_graph(Tape& tape, ModelBundle& bundle, const LossBatch& batch,
                               const Toggles& toggles, const RngStream& dropout,
                               const LossOptions& options) {
  LossBuilder build(tape, bundle, batch, dropout, options.mode, false);
  LossGraph g;
  std::vector<Var> parts;
  for (Term t : kAllTerms) {
    if (!term_enabled(t, toggles)) continue;
    Var term;
    if (options.saturating_generator_loss) {
      term = build.v_term(t);  // minimise the objective the discriminators maximise
    } else if (!is_real_side(t)) {
      term = build.fooled(t);
    } else if (options.encoder_adversarial_real &&
               (t == Term::dxz_real || t == Term::dxxzz_real)) {
      term = build.exposed(t);
    } else {
      continue;
    }
    g.terms[static_cast<std::size_t>(t)] = term;
    parts.push_back(term);
  }
  g.total = sum_terms(parts);
  return g;
}

LossBreakdown loss_discriminators(ModelBundle& bundle, const LossBatch& batch,
                                  const Toggles& toggles, const RngStream& dropout,
                                  const LossOptions& options) {
  Tape tape;
  const LossGraph g = discriminator_loss_graph(tape, bundle, batch, toggles, dropout, options);
  check_finite(g, "discriminator");
  LossBreakdown out;
  for (Term t : kAllTerms) {
    const auto i = static_cast<std::size_t>(t);
    out.enabled[i] = g.terms[i].valid();
    if (out.enabled[i]) out.terms[i] = g.terms[i].value().item();
  }
  out.discriminator_total = g.total.value().item();
  return out;
}

Real loss_generator_encoder(ModelBundle& bundle, const LossBatch& batch, const Toggles& toggles,
                            const RngStream& dropout, const LossOptions& options) {
  Tape tape;
  const LossGraph g = generator_loss_graph(tape, bundle, batch, toggles, dropout, options);
  check_finite(g, "generator/encoder");
  return g.total.value().item();
}

void TrainConfig::validate() const {
  require(batch_size >= 2, ErrorCode::config, "batch_size must be >= 2 (batch norm)");
  require(d_steps_per_g_step >= 1, ErrorCode::config, "d_steps_per_g_step must be >= 1");
  require(power_iterations >= 0, ErrorCode::config, "power_iterations must be >= 0");
  require(adam.lr >= 0 && adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 &&
              adam.epsilon > 0,
          ErrorCode::config, "invalid Adam hyperparameters");
  require(!toggles.use_sigma || sigma_batch_ratio > 0, ErrorCode::config,
          "sigma_batch_ratio must be > 0");
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  RngStream rng = RngStream(seed).derive("shuffle").derive(static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

Trainer::Trainer(ModelBundle& bundle, TrainConfig config)
    : bundle_(bundle), config_(std::move(config)) {
  config_.validate();
  const Toggles& have = config_.toggles;
  require(have.use_dxx == bundle_.d_xx.has_value() && have.use_dzz == bundle_.d_zz.has_value() &&
              have.use_dxxzz == bundle_.d_xxzz.has_value(),
          ErrorCode::config, "training toggles do not match the bundle's discriminators");
  auto d = d_parameters();
  auto g = g_parameters();
  opt_d_ = make_optimizer_state(config_.adam, d);
  opt_g_ = make_optimizer_state(config_.adam, g);
}

std::vector<Parameter*> Trainer::d_parameters() {
  std::vector<Parameter*> out;
  for (Network* d : bundle_.discriminators())
    for (Parameter* p : d->parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> Trainer::g_parameters() {
  std::vector<Parameter*> out = bundle_.encoder.parameters();
  for (Parameter* p : bundle_.generator.parameters()) out.push_back(p);
  return out;
}

void Trainer::set_progress(std::uint64_t global_step, std::size_t epoch) {
  global_step_ = global_step;
  epoch_ = epoch;
}

LossBreakdown Trainer::step(const Tensor& x_batch) {
  require(x_batch.rank() == 2 && x_batch.rows() >= 2, ErrorCode::degenerate_batch,
          "training batch needs at least 2 rows");
  const std::size_t n = x_batch.rows();
  const RngStream root = RngStream(config_.seed).derive("step").derive(global_step_);
  const LossOptions options{Mode::train, config_.saturating_generator_loss,
                            config_.encoder_adversarial_real};

  const ModelBundle saved = bundle_;
  const OptimizerState saved_d = opt_d_;
  const OptimizerState saved_g = opt_g_;
  LossBreakdown out;
  try {
    for (Network* d : bundle_.discriminators()) d->power_iterate(config_.power_iterations);

    LossBatch batch{x_batch, {}, {}};
    auto draw = [&](std::uint64_t k) {
      RngStream rz = root.derive("z").derive(k);
      batch.z = sample_latent(n, bundle_.latent_dim(), rz);
      if (config_.toggles.use_sigma) {
        const auto m = std::max<std::size_t>(
            2, static_cast<std::size_t>(std::lround(config_.sigma_batch_ratio * n)));
        RngStream rs = root.derive("sigma").derive(k);
        batch.x_sigma = sample_supplementary(config_.sigma, m, bundle_.input_dim(), rs);
      }
    };

    auto d_params = d_parameters();
    for (std::size_t k = 0; k < config_.d_steps_per_g_step; ++k) {
      draw(k);
      Tape tape;
      const LossGraph g =
          discriminator_loss_graph(tape, bundle_, batch, config_.toggles, root.derive("d").derive(k), options);
      check_finite(g, "discriminator");
      if (k == 0) {
        for (Term t : kAllTerms) {
          const auto i = static_cast<std::size_t>(t);
          out.enabled[i] = g.terms[i].valid();
          if (out.enabled[i]) out.terms[i] = g.terms[i].value().item();
        }
        out.discriminator_total = g.total.value().item();
      }
      for (Parameter* p : d_params) p->zero_grad();
      tape.backward(g.total);
      adam_step(d_params, opt_d_);
    }

    auto g_params = g_parameters();
    Tape tape;
    const LossGraph g =
        generator_loss_graph(tape, bundle_, batch, config_.toggles, root.derive("g"), options);
    check_finite(g, "generator/encoder");
    out.generator_total = g.total.value().item();
    for (Parameter* p : g_params) p->zero_grad();
    tape.backward(g.total);
    adam_step(g_params, opt_g_);
  } catch (const NumericalError&) {
    bundle_ = saved;
    opt_d_ = saved_d;
    opt_g_ = saved_g;
    throw;
  }
  ++global_step_;
  return out;
}

TrainHistory Trainer::fit(const Tensor& data, const EpochHook& on_checkpoint) {
  require(data.rank() == 2 && data.rows() >= 2, ErrorCode::insufficient_data,
          "training set needs at least 2 rows");
  require(data.cols() == bundle_.input_dim(), ErrorCode::shape,
          "training set has shape " + to_string(data.shape()) + ", expected width " +
              std::to_string(bundle_.input_dim()));
  TrainHistory history;
  const std::size_t n = data.rows();
  const std::size_t bs = std::min(config_.batch_size, n);
  const std::size_t batches = n / bs;  // trailing partial batch dropped
  while (epoch_ < config_.max_epochs) {
    const auto start = std::chrono::steady_clock::now();
    const auto perm = epoch_permutation(n, config_.seed, epoch_);
    EpochRecord rec;
    rec.epoch = epoch_;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::span<const std::size_t> idx(perm.data() + b * bs, bs);
      LossBreakdown lb;
      try {
        lb = step(data.rows_subset(idx));
      } catch (const NumericalError& e) {
        history.failure = e.what();
        history.failed_term = e.term();
        return history;
      }
      for (std::size_t i = 0; i < kTermCount; ++i) {
        rec.mean.terms[i] += lb.terms[i];
        rec.mean.enabled[i] = lb.enabled[i];
      }
      rec.mean.discriminator_total += lb.discriminator_total;
      rec.mean.generator_total += lb.generator_total;
      ++rec.steps;
    }
    if (rec.steps > 0) {
      const Real inv = Real(1) / static_cast<Real>(rec.steps);
      for (auto& t : rec.mean.terms) t *= inv;
      rec.mean.discriminator_total *= inv;
      rec.mean.generator_total *= inv;
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++epoch_;
    history.epochs.push_back(rec);
    if (on_checkpoint && config_.checkpoint_every > 0 && epoch_ % config_.checkpoint_every == 0)
      on_checkpoint(*this, rec);
  }
  return history;
}

} // namespace rcalad
