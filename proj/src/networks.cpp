#include "rcalad/networks.hpp"

#include <cmath>
#include <numeric>

#include "rcalad/error.hpp"

namespace rcalad {

namespace {

constexpr int kSpectralWarmup = 20;

struct Applied {
  Var input;
  Var pre;
  Var out;
};

Applied apply_layer(Tape& tape, const DenseLayer& layer, Var h, Mode mode, RngStream& rng,
                    bool trainable, Real slope) {
  auto bind = [&](const Parameter& p) {
    return trainable ? tape.parameter(const_cast<Parameter&>(p)) : tape.frozen(p);
  };
  Var w = bind(layer.weight);
  if (layer.spectral) w = spectral_norm(w, *layer.spectral);
  Var y = affine(h, w, bind(layer.bias));
  if (layer.bn_stats) {
    y = batch_norm(y, bind(*layer.gamma), bind(*layer.beta),
                   const_cast<BatchNormStats&>(*layer.bn_stats), mode);
  }
  Var a = activation(layer.spec.activation, y, slope);
  return {h, y, dropout(a, layer.spec.dropout, mode, rng)};
}

DenseLayer make_layer(const std::string& prefix, std::size_t in, const LayerSpec& spec,
                      RngStream& rng) {
  DenseLayer layer;
  layer.spec = spec;
  const bool rectifier = spec.activation == Activation::lrelu || spec.activation == Activation::relu;
  const Real stddev = std::sqrt((rectifier ? Real(2) : Real(1)) / static_cast<Real>(in));
  layer.weight = Parameter{prefix + "/W", Tensor::matrix(in, spec.width), {}};
  for (auto& v : layer.weight.value.values()) v = stddev * static_cast<Real>(rng.normal());
  layer.bias = Parameter{prefix + "/b", Tensor({spec.width}), {}};
  if (spec.batch_norm) {
    layer.gamma = Parameter{prefix + "/gamma", Tensor({spec.width}, Real(1)), {}};
    layer.beta = Parameter{prefix + "/beta", Tensor({spec.width}), {}};
    layer.bn_stats = BatchNormStats::fresh(spec.width);
  }
  if (spec.spectral_norm) {
    layer.spectral = SpectralState::random(in, spec.width, rng);
    // random u, v give a meaningless (even negative) sigma until warmed up
    power_iteration(layer.weight.value, *layer.spectral, kSpectralWarmup);
  }
  return layer;
}

template <class Layers, class F>
void for_each_param(Layers& layers, F&& f) {
  for (auto& layer : layers) {
    f(layer.weight);
    f(layer.bias);
    if (layer.gamma) f(*layer.gamma);
    if (layer.beta) f(*layer.beta);
  }
}

template <class Layers, class Visit>
void visit_layers(Layers& layers, Visit&& visit) {
  for (auto& layer : layers) {
    visit(layer.weight.name, layer.weight.value);
    visit(layer.bias.name, layer.bias.value);
    if (layer.gamma) visit(layer.gamma->name, layer.gamma->value);
    if (layer.beta) visit(layer.beta->name, layer.beta->value);
    const std::string prefix = layer.weight.name.substr(0, layer.weight.name.size() - 2);
    if (layer.bn_stats) {
      visit(prefix + "/running_mean", layer.bn_stats->running_mean);
      visit(prefix + "/running_var", layer.bn_stats->running_var);
    }
    if (layer.spectral) {
      visit(prefix + "/sn_u", layer.spectral->u);
      visit(prefix + "/sn_v", layer.spectral->v);
    }
  }
}

std::size_t branch_in_width(const NetworkSpec& spec, const BranchSpec& branch) {
  std::size_t w = 0;
  for (std::size_t i : branch.inputs) w += spec.input_dims.at(i);
  return w;
}

std::size_t branch_out_width(const NetworkSpec& spec, const BranchSpec& branch) {
  return branch.layers.empty() ? branch_in_width(spec, branch) : branch.layers.back().width;
}

} // namespace

NetworkSpec NetworkSpec::mlp(std::string name, std::size_t input_dim, std::vector<LayerSpec> layers) {
  NetworkSpec spec;
  spec.name = std::move(name);
  spec.input_dims = {input_dim};
  spec.branches = {BranchSpec{"x", {0}, std::move(layers)}};
  return spec;
}

std::size_t NetworkSpec::output_width() const {
  if (!joint.empty()) return joint.back().width;
  return branch_out_width(*this, branches.at(0));
}

std::size_t NetworkSpec::feature_width() const {
  if (joint.size() >= 2) return joint[joint.size() - 2].width;
  std::size_t joint_in = 0;
  for (const auto& b : branches) joint_in += branch_out_width(*this, b);
  if (joint.size() == 1) return joint_in;
  const auto& layers = branches.at(0).layers;
  return layers.size() >= 2 ? layers[layers.size() - 2].width : branch_in_width(*this, branches[0]);
}

std::size_t NetworkSpec::analytic_parameter_count() const {
  std::size_t count = 0;
  auto add = [&count](std::size_t in, const std::vector<LayerSpec>& layers) {
    for (const auto& l : layers) {
      count += in * l.width + l.width + (l.batch_norm ? 2 * l.width : 0);
      in = l.width;
    }
  };
  std::size_t joint_in = 0;
  for (const auto& b : branches) {
    add(branch_in_width(*this, b), b.layers);
    joint_in += branch_out_width(*this, b);
  }
  add(joint_in, joint);
  return count;
}

void NetworkSpec::validate() const {
  const std::string where = "network '" + name + "': ";
  require(!input_dims.empty(), ErrorCode::config, where + "no inputs");
  for (std::size_t d : input_dims) require(d >= 1, ErrorCode::config, where + "input width 0");
  require(!branches.empty(), ErrorCode::config, where + "no branches");
  std::size_t layer_count = joint.size();
  std::vector<int> used(input_dims.size(), 0);
  for (const auto& b : branches) {
    require(!b.inputs.empty(), ErrorCode::config, where + "branch '" + b.name + "' has no inputs");
    for (std::size_t i : b.inputs) {
      require(i < input_dims.size(), ErrorCode::config,
              where + "branch '" + b.name + "' refers to input " + std::to_string(i));
      ++used[i];
    }
    layer_count += b.layers.size();
  }
  for (std::size_t i = 0; i < used.size(); ++i)
    require(used[i] == 1, ErrorCode::config,
            where + "input " + std::to_string(i) + " must feed exactly one branch");
  require(layer_count > 0, ErrorCode::config, where + "empty layer list");
  require(!joint.empty() || branches.size() == 1, ErrorCode::config,
          where + "several branches need joint layers");
  require(!joint.empty() || !branches[0].layers.empty(), ErrorCode::config,
          where + "empty layer list");
  auto check_layers = [&](const std::vector<LayerSpec>& layers) {
    for (const auto& l : layers) {
      require(l.width >= 1, ErrorCode::config, where + "layer width must be >= 1");
      require(l.dropout >= 0 && l.dropout <= 1, ErrorCode::config,
              where + "dropout rate outside [0,1]");
    }
  };
  for (const auto& b : branches) check_layers(b.layers);
  check_layers(joint);
}

Network Network::build(const NetworkSpec& spec, RngStream& rng) {
  spec.validate();
  Network net;
  net.spec_ = spec;
  std::size_t joint_in = 0;
  for (const auto& b : spec.branches) {
    std::vector<DenseLayer> layers;
    std::size_t in = branch_in_width(spec, b);
    for (std::size_t i = 0; i < b.layers.size(); ++i) {
      layers.push_back(make_layer(spec.name + "/" + b.name + "/" + std::to_string(i), in,
                                  b.layers[i], rng));
      in = b.layers[i].width;
    }
    joint_in += in;
    net.branches_.push_back(std::move(layers));
  }
  std::size_t in = joint_in;
  for (std::size_t i = 0; i < spec.joint.size(); ++i) {
    net.joint_.push_back(make_layer(spec.name + "/joint/" + std::to_string(i), in, spec.joint[i], rng));
    in = spec.joint[i].width;
  }
  return net;
}

NetworkOutput Network::forward(Tape& tape, std::span<const Var> inputs, Mode mode, RngStream& rng,
                               bool trainable) const {
  require(inputs.size() == spec_.arity(), ErrorCode::contract,
          "network '" + spec_.name + "' takes " + std::to_string(spec_.arity()) + " inputs, got " +
              std::to_string(inputs.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& v = inputs[i].value();
    require(v.rank() == 2 && v.cols() == spec_.input_dims[i], ErrorCode::shape,
            "network '" + spec_.name + "' input " + std::to_string(i) + " has shape " +
                to_string(v.shape()) + ", expected width " + std::to_string(spec_.input_dims[i]));
  }

  const Real slope = spec_.leaky_slope;
  Applied last{};
  std::vector<Var> branch_out;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    std::vector<Var> parts;
    for (std::size_t i : spec_.branches[b].inputs) parts.push_back(inputs[i]);
    Var h = parts.size() == 1 ? parts[0] : concat(parts, 1);
    for (const auto& layer : branches_[b]) {
      last = apply_layer(tape, layer, h, mode, rng, trainable, slope);
      h = last.out;
    }
    branch_out.push_back(h);
  }
  if (!joint_.empty()) {
    Var h = branch_out.size() == 1 ? branch_out[0] : concat(branch_out, 1);
    for (const auto& layer : joint_) {
      last = apply_layer(tape, layer, h, mode, rng, trainable, slope);
      h = last.out;
    }
  }
  return {last.out, last.pre, last.input};
}

Tensor Network::infer(std::span<const Tensor> inputs) const {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  RngStream unused(0);
  return forward(tape, vars, Mode::eval, unused, false).output.value();
}

void Network::power_iterate(int iters) {
  auto step = [iters](std::vector<DenseLayer>& layers) {
    for (auto& l : layers)
      if (l.spectral) power_iteration(l.weight.value, *l.spectral, iters);
  };
  for (auto& b : branches_) step(b);
  step(joint_);
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& b : branches_) for_each_param(b, [&](Parameter& p) { out.push_back(&p); });
  for_each_param(joint_, [&](Parameter& p) { out.push_back(&p); });
  return out;
}

std::vector<const Parameter*> Network::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& b : branches_) for_each_param(b, [&](const Parameter& p) { out.push_back(&p); });
  for_each_param(joint_, [&](const Parameter& p) { out.push_back(&p); });
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

void Network::visit_state(const StateVisitor& visit) {
  for (auto& b : branches_) visit_layers(b, visit);
  visit_layers(joint_, visit);
}

void Network::visit_state(const ConstStateVisitor& visit) const {
  for (const auto& b : branches_) visit_layers(b, visit);
  visit_layers(joint_, visit);
}

DenseLayer& Network::output_layer() {
  if (!joint_.empty()) return joint_.back();
  return branches_.at(0).back();
}

Tensor encode(const Network& encoder, const Tensor& x) {
  const Tensor inputs[] = {x};
  return encoder.infer(inputs);
}

Tensor generate(const Network& generator, const Tensor& z) {
  const Tensor inputs[] = {z};
  return generator.infer(inputs);
}

DiscriminatorOutput discriminate(const Network& discriminator, std::span<const Tensor> inputs) {
  require(inputs.size() == discriminator.arity(), ErrorCode::contract,
          "discriminator '" + discriminator.spec().name + "' takes " +
              std::to_string(discriminator.arity()) + " inputs, got " +
              std::to_string(inputs.size()));
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  RngStream unused(0);
  const auto out = discriminator.forward(tape, vars, Mode::eval, unused, false);
  Var prob = activation(Activation::sigmoid, out.logit);
  return {out.logit.value(), prob.value(), out.features.value()};
}

Network identity_network(std::string name, std::size_t dim) {
  RngStream rng(0);
  Network net = Network::build(
      NetworkSpec::mlp(std::move(name), dim, {LayerSpec{dim, Activation::none}}), rng);
  net.output_layer().weight.value = Tensor::identity(dim);
  return net;
}

namespace {

LayerSpec dense(std::size_t width, Activation act, Real drop = 0, bool bn = false) {
  return LayerSpec{width, act, bn, drop, false};
}

LayerSpec disc(std::size_t width, Real drop = 0, bool bn = false) {
  return LayerSpec{width, Activation::lrelu, bn, drop, true};
}

LayerSpec disc_out() { return LayerSpec{1, Activation::sigmoid, false, 0, true}; }

struct DiscLayout {
  std::vector<LayerSpec> xz_x, xz_z, xz_joint;
  std::vector<LayerSpec> xx, zz;
  std::vector<LayerSpec> xxzz_xx, xxzz_zz, xxzz_joint;
};

NetworkSpec pair_net(std::string name, std::size_t dim, std::vector<LayerSpec> layers) {
  NetworkSpec spec;
  spec.name = std::move(name);
  spec.input_dims = {dim, dim};
  spec.branches = {BranchSpec{"pair", {0, 1}, std::move(layers)}};
  return spec;
}

void place_discriminators(BundleSpec& b, const DiscLayout& l) {
  b.d_xz.name = "d_xz";
  b.d_xz.input_dims = {b.input_dim, b.latent_dim};
  b.d_xz.branches = {BranchSpec{"x", {0}, l.xz_x}, BranchSpec{"z", {1}, l.xz_z}};
  b.d_xz.joint = l.xz_joint;

  b.d_xx = pair_net("d_xx", b.input_dim, l.xx);
  b.d_zz = pair_net("d_zz", b.latent_dim, l.zz);

  b.d_xxzz.name = "d_xxzz";
  b.d_xxzz.input_dims = {b.input_dim, b.input_dim, b.latent_dim, b.latent_dim};
  b.d_xxzz.branches = {BranchSpec{"xx", {0, 1}, l.xxzz_xx}, BranchSpec{"zz", {2, 3}, l.xxzz_zz}};
  b.d_xxzz.joint = l.xxzz_joint;
}

DiscLayout layout_of(const BundleSpec& b) {
  return {b.d_xz.branches.at(0).layers, b.d_xz.branches.at(1).layers, b.d_xz.joint,
          b.d_xx.branches.at(0).layers, b.d_zz.branches.at(0).layers,
          b.d_xxzz.branches.at(0).layers, b.d_xxzz.branches.at(1).layers, b.d_xxzz.joint};
}

} // namespace

void BundleSpec::validate() const {
  require(input_dim >= 1, ErrorCode::config, "input_dim must be >= 1");
  require(latent_dim >= 1, ErrorCode::config, "latent_dim must be >= 1");
  for (const NetworkSpec* n : {&encoder, &generator, &d_xz, &d_xx, &d_zz, &d_xxzz}) n->validate();
  require(encoder.input_dims == std::vector<std::size_t>{input_dim} &&
              encoder.output_width() == latent_dim,
          ErrorCode::config, "encoder must map input_dim to latent_dim");
  require(generator.input_dims == std::vector<std::size_t>{latent_dim} &&
              generator.output_width() == input_dim,
          ErrorCode::config, "generator must map latent_dim to input_dim");
  require(d_xz.input_dims == std::vector<std::size_t>{input_dim, latent_dim}, ErrorCode::config,
          "d_xz takes (x, z)");
  require(d_xx.input_dims == std::vector<std::size_t>{input_dim, input_dim}, ErrorCode::config,
          "d_xx takes (x, x')");
  require(d_zz.input_dims == std::vector<std::size_t>{latent_dim, latent_dim}, ErrorCode::config,
          "d_zz takes (z, z')");
  require(d_xxzz.input_dims ==
              std::vector<std::size_t>{input_dim, input_dim, latent_dim, latent_dim},
          ErrorCode::config, "d_xxzz takes (x, x', z, z')");
  for (const NetworkSpec* n : {&d_xz, &d_xx, &d_zz, &d_xxzz})
    require(n->output_width() == 1, ErrorCode::config, n->name + " must output one unit");
}

ArchKind parse_arch_kind(std::string_view name) {
  if (name == "arrhythmia") return ArchKind::arrhythmia;
  if (name == "thyroid") return ArchKind::thyroid;
  if (name == "musk") return ArchKind::musk;
  if (name == "kdd") return ArchKind::kdd;
  if (name == "toy") return ArchKind::toy;
  fail(ErrorCode::config, "unknown architecture kind '" + std::string(name) + "'");
}

std::string_view to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::arrhythmia: return "arrhythmia";
    case ArchKind::thyroid: return "thyroid";
    case ArchKind::musk: return "musk";
    case ArchKind::kdd: return "kdd";
    case ArchKind::toy: return "toy";
  }
  return "?";
}

BundleSpec default_arch(ArchKind kind, std::size_t input_dim, std::size_t latent_dim) {
  require(input_dim >= 1, ErrorCode::config, "input_dim must be >= 1");
  const auto L = Activation::lrelu;
  const auto R = Activation::relu;
  const auto N = Activation::none;
  BundleSpec b;
  b.input_dim = input_dim;
  std::vector<LayerSpec> enc, gen;
  DiscLayout d;
  switch (kind) {
    case ArchKind::arrhythmia:
    case ArchKind::thyroid:
    case ArchKind::musk:
      b.latent_dim = latent_dim ? latent_dim : 64;
      enc = {dense(256, L), dense(128, L), dense(b.latent_dim, N)};
      gen = {dense(128, R), dense(256, R), dense(input_dim, N)};
      d.xz_x = {disc(128, 0, true)};
      d.xz_z = {disc(128, 0.5)};
      d.xz_joint = {disc(256, 0.5), disc_out()};
      d.xx = {disc(256, 0.2), disc(128, 0.2), disc_out()};
      d.zz = {disc(64, 0.2), disc(32, 0.2), disc_out()};
      d.xxzz_xx = {disc(256, 0, true), disc(128, 0.2)};
      d.xxzz_zz = {disc(64, 0.2)};
      d.xxzz_joint = {disc(128, 0.5), disc(32), disc_out()};
      break;
    case ArchKind::kdd:
      b.latent_dim = latent_dim ? latent_dim : 1;  // as published
      enc = {dense(64, L), dense(b.latent_dim, N)};
      gen = {dense(64, R), dense(128, R), dense(input_dim, N)};
      d.xz_x = {disc(128, 0, true)};
      d.xz_z = {disc(128, 0.5)};
      d.xz_joint = {disc(128, 0.5), disc_out()};
      d.xx = {disc(128, 0.2), disc_out()};
      d.zz = {disc(32, 0.2), disc_out()};
      d.xxzz_xx = {disc(128, 0, true)};
      d.xxzz_zz = {disc(32, 0.5)};
      d.xxzz_joint = {disc(64, 0.5), disc(16), disc_out()};
      break;
    case ArchKind::toy:
      b.latent_dim = latent_dim ? latent_dim : 2;
      enc = {dense(32, L), dense(16, L), dense(b.latent_dim, N)};
      gen = {dense(16, R), dense(32, R), dense(input_dim, N)};
      d.xz_x = {disc(32, 0, true)};
      d.xz_z = {disc(32)};
      d.xz_joint = {disc(32), disc_out()};
      d.xx = {disc(32), disc(16), disc_out()};
      d.zz = {disc(32), disc(16), disc_out()};
      d.xxzz_xx = {disc(32, 0, true)};
      d.xxzz_zz = {disc(16)};
      d.xxzz_joint = {disc(32), disc(16), disc_out()};
      break;
  }
  b.encoder = NetworkSpec::mlp("encoder", input_dim, std::move(enc));
  b.generator = NetworkSpec::mlp("generator", b.latent_dim, std::move(gen));
  place_discriminators(b, d);
  b.validate();
  return b;
}

void resize_bundle(BundleSpec& spec, std::size_t input_dim, std::size_t latent_dim) {
  require(input_dim >= 1 && latent_dim >= 1, ErrorCode::config, "dimensions must be >= 1");
  const DiscLayout d = layout_of(spec);
  spec.input_dim = input_dim;
  spec.latent_dim = latent_dim;
  spec.encoder.input_dims = {input_dim};
  spec.encoder.branches.at(0).layers.back().width = latent_dim;
  spec.generator.input_dims = {latent_dim};
  spec.generator.branches.at(0).layers.back().width = input_dim;
  place_discriminators(spec, d);
  spec.validate();
}

Variant parse_variant(std::string_view name) {
  if (name == "ali") return Variant::ali;
  if (name == "alice") return Variant::alice;
  if (name == "alad") return Variant::alad;
  if (name == "calad") return Variant::calad;
  if (name == "ralad") return Variant::ralad;
  if (name == "rcalad") return Variant::rcalad;
  fail(ErrorCode::config, "unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::ali: return "ali";
    case Variant::alice: return "alice";
    case Variant::alad: return "alad";
    case Variant::calad: return "calad";
    case Variant::ralad: return "ralad";
    case Variant::rcalad: return "rcalad";
  }
  return "?";
}

Toggles toggles_for(Variant v) {
  switch (v) {
    case Variant::ali: return {false, false, false, false};
    case Variant::alice: return {true, false, false, false};
    case Variant::alad: return {true, true, false, false};
    case Variant::calad: return {true, true, true, false};
    case Variant::ralad: return {true, true, false, true};
    case Variant::rcalad: return {true, true, true, true};
  }
  return {};
}

ModelBundle ModelBundle::build(const BundleSpec& spec, const Toggles& toggles, RngStream& rng) {
  spec.validate();
  ModelBundle m;
  m.spec_ = spec;
  // every network gets its own stream so toggling one off leaves the others unchanged
  auto sub = [&rng](std::string_view name) { return rng.derive(name); };
  RngStream r = sub("encoder");
  m.encoder = Network::build(spec.encoder, r);
  r = sub("generator");
  m.generator = Network::build(spec.generator, r);
  r = sub("d_xz");
  m.d_xz = Network::build(spec.d_xz, r);
  if (toggles.use_dxx) {
    r = sub("d_xx");
    m.d_xx = Network::build(spec.d_xx, r);
  }
  if (toggles.use_dzz) {
    r = sub("d_zz");
    m.d_zz = Network::build(spec.d_zz, r);
  }
  if (toggles.use_dxxzz) {
    r = sub("d_xxzz");
    m.d_xxzz = Network::build(spec.d_xxzz, r);
  }
  return m;
}

std::vector<Network*> ModelBundle::discriminators() {
  std::vector<Network*> out{&d_xz};
  for (auto* d : {&d_xx, &d_zz, &d_xxzz})
    if (*d) out.push_back(&**d);
  return out;
}

std::vector<const Network*> ModelBundle::discriminators() const {
  std::vector<const Network*> out{&d_xz};
  for (auto* d : {&d_xx, &d_zz, &d_xxzz})
    if (*d) out.push_back(&**d);
  return out;
}

void ModelBundle::visit_state(const StateVisitor& visit) {
  encoder.visit_state(visit);
  generator.visit_state(visit);
  for (Network* d : discriminators()) d->visit_state(visit);
}

void ModelBundle::visit_state(const ConstStateVisitor& visit) const {
  encoder.visit_state(visit);
  generator.visit_state(visit);
  for (const Network* d : discriminators()) d->visit_state(visit);
}

} // namespace rcalad
