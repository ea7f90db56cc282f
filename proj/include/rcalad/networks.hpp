#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rcalad/ops.hpp"

namespace rcalad {

struct LayerSpec {
  std::size_t width = 1;
  Activation activation = Activation::lrelu;
  bool batch_norm = false;
  Real dropout = 0;
  bool spectral_norm = false;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// A branch concatenates the listed inputs and runs its layers over them.
/// An empty layer list makes the branch a pure concatenation.
struct BranchSpec {
  std::string name;
  std::vector<std::size_t> inputs;
  std::vector<LayerSpec> layers;

  friend bool operator==(const BranchSpec&, const BranchSpec&) = default;
};

/// Branches run side by side, their outputs are concatenated in order and
/// fed to the joint layers. Without joint layers there must be exactly one
/// branch, whose output is the network output.
struct NetworkSpec {
  std::string name;
  std::vector<std::size_t> input_dims;
  std::vector<BranchSpec> branches;
  std::vector<LayerSpec> joint;
  Real leaky_slope = kDefaultLeakySlope;

  std::size_t arity() const { return input_dims.size(); }
  std::size_t output_width() const;
  /// Width of the activations feeding the last layer.
  std::size_t feature_width() const;
  /// Sum of in*out + out over dense layers plus 2*width per batch norm.
  std::size_t analytic_parameter_count() const;
  void validate() const;

  /// Single-branch multilayer perceptron over one input.
  static NetworkSpec mlp(std::string name, std::size_t input_dim, std::vector<LayerSpec> layers);

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct DenseLayer {
  LayerSpec spec;
  Parameter weight;  // [in, out]
  Parameter bias;    // [out]
  std::optional<Parameter> gamma;
  std::optional<Parameter> beta;
  std::optional<BatchNormStats> bn_stats;
  std::optional<SpectralState> spectral;
};

struct NetworkOutput {
  Var output;    // after the last activation
  Var logit;     // last layer before its activation
  Var features;  // input of the last layer
};

/// Visitor over every piece of persistent state, keyed by a stable name.
using StateVisitor = std::function<void(const std::string& name, Tensor& value)>;
using ConstStateVisitor = std::function<void(const std::string& name, const Tensor& value)>;

class Network {
public:
  /// Weights ~ N(0, 2/fan_in) for (l)relu layers and N(0, 1/fan_in)
  /// otherwise; biases zero; batch-norm scale 1, shift 0.
  static Network build(const NetworkSpec& spec, RngStream& rng);

  /// Records the forward pass on `tape`. With `trainable` the parameters are
  /// bound as gradient leaves, otherwise as constants.
  NetworkOutput forward(Tape& tape, std::span<const Var> inputs, Mode mode, RngStream& rng,
                        bool trainable) const;

  /// Eval-mode convenience returning the output tensor.
  Tensor infer(std::span<const Tensor> inputs) const;

  /// Advances every spectral state by `iters` power iterations.
  void power_iterate(int iters);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  void visit_state(const StateVisitor& visit);
  void visit_state(const ConstStateVisitor& visit) const;

  const NetworkSpec& spec() const { return spec_; }
  std::size_t arity() const { return spec_.arity(); }
  std::vector<DenseLayer>& branch_layers(std::size_t branch) { return branches_.at(branch); }
  std::vector<DenseLayer>& joint_layers() { return joint_; }
  /// Last dense layer of the network.
  DenseLayer& output_layer();

private:
  NetworkSpec spec_;
  std::vector<std::vector<DenseLayer>> branches_;
  std::vector<DenseLayer> joint_;
};

struct DiscriminatorOutput {
  Tensor logit;     // [n, 1]
  Tensor prob;      // sigmoid(logit)
  Tensor features;  // [n, feature_width]
};

/// The encoder, the generator and the four discriminators. Discriminators
/// switched off at construction are absent.
struct BundleSpec {
  std::size_t input_dim = 0;
  std::size_t latent_dim = 0;
  NetworkSpec encoder;
  NetworkSpec generator;
  NetworkSpec d_xz;
  NetworkSpec d_xx;
  NetworkSpec d_zz;
  NetworkSpec d_xxzz;

  void validate() const;
  friend bool operator==(const BundleSpec&, const BundleSpec&) = default;
};

enum class ArchKind { arrhythmia, thyroid, musk, kdd, toy };

ArchKind parse_arch_kind(std::string_view name);
std::string_view to_string(ArchKind kind);

/// Published dense layouts: arrhythmia/thyroid/musk share one layout, kdd
/// has its own, and toy is a scaled-down layout for tests. The generator's
/// last width is set to `input_dim`. `latent_dim` overrides the layout's
/// code size when non-zero.
BundleSpec default_arch(ArchKind kind, std::size_t input_dim, std::size_t latent_dim = 0);

/// Rebuilds the four discriminator specs around new input/latent widths,
/// keeping their hidden layers.
void resize_bundle(BundleSpec& spec, std::size_t input_dim, std::size_t latent_dim);

struct Toggles {
  bool use_dxx = true;
  bool use_dzz = true;
  bool use_dxxzz = true;
  bool use_sigma = true;

  friend bool operator==(const Toggles&, const Toggles&) = default;
};

enum class Variant { ali, alice, alad, calad, ralad, rcalad };

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);
Toggles toggles_for(Variant v);

class ModelBundle {
public:
  static ModelBundle build(const BundleSpec& spec, const Toggles& toggles, RngStream& rng);

  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t latent_dim() const { return spec_.latent_dim; }
  const BundleSpec& spec() const { return spec_; }

  Network encoder;
  Network generator;
  Network d_xz;
  std::optional<Network> d_xx;
  std::optional<Network> d_zz;
  std::optional<Network> d_xxzz;

  std::vector<Network*> discriminators();
  std::vector<const Network*> discriminators() const;

  void visit_state(const StateVisitor& visit);
  void visit_state(const ConstStateVisitor& visit) const;

private:
  BundleSpec spec_;
};

/// z_x = E(x) in eval mode.
Tensor encode(const Network& encoder, const Tensor& x);
/// G(z) in eval mode.
Tensor generate(const Network& generator, const Tensor& z);
/// Eval-mode discriminator pass; the number of inputs must match its arity.
DiscriminatorOutput discriminate(const Network& discriminator, std::span<const Tensor> inputs);

/// One linear layer with identity weights and zero bias.
Network identity_network(std::string name, std::size_t dim);

} // namespace rcalad
