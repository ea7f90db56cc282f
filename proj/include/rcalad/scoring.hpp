#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "rcalad/networks.hpp"

namespace rcalad {

/// z_x = E(x), x̂ = G(z_x), ẑ = E(x̂), all in eval mode.
struct ReconTriple {
  Tensor z_x;
  Tensor x_hat;
  Tensor z_hat;
};

ReconTriple reconstruct(const ModelBundle& bundle, const Tensor& x);

enum class ScoreKind { l1, l2, logits, features, fm, all };
inline constexpr std::size_t kScoreKinds = 6;
inline constexpr std::array<ScoreKind, kScoreKinds> kAllScores = {
    ScoreKind::l1, ScoreKind::l2, ScoreKind::logits, ScoreKind::features, ScoreKind::fm,
    ScoreKind::all};

/// Accepts "a_fm" or "fm" style names.
ScoreKind parse_score_kind(std::string_view name);
/// Column name, e.g. "a_fm".
std::string_view to_string(ScoreKind kind);
/// Whether the bundle has the discriminators the score needs.
bool score_available(const ModelBundle& bundle, ScoreKind kind);

using ScoreColumn = std::vector<Real>;

ScoreColumn score_l1(const Tensor& x, const ReconTriple& t);
ScoreColumn score_l2(const Tensor& x, const ReconTriple& t);
/// log D_xx(x, x̂), computed as a stable log-sigmoid of the logit.
ScoreColumn score_logits(const ModelBundle& bundle, const Tensor& x, const ReconTriple& t);
/// ‖f_xx(x, x) − f_xx(x, x̂)‖₁.
ScoreColumn score_features(const ModelBundle& bundle, const Tensor& x, const ReconTriple& t);
/// ‖f_xxzz(x, x, z_x, z_x) − f_xxzz(x, x̂, z_x, ẑ)‖₁.
ScoreColumn score_fm(const ModelBundle& bundle, const Tensor& x, const ReconTriple& t);
/// D_xxzz(x, x̂, z_x, ẑ) + D_xx(x, x̂) + D_zz(z_x, ẑ).
ScoreColumn score_all(const ModelBundle& bundle, const Tensor& x, const ReconTriple& t);

/// Raw per-sample scores. Columns the bundle cannot produce are absent.
struct ScoreTable {
  std::size_t rows = 0;
  std::array<std::optional<ScoreColumn>, kScoreKinds> columns;

  bool has(ScoreKind k) const { return columns[static_cast<std::size_t>(k)].has_value(); }
  /// Throws unavailable_score when the column is absent.
  const ScoreColumn& get(ScoreKind k) const;
};

/// Every available score, evaluated in row chunks so memory stays bounded.
ScoreTable score_batch(const ModelBundle& bundle, const Tensor& x, std::size_t chunk = 4096);

enum class Sign { as_is, negate };

struct Orientation {
  std::array<Sign, kScoreKinds> sign{Sign::as_is, Sign::as_is, Sign::negate,
                                     Sign::as_is, Sign::as_is, Sign::negate};

  static Orientation identity();
  Sign of(ScoreKind k) const { return sign[static_cast<std::size_t>(k)]; }
};

/// Maps raw scores to "larger = more anomalous".
ScoreTable orient(const ScoreTable& raw, const Orientation& convention = {});

} // namespace rcalad
