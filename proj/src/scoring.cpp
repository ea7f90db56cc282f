#include "rcalad/scoring.hpp"

#include <cmath>

#include "rcalad/error.hpp"

namespace rcalad {

namespace {

const Network& need(const std::optional<Network>& d, ScoreKind kind, const char* which) {
  if (!d)
    fail(ErrorCode::unavailable_score, std::string(to_string(kind)) + " needs " + which +
                                           ", which this model was trained without");
  return *d;
}

void check_triple(const ModelBundle& b, const Tensor& x, const ReconTriple& t) {
  const std::size_t n = x.rows();
  require(t.z_x.rows() == n && t.x_hat.rows() == n && t.z_hat.rows() == n &&
              t.z_x.cols() == b.latent_dim() && t.z_hat.cols() == b.latent_dim() &&
              t.x_hat.cols() == b.input_dim(),
          ErrorCode::contract, "reconstruction triple does not match the input batch");
}

ScoreColumn l1_rows(const Tensor& a, const Tensor& b) {
  ScoreColumn out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    Real s = 0;
    const auto ra = a.row(r), rb = b.row(r);
    for (std::size_t c = 0; c < ra.size(); ++c) s += std::abs(ra[c] - rb[c]);
    out[r] = s;
  }
  return out;
}

Real log_sigmoid(Real l) { return l >= 0 ? -std::log1p(std::exp(-l)) : l - std::log1p(std::exp(l)); }

} // namespace

ReconTriple reconstruct(const ModelBundle& bundle, const Tensor& x) {
  require(x.rank() == 2 && x.cols() == bundle.input_dim(), ErrorCode::contract,
          "input of shape " + to_string(x.shape()) + " does not match input_dim " +
              std::to_string(bundle.input_dim()));
  ReconTriple t;
  t.z_x = encode(bundle.encoder, x);
  t.x_hat = generate(bundle.generator, t.z_x);
  t.z_hat = encode(bundle.encoder, t.x_hat);
  return t;
}

ScoreKind parse_score_kind(std::string_view name) {
  if (name.starts_with("a_")) name.remove_prefix(2);
  if (name == "l1") return ScoreKind::l1;
  if (name == "l2") return ScoreKind::l2;
  if (name == "logits") return ScoreKind::logits;
  if (name == "features") return ScoreKind::features;
  if (name == "fm") return ScoreKind::fm;
  if (name == "all") return ScoreKind::all;
  fail(ErrorCode::config, "unknown score '" + std::string(name) + "'");
}

std::string_view to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::l1: return "a_l1";
    case ScoreKind::l2: return "a_l2";
    case ScoreKind::logits: return "a_logits";
    case ScoreKind::features: return "a_features";
    case ScoreKind::fm: return "a_fm";
    case ScoreKind::all: return "a_all";
  }
  return "?";
}

bool score_available(const ModelBundle& b, ScoreKind kind) {
  switch (kind) {
    case ScoreKind::l1:
    case ScoreKind::l2: return true;
    case ScoreKind::logits:
    case ScoreKind::features: return b.d_xx.has_value();
    case ScoreKind::fm: return b.d_xxzz.has_value();
    case ScoreKind::all: return b.d_xx && b.d_zz && b.d_xxzz;
  }
  return false;
}

ScoreColumn score_l1(const Tensor& x, const ReconTriple& t) { return l1_rows(x, t.x_hat); }

ScoreColumn score_l2(const Tensor& x, const ReconTriple& t) {
  ScoreColumn out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Real s = 0;
    const auto a = x.row(r), b = t.x_hat.row(r);
    for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
    out[r] = std::sqrt(s);
  }
  return out;
}

ScoreColumn score_logits(const ModelBundle& b, const Tensor& x, const ReconTriple& t) {
  const Network& d = need(b.d_xx, ScoreKind::logits, "D_xx");
  check_triple(b, x, t);
  const Tensor in[] = {x, t.x_hat};
  const Tensor logit = discriminate(d, in).logit;
  ScoreColumn out(x.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = log_sigmoid(logit[r]);
  return out;
}

ScoreColumn score_features(const ModelBundle& b, const Tensor& x, const ReconTriple& t) {
  const Network& d = need(b.d_xx, ScoreKind::features, "D_xx");
  check_triple(b, x, t);
  const Tensor real[] = {x, x};
  const Tensor fake[] = {x, t.x_hat};
  return l1_rows(discriminate(d, real).features, discriminate(d, fake).features);
}

ScoreColumn score_fm(const ModelBundle& b, const Tensor& x, const ReconTriple& t) {
  const Network& d = need(b.d_xxzz, ScoreKind::fm, "D_xxzz");
  check_triple(b, x, t);
  const Tensor real[] = {x, x, t.z_x, t.z_x};
  const Tensor fake[] = {x, t.x_hat, t.z_x, t.z_hat};
  return l1_rows(discriminate(d, real).features, discriminate(d, fake).features);
}

ScoreColumn score_all(const ModelBundle& b, const Tensor& x, const ReconTriple& t) {
  const Network& dxxzz = need(b.d_xxzz, ScoreKind::all, "D_xxzz");
  const Network& dxx = need(b.d_xx, ScoreKind::all, "D_xx");
  const Network& dzz = need(b.d_zz, ScoreKind::all, "D_zz");
  check_triple(b, x, t);
  const Tensor q[] = {x, t.x_hat, t.z_x, t.z_hat};
  const Tensor xx[] = {x, t.x_hat};
  const Tensor zz[] = {t.z_x, t.z_hat};
  const Tensor p1 = discriminate(dxxzz, q).prob;
  const Tensor p2 = discriminate(dxx, xx).prob;
  const Tensor p3 = discriminate(dzz, zz).prob;
  ScoreColumn out(x.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = p1[r] + p2[r] + p3[r];
  return out;
}

const ScoreColumn& ScoreTable::get(ScoreKind k) const {
  const auto& c = columns[static_cast<std::size_t>(k)];
  if (!c) fail(ErrorCode::unavailable_score, std::string(to_string(k)) + " is not available");
  return *c;
}

ScoreTable score_batch(const ModelBundle& b, const Tensor& x, std::size_t chunk) {
  require(chunk >= 1, ErrorCode::contract, "chunk must be >= 1");
  require(x.rank() == 2 && x.cols() == b.input_dim(), ErrorCode::contract,
          "input of shape " + to_string(x.shape()) + " does not match input_dim " +
              std::to_string(b.input_dim()));
  ScoreTable table;
  table.rows = x.rows();
  for (ScoreKind k : kAllScores)
    if (score_available(b, k)) table.columns[static_cast<std::size_t>(k)].emplace();

  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < x.rows(); start += chunk) {
    const std::size_t end = std::min(x.rows(), start + chunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const Tensor part = x.rows_subset(idx);
    const ReconTriple t = reconstruct(b, part);
    for (ScoreKind k : kAllScores) {
      auto& col = table.columns[static_cast<std::size_t>(k)];
      if (!col) continue;
      ScoreColumn v;
      switch (k) {
        case ScoreKind::l1: v = score_l1(part, t); break;
        case ScoreKind::l2: v = score_l2(part, t); break;
        case ScoreKind::logits: v = score_logits(b, part, t); break;
        case ScoreKind::features: v = score_features(b, part, t); break;
        case ScoreKind::fm: v = score_fm(b, part, t); break;
        case ScoreKind::all: v = score_all(b, part, t); break;
      }
      col->insert(col->end(), v.begin(), v.end());
    }
  }
  return table;
}

Orientation Orientation::identity() {
  Orientation o;
  o.sign.fill(Sign::as_is);
  return o;
}

ScoreTable orient(const ScoreTable& raw, const Orientation& convention) {
  ScoreTable out = raw;
  for (ScoreKind k : kAllScores) {
    auto& col = out.columns[static_cast<std::size_t>(k)];
    if (col && convention.of(k) == Sign::negate)
      for (auto& v : *col) v = -v;
  }
  return out;
}

} // namespace rcalad
