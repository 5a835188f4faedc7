#include "cnav/net/st2.hpp"

#include <cmath>

namespace cnav::net {

namespace {

constexpr double kTau = 6.28318530717958647692;

std::vector<double> he_uniform(int fan_in, int64_t count, Rng& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  std::vector<double> v(count);
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return v;
}

}  // namespace

void NetConfig::validate() const {
  if (embed_dim <= 0 || head_count <= 0 || fnn_hidden <= 0 || head_hidden <= 0)
    throw ad::UsageError("network dimensions must be positive");
  if (embed_dim % head_count != 0)
    throw ad::UsageError("embed_dim " + std::to_string(embed_dim) +
                         " not divisible by head_count " + std::to_string(head_count));
}

ad::Tensor build_joint_state(std::span<const sim::Observation> history) {
  if (history.empty()) throw ad::UsageError("build_joint_state: empty history");
  const sim::Observation* slices[3];
  if (history.size() == 1) {
    slices[0] = slices[1] = slices[2] = &history[0];
  } else if (history.size() == 2) {
    slices[0] = slices[1] = &history[0];
    slices[2] = &history[1];
  } else {
    const size_t last = history.size() - 1;
    slices[0] = &history[last - 2];
    slices[1] = &history[last - 1];
    slices[2] = &history[last];
  }
  const int h = slices[2]->human_count();
  std::vector<double> values;
  values.reserve(3 * h * sim::Observation::kPedDim);
  for (const auto* obs : slices) {
    if (obs->human_count() != h)
      throw ad::ShapeError("build_joint_state: inconsistent pedestrian counts in history");
    values.insert(values.end(), obs->peds.begin(), obs->peds.end());
  }
  return ad::Tensor::constant({3, h, sim::Observation::kPedDim}, std::move(values));
}

Linear::Linear(int in, int out, Rng& rng) {
  w = ad::Tensor::parameter({in, out}, he_uniform(in, static_cast<int64_t>(in) * out, rng));
  b = ad::Tensor::parameter({out}, std::vector<double>(out, 0.0));
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

AttentionBlock::AttentionBlock(const NetConfig& cfg, Rng& rng)
    : wq(cfg.embed_dim, cfg.embed_dim, rng),
      wk(cfg.embed_dim, cfg.embed_dim, rng),
      wv(cfg.embed_dim, cfg.embed_dim, rng),
      wo(cfg.embed_dim, cfg.embed_dim, rng),
      fnn1(cfg.embed_dim, cfg.fnn_hidden, rng),
      fnn2(cfg.fnn_hidden, cfg.embed_dim, rng),
      head_count(cfg.head_count),
      key_dim(cfg.key_dim()) {
  ln_gain = ad::Tensor::parameter({cfg.embed_dim}, std::vector<double>(cfg.embed_dim, 1.0));
  ln_bias = ad::Tensor::parameter({cfg.embed_dim}, std::vector<double>(cfg.embed_dim, 0.0));
}

ad::Tensor AttentionBlock::forward(const ad::Tensor& x,
                                   std::vector<ad::Tensor>* attention) const {
  const ad::Tensor q = ad::relu(wq.forward(x));
  const ad::Tensor k = ad::relu(wk.forward(x));
  const ad::Tensor v = ad::relu(wv.forward(x));

  const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim));
  std::vector<ad::Tensor> heads;
  heads.reserve(head_count);
  for (int i = 0; i < head_count; ++i) {
    const int from = i * key_dim;
    const ad::Tensor qi = ad::slice_last(q, from, from + key_dim);
    const ad::Tensor ki = ad::slice_last(k, from, from + key_dim);
    const ad::Tensor vi = ad::slice_last(v, from, from + key_dim);
    const ad::Tensor scores = ad::scalar_mul(ad::matmul(qi, ad::transpose_last2(ki)), scale);
    const ad::Tensor probs = ad::softmax(scores, scores.rank() - 1);
    if (attention != nullptr) attention->push_back(probs);
    heads.push_back(ad::matmul(probs, vi));
  }

  const ad::Tensor merged = wo.forward(ad::concat(heads, x.rank() - 1));
  const ad::Tensor residual = ad::add(merged, x);
  const ad::Tensor normed = ad::layer_norm(residual, ln_gain, ln_bias);
  const ad::Tensor ffn = fnn2.forward(ad::relu(fnn1.forward(normed)));
  return ad::add(ffn, residual);
}

void AttentionBlock::collect(ParamList& out, const std::string& prefix) const {
  wq.collect(out, prefix + ".wq");
  wk.collect(out, prefix + ".wk");
  wv.collect(out, prefix + ".wv");
  wo.collect(out, prefix + ".wo");
  out.emplace_back(prefix + ".ln.gain", ln_gain);
  out.emplace_back(prefix + ".ln.bias", ln_bias);
  fnn1.collect(out, prefix + ".fnn1");
  fnn2.collect(out, prefix + ".fnn2");
}

St2Encoder::St2Encoder(const NetConfig& cfg, Rng& rng)
    : embed_(sim::Observation::kPedDim, cfg.embed_dim, rng),
      spatial_(cfg, rng),
      temporal_(cfg, rng) {}

ad::Tensor St2Encoder::embed(const ad::Tensor& joint) const {
  return ad::relu(embed_.forward(joint));
}

ad::Tensor St2Encoder::spatial_encode(const ad::Tensor& f,
                                      std::vector<ad::Tensor>* attention) const {
  return spatial_.forward(f, attention);
}

ad::Tensor St2Encoder::temporal_encode(const ad::Tensor& f_s,
                                       std::vector<ad::Tensor>* attention) const {
  std::vector<int> perm(f_s.rank());
  for (int i = 0; i < f_s.rank(); ++i) perm[i] = i;
  std::swap(perm[f_s.rank() - 3], perm[f_s.rank() - 2]);  // time <-> pedestrian
  return temporal_.forward(ad::transpose(f_s, perm), attention);
}

ad::Tensor St2Encoder::encode(const ad::Tensor& joint) const {
  const ad::Tensor f_st = temporal_encode(spatial_encode(embed(joint)));
  // [B,H,3,L] -> [B,L]
  return ad::mean(ad::mean(f_st, f_st.rank() - 3), f_st.rank() - 3);
}

void St2Encoder::collect(ParamList& out, const std::string& prefix) const {
  embed_.collect(out, prefix + ".embed");
  spatial_.collect(out, prefix + ".spatial");
  temporal_.collect(out, prefix + ".temporal");
}

FlatEncoder::FlatEncoder(const NetConfig& cfg, int human_count, Rng& rng)
    : l1_(NetConfig::kHistoryLen * human_count * sim::Observation::kPedDim, cfg.fnn_hidden, rng),
      l2_(cfg.fnn_hidden, cfg.embed_dim, rng),
      human_count_(human_count) {}

ad::Tensor FlatEncoder::encode(const ad::Tensor& joint) const {
  if (joint.rank() != 4)
    throw ad::ShapeError("flat encoder expects [B,3,H,7], got " + ad::shape_str(joint.shape()));
  const int flat = NetConfig::kHistoryLen * human_count_ * sim::Observation::kPedDim;
  const ad::Tensor x = ad::reshape(joint, {joint.shape()[0], flat});
  return ad::relu(l2_.forward(ad::relu(l1_.forward(x))));
}

void FlatEncoder::collect(ParamList& out, const std::string& prefix) const {
  l1_.collect(out, prefix + ".flat1");
  l2_.collect(out, prefix + ".flat2");
}

std::unique_ptr<Encoder> make_encoder(EncoderKind kind, const NetConfig& cfg, int human_count,
                                      Rng& rng) {
  cfg.validate();
  if (kind == EncoderKind::St2) return std::make_unique<St2Encoder>(cfg, rng);
  return std::make_unique<FlatEncoder>(cfg, human_count, rng);
}

QNetwork::QNetwork(const NetConfig& cfg, EncoderKind enc, int human_count, Rng& rng)
    : enc_(make_encoder(enc, cfg, human_count, rng)),
      h1_(cfg.embed_dim + sim::Observation::kRobotDim + 2, cfg.head_hidden, rng),
      h2_(cfg.head_hidden, 1, rng) {}

ad::Tensor QNetwork::forward(const ad::Tensor& joint, const ad::Tensor& robot,
                             const ad::Tensor& action) const {
  const ad::Tensor x = ad::concat({enc_->encode(joint), robot, action}, 1);
  return h2_.forward(ad::relu(h1_.forward(x)));
}

ParamList QNetwork::params(const std::string& prefix) const {
  ParamList out;
  enc_->collect(out, prefix + ".enc");
  h1_.collect(out, prefix + ".h1");
  h2_.collect(out, prefix + ".h2");
  return out;
}

void QNetwork::copy_values_from(const QNetwork& other) {
  ParamList mine = params("x");
  ParamList theirs = other.params("x");
  for (size_t i = 0; i < mine.size(); ++i) mine[i].second.values() = theirs[i].second.values();
}

VNetwork::VNetwork(const NetConfig& cfg, EncoderKind enc, int human_count, Rng& rng)
    : enc_(make_encoder(enc, cfg, human_count, rng)),
      h1_(cfg.embed_dim + sim::Observation::kRobotDim, cfg.head_hidden, rng),
      h2_(cfg.head_hidden, 1, rng) {}

ad::Tensor VNetwork::forward(const ad::Tensor& joint, const ad::Tensor& robot) const {
  const ad::Tensor x = ad::concat({enc_->encode(joint), robot}, 1);
  return h2_.forward(ad::relu(h1_.forward(x)));
}

ParamList VNetwork::params(const std::string& prefix) const {
  ParamList out;
  enc_->collect(out, prefix + ".enc");
  h1_.collect(out, prefix + ".h1");
  h2_.collect(out, prefix + ".h2");
  return out;
}

Vec2 PolicyDistribution::sample(Rng& rng) const {
  return {mean.x + std::exp(log_std[0]) * rng.normal(),
          mean.y + std::exp(log_std[1]) * rng.normal()};
}

double PolicyDistribution::log_prob(const Vec2& action) const {
  double lp = -std::log(kTau);  // -log(2*pi), the 2-D normalizer
  const double dx = (action.x - mean.x) * std::exp(-log_std[0]);
  const double dy = (action.y - mean.y) * std::exp(-log_std[1]);
  lp -= log_std[0] + log_std[1];
  lp -= 0.5 * (dx * dx + dy * dy);
  return lp;
}

PolicyNetwork::PolicyNetwork(const NetConfig& cfg, EncoderKind enc, int human_count, Rng& rng)
    : enc_(make_encoder(enc, cfg, human_count, rng)),
      h1_(cfg.embed_dim + sim::Observation::kRobotDim, cfg.head_hidden, rng),
      h2_(cfg.head_hidden, 2, rng) {
  log_std_ = ad::Tensor::parameter({2}, {0.0, 0.0});
}

std::pair<ad::Tensor, ad::Tensor> PolicyNetwork::forward(const ad::Tensor& joint,
                                                         const ad::Tensor& robot) const {
  const ad::Tensor x = ad::concat({enc_->encode(joint), robot}, 1);
  const ad::Tensor mean = h2_.forward(ad::relu(h1_.forward(x)));
  return {mean, ad::clamp(log_std_, kLogStdMin, kLogStdMax)};
}

ad::Tensor PolicyNetwork::log_prob(const ad::Tensor& mean, const ad::Tensor& log_std,
                                   const ad::Tensor& actions) const {
  // log pi(a) = -log(2 pi) - sum(log_std) - 0.5 * sum(((a - mu) / sigma)^2)
  const ad::Tensor diff = ad::sub(actions, mean);                       // [B,2]
  const ad::Tensor z = ad::mul(diff, ad::exp(ad::scalar_mul(log_std, -1.0)));
  const ad::Tensor quad = ad::sum(ad::square(z), 1);                    // [B]
  const ad::Tensor lp =
      ad::add_scalar(ad::scalar_mul(quad, -0.5), -std::log(kTau));      // [B]
  const ad::Tensor shifted = ad::sub(lp, ad::sum_all(log_std));         // [B] - scalar
  return ad::reshape(shifted, {shifted.shape()[0], 1});
}

PolicyDistribution PolicyNetwork::distribution(const ad::Tensor& joint,
                                               const ad::Tensor& robot) const {
  auto [mean, log_std] = forward(joint, robot);
  if (mean.shape()[0] != 1) throw ad::UsageError("distribution() expects a batch of one");
  PolicyDistribution dist;
  dist.mean = {mean.values()[0], mean.values()[1]};
  dist.log_std = {log_std.values()[0], log_std.values()[1]};
  return dist;
}

ParamList PolicyNetwork::params(const std::string& prefix) const {
  ParamList out;
  enc_->collect(out, prefix + ".enc");
  h1_.collect(out, prefix + ".h1");
  h2_.collect(out, prefix + ".h2");
  out.emplace_back(prefix + ".log_std", log_std_);
  return out;
}

}  // namespace cnav::net
