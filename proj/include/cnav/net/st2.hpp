#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cnav/ad/ops.hpp"
#include "cnav/ad/tensor.hpp"
#include "cnav/geom.hpp"
#include "cnav/rng.hpp"
#include "cnav/sim/types.hpp"

namespace cnav::net {

using ParamList = std::vector<std::pair<std::string, ad::Tensor>>;

struct NetConfig {
  int embed_dim = 64;    // L-hat
  int head_count = 4;    // h
  int fnn_hidden = 128;
  int head_hidden = 128;
  static constexpr int kHistoryLen = 3;

  int key_dim() const { return embed_dim / head_count; }
  void validate() const;
};

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;

// Pedestrian rows of the last three observations, oldest first, with
// replication padding at episode start: [s0,s0,s0], then [s0,s0,s1],
// then a sliding window. Returns a [3, H, 7] constant.
ad::Tensor build_joint_state(std::span<const sim::Observation> history);

struct Linear {
  Linear() = default;
  Linear(int in, int out, Rng& rng);

  ad::Tensor forward(const ad::Tensor& x) const { return ad::add(ad::matmul(x, w), b); }
  void collect(ParamList& out, const std::string& prefix) const;

  ad::Tensor w, b;
};

// Multi-head self-attention over the second-to-last axis followed by the
// norm + feed-forward stage, residuals after both. The query/key/value
// projections carry a rectified-linear activation.
struct AttentionBlock {
  AttentionBlock() = default;
  AttentionBlock(const NetConfig& cfg, Rng& rng);

  // x: [..., N, embed_dim]; when `attention` is given, the per-head
  // probability tensors [..., N, N] are appended to it.
  ad::Tensor forward(const ad::Tensor& x, std::vector<ad::Tensor>* attention = nullptr) const;
  void collect(ParamList& out, const std::string& prefix) const;

  Linear wq, wk, wv, wo;
  ad::Tensor ln_gain, ln_bias;
  Linear fnn1, fnn2;
  int head_count = 0;
  int key_dim = 0;
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  // joint: [B, 3, H, 7] -> pooled feature [B, embed_dim]
  virtual ad::Tensor encode(const ad::Tensor& joint) const = 0;
  virtual void collect(ParamList& out, const std::string& prefix) const = 0;
};

// Spatial attention over pedestrians per time slice, then temporal
// attention over the three slices per pedestrian, then average pooling.
class St2Encoder : public Encoder {
 public:
  St2Encoder(const NetConfig& cfg, Rng& rng);

  ad::Tensor embed(const ad::Tensor& joint) const;                 // [B,3,H,L]
  ad::Tensor spatial_encode(const ad::Tensor& f,
                            std::vector<ad::Tensor>* attention = nullptr) const;  // [B,3,H,L]
  ad::Tensor temporal_encode(const ad::Tensor& f_s,
                             std::vector<ad::Tensor>* attention = nullptr) const;  // [B,H,3,L]

  ad::Tensor encode(const ad::Tensor& joint) const override;
  void collect(ParamList& out, const std::string& prefix) const override;

 private:
  Linear embed_;
  AttentionBlock spatial_;
  AttentionBlock temporal_;
};

// Flat-input ablation: the joint state concatenated into one vector and
// pushed through a two-layer net of the same output width.
class FlatEncoder : public Encoder {
 public:
  FlatEncoder(const NetConfig& cfg, int human_count, Rng& rng);

  ad::Tensor encode(const ad::Tensor& joint) const override;
  void collect(ParamList& out, const std::string& prefix) const override;

 private:
  Linear l1_, l2_;
  int human_count_;
};

enum class EncoderKind { St2, Flat };

std::unique_ptr<Encoder> make_encoder(EncoderKind kind, const NetConfig& cfg, int human_count,
                                      Rng& rng);

class QNetwork {
 public:
  QNetwork(const NetConfig& cfg, EncoderKind enc, int human_count, Rng& rng);

  // joint [B,3,H,7], robot [B,6], action [B,2] -> [B,1]
  ad::Tensor forward(const ad::Tensor& joint, const ad::Tensor& robot,
                     const ad::Tensor& action) const;
  ParamList params(const std::string& prefix) const;
  void copy_values_from(const QNetwork& other);

 private:
  std::unique_ptr<Encoder> enc_;
  Linear h1_, h2_;
};

class VNetwork {
 public:
  VNetwork(const NetConfig& cfg, EncoderKind enc, int human_count, Rng& rng);

  ad::Tensor forward(const ad::Tensor& joint, const ad::Tensor& robot) const;
  ParamList params(const std::string& prefix) const;

 private:
  std::unique_ptr<Encoder> enc_;
  Linear h1_, h2_;
};

// Diagonal Gaussian over the 2-D action: state-dependent mean, one
// learned log-std pair clamped to [-5, 2].
struct PolicyDistribution {
  Vec2 mean;
  std::array<double, 2> log_std{};

  Vec2 sample(Rng& rng) const;
  double log_prob(const Vec2& action) const;
};

class PolicyNetwork {
 public:
  PolicyNetwork(const NetConfig& cfg, EncoderKind enc, int human_count, Rng& rng);

  // mean [B,2] and clamped log_std [2]
  std::pair<ad::Tensor, ad::Tensor> forward(const ad::Tensor& joint,
                                            const ad::Tensor& robot) const;
  // log pi(a|s) as a [B,1] graph tensor; actions enter as constants.
  ad::Tensor log_prob(const ad::Tensor& mean, const ad::Tensor& log_std,
                      const ad::Tensor& actions) const;

  PolicyDistribution distribution(const ad::Tensor& joint, const ad::Tensor& robot) const;
  ParamList params(const std::string& prefix) const;

 private:
  std::unique_ptr<Encoder> enc_;
  Linear h1_, h2_;
  ad::Tensor log_std_;
};

}  // namespace cnav::net
