#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dcl/mixture.hpp"
#include "dcl/rng.hpp"

namespace dcl {

enum class Activation { kTanh, kIdentity };

/// Which input a forward pass consumes: image features or report tokens.
enum class InputPath { kFeatures, kText };

struct EncoderConfig {
  int input_dim = 16;
  int hidden = 64;
  int output_dim = 32;
  int vocab_size = 0;       // > 0 adds a text tower (token table + MLP)
  int text_embed_dim = 16;
  double gamma = 1.0;
  bool train_gamma = false;
  // Test hooks: identity activation and no hypersphere projection.
  Activation activation = Activation::kTanh;
  bool project = true;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

/// All trainable state in one flat vector so optimisers and checkpoints can
/// treat it uniformly. Layout per tower: W1 (hidden x in), b1, W2 (out x
/// hidden), b2; the text tower is preceded by its token table
/// (text_embed_dim x vocab); gamma is the final entry.
class EncoderParams {
 public:
  using Matrix = Eigen::MatrixXd;
  using MatMap = Eigen::Map<Matrix>;
  using ConstMatMap = Eigen::Map<const Matrix>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

  EncoderParams() = default;
  explicit EncoderParams(const EncoderConfig& config);
  static EncoderParams init(const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const noexcept { return config_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double gamma() const noexcept { return values_.back(); }
  std::size_t gamma_index() const noexcept { return values_.size() - 1; }
  bool has_text() const noexcept { return config_.vocab_size > 0; }

  struct TowerOffsets {
    std::size_t w1, b1, w2, b2;
    int in;
  };
  TowerOffsets tower(InputPath path) const;
  std::size_t token_table_offset() const noexcept { return token_off_; }
  /// True for entries that weight decay should touch (matrices, not biases or gamma).
  std::vector<bool> decay_mask() const;

  ConstMatMap w1(InputPath p) const;
  ConstVecMap b1(InputPath p) const;
  ConstMatMap w2(InputPath p) const;
  ConstVecMap b2(InputPath p) const;
  ConstMatMap token_table() const;
  MatMap w1(InputPath p);
  VecMap b1(InputPath p);
  MatMap w2(InputPath p);
  VecMap b2(InputPath p);
  MatMap token_table();

 private:
  EncoderConfig config_;
  std::vector<double> values_;
  TowerOffsets feat_{};
  TowerOffsets text_{};
  std::size_t token_off_ = 0;
};

struct Embedding {
  std::vector<double> vec;
};

/// Intermediate values of a batched forward pass, consumed by backward().
struct ForwardCache {
  InputPath path = InputPath::kFeatures;
  Eigen::MatrixXd input;   // in x B
  Eigen::MatrixXd hidden;  // hidden x B (post-activation)
  Eigen::MatrixXd raw;     // out x B, before projection
  Eigen::VectorXd norms;   // per column of raw
  Eigen::MatrixXd out;     // out x B
  std::vector<TokenSeq> tokens;
};

/// Batched forward pass; returns embeddings as columns (out x B).
Eigen::MatrixXd encode_batch(const EncoderParams& params, InputPath path,
                             std::span<const DataPoint* const> points, ForwardCache* cache = nullptr);
Eigen::MatrixXd encode_features(const EncoderParams& params, const Eigen::MatrixXd& inputs,
                                ForwardCache* cache = nullptr);
Eigen::MatrixXd encode_tokens(const EncoderParams& params, std::span<const TokenSeq> seqs,
                              ForwardCache* cache = nullptr);

/// Single point; the text tower is used when the point has no features.
Embedding encode(const EncoderParams& params, const DataPoint& x);

double similarity(const Embedding& a, const Embedding& b);

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(embeddings)
/// (out x B, matching cache.out). Includes the path through gamma.
void backward(const EncoderParams& params, const ForwardCache& cache, const Eigen::MatrixXd& d_out,
              std::span<double> grad);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string config_hash;
};

/// Writes `<stem>.bin` (little-endian float64 values) and `<stem>.json`.
void save_checkpoint(const EncoderParams& params, const CheckpointMeta& meta, const std::string& stem);
EncoderParams load_checkpoint(const std::string& stem, CheckpointMeta* meta = nullptr);

}  // namespace dcl
