#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "logrep/tokenizer.hpp"

namespace logrep {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t hidden_size = 64;
  std::size_t ff_size = 128;
  std::size_t vocab_size = 0;
  std::size_t max_seq = 128;
  double dropout_prob = 0.1;
  /// Width of the classification head; 0 means no head.
  std::size_t num_classes = 0;

  std::size_t head_dim() const { return hidden_size / num_heads; }
  void validate() const;

  /// Desk-scale default: 2 layers, 2 heads, hidden 64, feed-forward 128.
  static EncoderConfig tiny(std::size_t vocab_size);
  /// 12 layers, 12 heads, hidden 768, feed-forward 3072.
  static EncoderConfig base(std::size_t vocab_size);

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct LayerParameters {
  Matrix query_w, key_w, value_w, output_w;  // hidden x hidden, input-major
  RowVector query_b, key_b, value_b, output_b;
  RowVector attention_norm_scale, attention_norm_shift;
  Matrix ff_in_w;  // hidden x ff
  RowVector ff_in_b;
  Matrix ff_out_w;  // ff x hidden
  RowVector ff_out_b;
  RowVector ff_norm_scale, ff_norm_shift;
};

struct ModelParameters {
  Matrix token_embedding;     // vocab x hidden
  Matrix position_embedding;  // max_seq x hidden
  std::vector<LayerParameters> layers;
  Matrix mlm_w;  // hidden x vocab
  RowVector mlm_b;
  Matrix classifier_w;  // hidden x num_classes
  RowVector classifier_b;

  /// Same shapes as `config` prescribes, all zeros.
  static ModelParameters zeros(const EncoderConfig& config);
  std::size_t parameter_count() const;
  bool all_finite() const;
};

template <class Scalar>
struct BasicParamView {
  std::string name;
  std::span<Scalar> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Whether decoupled weight decay applies (weights and embeddings, not
  /// biases or layer-norm parameters).
  bool decay = false;
};
using ParamView = BasicParamView<double>;
using ConstParamView = BasicParamView<const double>;

/// Flat views of every tensor in a fixed order. That order is the
/// checkpoint manifest order.
std::vector<ParamView> parameter_views(ModelParameters& params);
std::vector<ConstParamView> parameter_views(const ModelParameters& params);

/// Weights from a normal distribution truncated at two standard deviations
/// (stddev 0.02); layer-norm scales 1; shifts and biases 0.
ModelParameters init_params(const EncoderConfig& config, std::uint64_t seed);

/// Replaces the classification head with a fresh one of `num_classes` outputs.
void attach_classifier(ModelParameters& params, EncoderConfig& config, std::size_t num_classes,
                       std::uint64_t seed);

struct EncoderInput {
  TokenMatrix input_ids;
  std::vector<std::vector<std::uint8_t>> attention_mask;

  std::size_t batch_size() const { return input_ids.size(); }
};

/// Normalizes and encodes every raw line ([CLS] pieces [SEP], truncated to
/// max_len), without padding: rows keep their own lengths.
EncoderInput encode_texts(const Vocabulary& vocab, std::span<const std::string> raw_lines,
                          std::size_t max_len);

/// Drops trailing padded positions of every row. Outputs at real positions
/// are unchanged because padded keys are masked out.
EncoderInput trim_padding(const EncoderInput& input);

/// Contextual vectors for a batch; rows of all sequences are stacked.
struct HiddenStates {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lengths;
  Matrix states;

  std::size_t batch_size() const { return offsets.size(); }
  auto sequence(std::size_t b) const {
    return states.middleRows(static_cast<Eigen::Index>(offsets[b]),
                             static_cast<Eigen::Index>(lengths[b]));
  }
};

struct ForwardOptions {
  bool train = false;  // enables dropout
  std::uint64_t seed = 0;
};

/// Optional capture of attention probabilities: attention[layer][b][head].
struct ForwardTrace {
  std::vector<std::vector<std::vector<Matrix>>> attention;
};

/// Post-layer-norm encoder: per layer, multi-head scaled dot-product
/// attention with masked keys, residual and layer norm, then a GELU
/// feed-forward block with residual and layer norm.
HiddenStates forward(const ModelParameters& params, const EncoderConfig& config,
                     const EncoderInput& input, const ForwardOptions& options = {},
                     ForwardTrace* trace = nullptr);

Matrix softmax_rows(const Matrix& logits);
Matrix log_softmax_rows(const Matrix& logits);

struct NllSum {
  double total = 0.0;
  std::size_t count = 0;
  double mean() const { return total / static_cast<double>(count); }
};

/// MLM head logits at every labeled position, in row-major position order.
Matrix mlm_logits(const HiddenStates& hidden, const ModelParameters& params,
                  const TokenMatrix& mlm_labels);
/// Summed negative log-likelihood over labeled positions.
NllSum mlm_nll(const HiddenStates& hidden, const ModelParameters& params,
               const TokenMatrix& mlm_labels);
/// Mean NLL over labeled positions; throws DataError when nothing is labeled.
double mlm_loss(const HiddenStates& hidden, const ModelParameters& params,
                const TokenMatrix& mlm_labels);

/// Linear map of the first-position vector of every sequence.
Matrix classify(const HiddenStates& hidden, const ModelParameters& params);
double classification_loss(const Matrix& logits, std::span<const std::size_t> labels);

struct MlmTarget {
  TokenMatrix labels;
};
struct ClassTarget {
  std::vector<std::size_t> labels;
};
using LossTarget = std::variant<MlmTarget, ClassTarget>;

struct LossGradients {
  double loss = 0.0;
  ModelParameters gradients;
};

/// Loss of `target` and its exact gradient with respect to every parameter.
/// Dropout masks are drawn from `options.seed`, so a fixed seed gives a
/// deterministic (and differentiable) function of the parameters.
LossGradients backward(const ModelParameters& params, const EncoderConfig& config,
                       const EncoderInput& input, const LossTarget& target,
                       const ForwardOptions& options = {});

/// Forward pass and loss only.
double compute_loss(const ModelParameters& params, const EncoderConfig& config,
                    const EncoderInput& input, const LossTarget& target,
                    const ForwardOptions& options = {});

double gelu(double x);

}  // namespace logrep
