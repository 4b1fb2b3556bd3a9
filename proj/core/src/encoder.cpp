#include "logrep/encoder.hpp"

#include <cmath>
#include <limits>

#include "logrep/error.hpp"
#include "logrep/normalize.hpp"
#include "logrep/rng.hpp"

namespace logrep {
namespace {

constexpr double kNormEps = 1e-12;
constexpr double kInitStddev = 0.02;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

template <class Params, class View, class Visit>
void visit_parameters(Params& p, Visit&& visit) {
  const auto matrix = [&](const std::string& name, auto& m, bool decay) {
    visit(View{name, {m.data(), static_cast<std::size_t>(m.size())}, static_cast<std::size_t>(m.rows()),
               static_cast<std::size_t>(m.cols()), decay});
  };
  matrix("embeddings.token", p.token_embedding, true);
  matrix("embeddings.position", p.position_embedding, true);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string pre = "layer." + std::to_string(l) + ".";
    matrix(pre + "attention.query.weight", layer.query_w, true);
    matrix(pre + "attention.query.bias", layer.query_b, false);
    matrix(pre + "attention.key.weight", layer.key_w, true);
    matrix(pre + "attention.key.bias", layer.key_b, false);
    matrix(pre + "attention.value.weight", layer.value_w, true);
    matrix(pre + "attention.value.bias", layer.value_b, false);
    matrix(pre + "attention.output.weight", layer.output_w, true);
    matrix(pre + "attention.output.bias", layer.output_b, false);
    matrix(pre + "attention.norm.scale", layer.attention_norm_scale, false);
    matrix(pre + "attention.norm.shift", layer.attention_norm_shift, false);
    matrix(pre + "ff.in.weight", layer.ff_in_w, true);
    matrix(pre + "ff.in.bias", layer.ff_in_b, false);
    matrix(pre + "ff.out.weight", layer.ff_out_w, true);
    matrix(pre + "ff.out.bias", layer.ff_out_b, false);
    matrix(pre + "ff.norm.scale", layer.ff_norm_scale, false);
    matrix(pre + "ff.norm.shift", layer.ff_norm_shift, false);
  }
  matrix("mlm.weight", p.mlm_w, true);
  matrix("mlm.bias", p.mlm_b, false);
  matrix("classifier.weight", p.classifier_w, true);
  matrix("classifier.bias", p.classifier_b, false);
}

// ---------------------------------------------------------------------------
// Forward cache

struct LayerCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> probs;       // b * heads + h, before dropout
  std::vector<Matrix> prob_masks;  // empty unless dropout is active
  Matrix context;
  Matrix attention_out_mask;
  Matrix norm1_xhat;
  Eigen::VectorXd norm1_rstd;
  Matrix norm1_out;
  Matrix ff_pre;
  Matrix ff_act;
  Matrix ff_out_mask;
  Matrix norm2_xhat;
  Eigen::VectorXd norm2_rstd;
};

struct ForwardCache {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lengths;
  std::vector<TokenId> ids;   // stacked
  std::vector<std::size_t> positions;
  std::vector<std::vector<std::uint8_t>> key_masks;
  Matrix embedding_mask;
  std::vector<LayerCache> layers;
  Matrix output;
};

Matrix dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double p) {
  Matrix m(rows, cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.uniform() >= p ? keep_scale : 0.0;
  }
  return m;
}

void layer_norm(const Matrix& x, const RowVector& scale, const RowVector& shift, Matrix& xhat,
                Eigen::VectorXd& rstd, Matrix& out) {
  const Eigen::Index rows = x.rows();
  const auto h = static_cast<double>(x.cols());
  xhat.resize(rows, x.cols());
  rstd.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / h;
    const auto centered = (x.row(r).array() - mean).matrix();
    const double var = centered.squaredNorm() / h;
    rstd(r) = 1.0 / std::sqrt(var + kNormEps);
    xhat.row(r) = centered * rstd(r);
  }
  out = (xhat.array().rowwise() * scale.array()).rowwise() + shift.array();
}

// Gradient of layer_norm with respect to its input; accumulates scale/shift grads.
Matrix layer_norm_backward(const Matrix& dout, const Matrix& xhat, const Eigen::VectorXd& rstd,
                           const RowVector& scale, RowVector& dscale, RowVector& dshift) {
  dscale += (dout.array() * xhat.array()).colwise().sum().matrix();
  dshift += dout.colwise().sum();
  const Matrix dxhat = dout.array().rowwise() * scale.array();
  const auto h = static_cast<double>(dout.cols());
  Matrix dx(dout.rows(), dout.cols());
  for (Eigen::Index r = 0; r < dout.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / h;
    const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / h;
    dx.row(r) = rstd(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void check_input(const EncoderConfig& config, const EncoderInput& input) {
  if (input.input_ids.empty()) throw InvalidArgument("encoder input batch is empty");
  if (input.attention_mask.size() != input.input_ids.size()) {
    throw InvalidArgument("attention_mask batch size differs from input_ids");
  }
  for (std::size_t b = 0; b < input.input_ids.size(); ++b) {
    const auto& ids = input.input_ids[b];
    if (ids.empty()) throw InvalidArgument("encoder input row is empty");
    if (ids.size() > config.max_seq) {
      throw InvalidArgument("sequence length " + std::to_string(ids.size()) +
                            " exceeds max_seq " + std::to_string(config.max_seq));
    }
    if (input.attention_mask[b].size() != ids.size()) {
      throw InvalidArgument("attention_mask row length differs from input_ids");
    }
    for (TokenId id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
        throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary");
      }
    }
  }
}

ForwardCache run_forward(const ModelParameters& params, const EncoderConfig& config,
                         const EncoderInput& input, const ForwardOptions& options,
                         ForwardTrace* trace, bool keep_cache) {
  check_input(config, input);
  ForwardCache cache;
  const std::size_t batch = input.input_ids.size();
  std::size_t total = 0;
  for (const auto& row : input.input_ids) {
    cache.offsets.push_back(total);
    cache.lengths.push_back(row.size());
    total += row.size();
  }
  cache.key_masks = input.attention_mask;

  const Eigen::Index hidden = idx(config.hidden_size);
  Matrix x(idx(total), hidden);
  cache.ids.reserve(total);
  cache.positions.reserve(total);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < cache.lengths[b]; ++i) {
      const TokenId id = input.input_ids[b][i];
      const Eigen::Index row = idx(cache.offsets[b] + i);
      x.row(row) = params.token_embedding.row(id) + params.position_embedding.row(idx(i));
      cache.ids.push_back(id);
      cache.positions.push_back(i);
    }
  }

  const bool dropout = options.train && config.dropout_prob > 0.0;
  Rng rng(options.seed);
  if (dropout) {
    cache.embedding_mask = dropout_mask(rng, x.rows(), x.cols(), config.dropout_prob);
    x.array() *= cache.embedding_mask.array();
  }

  const std::size_t heads = config.num_heads;
  const std::size_t dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (trace) trace->attention.assign(config.num_layers, {});

  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const LayerParameters& p = params.layers[l];
    LayerCache lc;
    lc.q = (x * p.query_w).rowwise() + p.query_b;
    lc.k = (x * p.key_w).rowwise() + p.key_b;
    lc.v = (x * p.value_w).rowwise() + p.value_b;
    lc.context = Matrix::Zero(x.rows(), hidden);
    lc.probs.reserve(batch * heads);
    if (trace) trace->attention[l].assign(batch, {});

    for (std::size_t b = 0; b < batch; ++b) {
      const Eigen::Index off = idx(cache.offsets[b]);
      const Eigen::Index len = idx(cache.lengths[b]);
      const auto& keys_ok = input.attention_mask[b];
      for (std::size_t h = 0; h < heads; ++h) {
        const Eigen::Index col = idx(h * dh);
        const auto qh = lc.q.block(off, col, len, idx(dh));
        const auto kh = lc.k.block(off, col, len, idx(dh));
        const auto vh = lc.v.block(off, col, len, idx(dh));
        Matrix probs = (qh * kh.transpose()) * scale;
        for (Eigen::Index r = 0; r < len; ++r) {
          double max_score = -std::numeric_limits<double>::infinity();
          for (Eigen::Index c = 0; c < len; ++c) {
            if (keys_ok[static_cast<std::size_t>(c)]) max_score = std::max(max_score, probs(r, c));
          }
          double sum = 0.0;
          for (Eigen::Index c = 0; c < len; ++c) {
            const double e = keys_ok[static_cast<std::size_t>(c)] ? std::exp(probs(r, c) - max_score) : 0.0;
            probs(r, c) = e;
            sum += e;
          }
          if (sum > 0.0) probs.row(r) /= sum;
        }
        if (trace) trace->attention[l][b].push_back(probs);
        if (dropout) {
          Matrix mask = dropout_mask(rng, len, len, config.dropout_prob);
          lc.context.block(off, col, len, idx(dh)).noalias() = probs.cwiseProduct(mask) * vh;
          lc.prob_masks.push_back(std::move(mask));
        } else {
          lc.context.block(off, col, len, idx(dh)).noalias() = probs * vh;
        }
        lc.probs.push_back(std::move(probs));
      }
    }

    Matrix attn = (lc.context * p.output_w).rowwise() + p.output_b;
    if (dropout) {
      lc.attention_out_mask = dropout_mask(rng, attn.rows(), attn.cols(), config.dropout_prob);
      attn.array() *= lc.attention_out_mask.array();
    }
    const Matrix resid1 = x + attn;
    layer_norm(resid1, p.attention_norm_scale, p.attention_norm_shift, lc.norm1_xhat,
               lc.norm1_rstd, lc.norm1_out);

    lc.ff_pre = (lc.norm1_out * p.ff_in_w).rowwise() + p.ff_in_b;
    lc.ff_act = lc.ff_pre.unaryExpr([](double v) { return gelu(v); });
    Matrix ff = (lc.ff_act * p.ff_out_w).rowwise() + p.ff_out_b;
    if (dropout) {
      lc.ff_out_mask = dropout_mask(rng, ff.rows(), ff.cols(), config.dropout_prob);
      ff.array() *= lc.ff_out_mask.array();
    }
    const Matrix resid2 = lc.norm1_out + ff;
    Matrix out;
    layer_norm(resid2, p.ff_norm_scale, p.ff_norm_shift, lc.norm2_xhat, lc.norm2_rstd, out);

    if (keep_cache) {
      lc.input = std::move(x);
      cache.layers.push_back(std::move(lc));
    }
    x = std::move(out);
  }
  cache.output = std::move(x);
  return cache;
}

HiddenStates to_hidden(ForwardCache&& cache) {
  HiddenStates hs;
  hs.offsets = std::move(cache.offsets);
  hs.lengths = std::move(cache.lengths);
  hs.states = std::move(cache.output);
  return hs;
}

// Row indices (into the stacked states) and targets of labeled MLM positions.
struct LabeledRows {
  std::vector<Eigen::Index> rows;
  std::vector<TokenId> targets;
};

LabeledRows labeled_rows(const std::vector<std::size_t>& offsets,
                         const std::vector<std::size_t>& lengths, const TokenMatrix& labels,
                         std::size_t vocab_size) {
  if (labels.size() != offsets.size()) throw InvalidArgument("mlm_labels batch size mismatch");
  LabeledRows out;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b].size() < lengths[b]) {
      throw InvalidArgument("mlm_labels row shorter than its sequence");
    }
    for (std::size_t i = 0; i < lengths[b]; ++i) {
      const TokenId label = labels[b][i];
      if (label == kIgnoreLabel) continue;
      if (label < 0 || static_cast<std::size_t>(label) >= vocab_size) {
        throw InvalidArgument("mlm label " + std::to_string(label) + " outside vocabulary");
      }
      out.rows.push_back(idx(offsets[b] + i));
      out.targets.push_back(label);
    }
  }
  return out;
}

Matrix gather_rows(const Matrix& states, const std::vector<Eigen::Index>& rows) {
  Matrix out(idx(rows.size()), states.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(idx(i)) = states.row(rows[i]);
  return out;
}

// Mean cross-entropy over rows and its gradient with respect to the logits.
double cross_entropy(const Matrix& logits, const std::vector<std::size_t>& targets,
                     Matrix* dlogits) {
  const Matrix logp = log_softmax_rows(logits);
  const auto n = static_cast<double>(targets.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) loss -= logp(idx(i), idx(targets[i]));
  if (dlogits) {
    *dlogits = logp.array().exp();
    for (std::size_t i = 0; i < targets.size(); ++i) (*dlogits)(idx(i), idx(targets[i])) -= 1.0;
    *dlogits /= n;
  }
  return loss / n;
}

void check_class_labels(std::span<const std::size_t> labels, std::size_t batch,
                        std::size_t num_classes) {
  if (num_classes == 0) throw InvalidArgument("model has no classification head");
  if (labels.size() != batch) throw InvalidArgument("class label count differs from batch size");
  for (std::size_t y : labels) {
    if (y >= num_classes) {
      throw InvalidArgument("class label " + std::to_string(y) + " outside head with " +
                            std::to_string(num_classes) + " classes");
    }
  }
}

// Backpropagates dout (gradient wrt final hidden states) through the stack.
void backprop_layers(const ModelParameters& params, const EncoderConfig& config,
                     const ForwardCache& cache, Matrix dout, ModelParameters& grads) {
  const std::size_t heads = config.num_heads;
  const std::size_t dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (std::size_t li = config.num_layers; li-- > 0;) {
    const LayerParameters& p = params.layers[li];
    LayerParameters& g = grads.layers[li];
    const LayerCache& lc = cache.layers[li];

    const Matrix dresid2 = layer_norm_backward(dout, lc.norm2_xhat, lc.norm2_rstd,
                                               p.ff_norm_scale, g.ff_norm_scale, g.ff_norm_shift);
    Matrix dnorm1 = dresid2;
    Matrix dff = dresid2;
    if (lc.ff_out_mask.size()) dff.array() *= lc.ff_out_mask.array();
    g.ff_out_w.noalias() += lc.ff_act.transpose() * dff;
    g.ff_out_b += dff.colwise().sum();
    Matrix dact = dff * p.ff_out_w.transpose();
    const Matrix dpre = dact.array() * lc.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    g.ff_in_w.noalias() += lc.norm1_out.transpose() * dpre;
    g.ff_in_b += dpre.colwise().sum();
    dnorm1.noalias() += dpre * p.ff_in_w.transpose();

    const Matrix dresid1 =
        layer_norm_backward(dnorm1, lc.norm1_xhat, lc.norm1_rstd, p.attention_norm_scale,
                            g.attention_norm_scale, g.attention_norm_shift);
    Matrix dx = dresid1;
    Matrix dattn = dresid1;
    if (lc.attention_out_mask.size()) dattn.array() *= lc.attention_out_mask.array();
    g.output_w.noalias() += lc.context.transpose() * dattn;
    g.output_b += dattn.colwise().sum();
    const Matrix dcontext = dattn * p.output_w.transpose();

    Matrix dq = Matrix::Zero(lc.q.rows(), lc.q.cols());
    Matrix dk = Matrix::Zero(lc.k.rows(), lc.k.cols());
    Matrix dv = Matrix::Zero(lc.v.rows(), lc.v.cols());
    for (std::size_t b = 0; b < cache.offsets.size(); ++b) {
      const Eigen::Index off = idx(cache.offsets[b]);
      const Eigen::Index len = idx(cache.lengths[b]);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t slot = b * heads + h;
        const Eigen::Index col = idx(h * dh);
        const Matrix& probs = lc.probs[slot];
        const auto dctx = dcontext.block(off, col, len, idx(dh));
        const auto qh = lc.q.block(off, col, len, idx(dh));
        const auto kh = lc.k.block(off, col, len, idx(dh));
        const auto vh = lc.v.block(off, col, len, idx(dh));
        Matrix dprobs = dctx * vh.transpose();
        if (!lc.prob_masks.empty()) {
          const Matrix& mask = lc.prob_masks[slot];
          dv.block(off, col, len, idx(dh)).noalias() += probs.cwiseProduct(mask).transpose() * dctx;
          dprobs.array() *= mask.array();
        } else {
          dv.block(off, col, len, idx(dh)).noalias() += probs.transpose() * dctx;
        }
        const Eigen::VectorXd row_dot = (dprobs.array() * probs.array()).rowwise().sum();
        const Matrix dscores =
            (probs.array() * (dprobs.array().colwise() - row_dot.array())).matrix() * scale;
        dq.block(off, col, len, idx(dh)).noalias() += dscores * kh;
        dk.block(off, col, len, idx(dh)).noalias() += dscores.transpose() * qh;
      }
    }
    g.query_w.noalias() += lc.input.transpose() * dq;
    g.query_b += dq.colwise().sum();
    g.key_w.noalias() += lc.input.transpose() * dk;
    g.key_b += dk.colwise().sum();
    g.value_w.noalias() += lc.input.transpose() * dv;
    g.value_b += dv.colwise().sum();
    dx.noalias() += dq * p.query_w.transpose();
    dx.noalias() += dk * p.key_w.transpose();
    dx.noalias() += dv * p.value_w.transpose();
    dout = std::move(dx);
  }

  if (cache.embedding_mask.size()) dout.array() *= cache.embedding_mask.array();
  for (std::size_t r = 0; r < cache.ids.size(); ++r) {
    grads.token_embedding.row(cache.ids[r]) += dout.row(idx(r));
    grads.position_embedding.row(idx(cache.positions[r])) += dout.row(idx(r));
  }
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

void EncoderConfig::validate() const {
  if (num_layers == 0) throw InvalidArgument("num_layers must be positive");
  if (num_heads == 0 || hidden_size == 0 || hidden_size % num_heads != 0) {
    throw InvalidArgument("hidden_size must be a positive multiple of num_heads");
  }
  if (ff_size == 0) throw InvalidArgument("ff_size must be positive");
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kNumSpecial)) {
    throw InvalidArgument("vocab_size must exceed the number of special tokens");
  }
  if (max_seq < 2) throw InvalidArgument("max_seq must be at least 2");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw InvalidArgument("dropout_prob must lie in [0, 1)");
  }
}

EncoderConfig EncoderConfig::tiny(std::size_t vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  return c;
}

EncoderConfig EncoderConfig::base(std::size_t vocab_size) {
  EncoderConfig c;
  c.num_layers = 12;
  c.num_heads = 12;
  c.hidden_size = 768;
  c.ff_size = 3072;
  c.max_seq = 512;
  c.vocab_size = vocab_size;
  return c;
}

ModelParameters ModelParameters::zeros(const EncoderConfig& config) {
  const Eigen::Index h = idx(config.hidden_size);
  const Eigen::Index f = idx(config.ff_size);
  ModelParameters p;
  p.token_embedding = Matrix::Zero(idx(config.vocab_size), h);
  p.position_embedding = Matrix::Zero(idx(config.max_seq), h);
  p.layers.resize(config.num_layers);
  for (auto& l : p.layers) {
    l.query_w = l.key_w = l.value_w = l.output_w = Matrix::Zero(h, h);
    l.query_b = l.key_b = l.value_b = l.output_b = RowVector::Zero(h);
    l.attention_norm_scale = l.attention_norm_shift = RowVector::Zero(h);
    l.ff_in_w = Matrix::Zero(h, f);
    l.ff_in_b = RowVector::Zero(f);
    l.ff_out_w = Matrix::Zero(f, h);
    l.ff_out_b = RowVector::Zero(h);
    l.ff_norm_scale = l.ff_norm_shift = RowVector::Zero(h);
  }
  p.mlm_w = Matrix::Zero(h, idx(config.vocab_size));
  p.mlm_b = RowVector::Zero(idx(config.vocab_size));
  p.classifier_w = Matrix::Zero(h, idx(config.num_classes));
  p.classifier_b = RowVector::Zero(idx(config.num_classes));
  return p;
}

std::size_t ModelParameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : parameter_views(*this)) n += v.values.size();
  return n;
}

bool ModelParameters::all_finite() const {
  for (const auto& v : parameter_views(*this)) {
    for (double x : v.values) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

std::vector<ParamView> parameter_views(ModelParameters& params) {
  std::vector<ParamView> out;
  visit_parameters<ModelParameters, ParamView>(params, [&](ParamView v) { out.push_back(std::move(v)); });
  return out;
}

std::vector<ConstParamView> parameter_views(const ModelParameters& params) {
  std::vector<ConstParamView> out;
  visit_parameters<const ModelParameters, ConstParamView>(
      params, [&](ConstParamView v) { out.push_back(std::move(v)); });
  return out;
}

ModelParameters init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParameters p = ModelParameters::zeros(config);
  Rng rng(seed);
  for (auto& view : parameter_views(p)) {
    const bool is_scale = view.name.ends_with(".scale");
    const bool is_weight = view.decay;
    for (double& x : view.values) {
      if (is_scale) {
        x = 1.0;
      } else if (is_weight) {
        x = rng.truncated_normal(kInitStddev);
      }
    }
  }
  return p;
}

void attach_classifier(ModelParameters& params, EncoderConfig& config, std::size_t num_classes,
                       std::uint64_t seed) {
  if (num_classes < 2) throw InvalidArgument("a classification head needs at least 2 classes");
  config.num_classes = num_classes;
  Rng rng(seed);
  params.classifier_w.resize(idx(config.hidden_size), idx(num_classes));
  for (Eigen::Index i = 0; i < params.classifier_w.size(); ++i) {
    params.classifier_w.data()[i] = rng.truncated_normal(kInitStddev);
  }
  params.classifier_b = RowVector::Zero(idx(num_classes));
}

EncoderInput encode_texts(const Vocabulary& vocab, std::span<const std::string> raw_lines,
                          std::size_t max_len) {
  EncoderInput out;
  out.input_ids.reserve(raw_lines.size());
  out.attention_mask.reserve(raw_lines.size());
  for (const auto& line : raw_lines) {
    Encoding enc = encode(vocab, normalize_line(line), max_len);
    std::size_t len = 0;
    while (len < enc.attention_mask.size() && enc.attention_mask[len]) ++len;
    enc.ids.resize(len);
    enc.attention_mask.resize(len);
    out.input_ids.push_back(std::move(enc.ids));
    out.attention_mask.push_back(std::move(enc.attention_mask));
  }
  return out;
}

EncoderInput trim_padding(const EncoderInput& input) {
  EncoderInput out;
  out.input_ids.reserve(input.input_ids.size());
  out.attention_mask.reserve(input.attention_mask.size());
  for (std::size_t b = 0; b < input.input_ids.size(); ++b) {
    const auto& mask = input.attention_mask.at(b);
    std::size_t len = mask.size();
    while (len > 1 && !mask[len - 1]) --len;
    out.input_ids.emplace_back(input.input_ids[b].begin(),
                               input.input_ids[b].begin() + static_cast<std::ptrdiff_t>(len));
    out.attention_mask.emplace_back(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(len));
  }
  return out;
}

HiddenStates forward(const ModelParameters& params, const EncoderConfig& config,
                     const EncoderInput& input, const ForwardOptions& options,
                     ForwardTrace* trace) {
  return to_hidden(run_forward(params, config, input, options, trace, false));
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

Matrix softmax_rows(const Matrix& logits) { return log_softmax_rows(logits).array().exp(); }

Matrix mlm_logits(const HiddenStates& hidden, const ModelParameters& params,
                  const TokenMatrix& mlm_labels) {
  const auto rows = labeled_rows(hidden.offsets, hidden.lengths, mlm_labels,
                                 static_cast<std::size_t>(params.mlm_w.cols()));
  Matrix logits = gather_rows(hidden.states, rows.rows) * params.mlm_w;
  logits.rowwise() += params.mlm_b;
  return logits;
}

NllSum mlm_nll(const HiddenStates& hidden, const ModelParameters& params,
               const TokenMatrix& mlm_labels) {
  const auto rows = labeled_rows(hidden.offsets, hidden.lengths, mlm_labels,
                                 static_cast<std::size_t>(params.mlm_w.cols()));
  NllSum sum;
  if (rows.rows.empty()) return sum;
  Matrix logits = gather_rows(hidden.states, rows.rows) * params.mlm_w;
  logits.rowwise() += params.mlm_b;
  const Matrix logp = log_softmax_rows(logits);
  for (std::size_t i = 0; i < rows.targets.size(); ++i) sum.total -= logp(idx(i), rows.targets[i]);
  sum.count = rows.targets.size();
  return sum;
}

double mlm_loss(const HiddenStates& hidden, const ModelParameters& params,
                const TokenMatrix& mlm_labels) {
  const NllSum sum = mlm_nll(hidden, params, mlm_labels);
  if (sum.count == 0) throw DataError("no labeled MLM positions in batch");
  return sum.mean();
}

Matrix classify(const HiddenStates& hidden, const ModelParameters& params) {
  if (params.classifier_w.cols() == 0) throw InvalidArgument("model has no classification head");
  Matrix cls(idx(hidden.batch_size()), hidden.states.cols());
  for (std::size_t b = 0; b < hidden.batch_size(); ++b) {
    cls.row(idx(b)) = hidden.states.row(idx(hidden.offsets[b]));
  }
  Matrix logits = cls * params.classifier_w;
  logits.rowwise() += params.classifier_b;
  return logits;
}

double classification_loss(const Matrix& logits, std::span<const std::size_t> labels) {
  check_class_labels(labels, static_cast<std::size_t>(logits.rows()),
                     static_cast<std::size_t>(logits.cols()));
  if (labels.empty()) throw InvalidArgument("classification_loss on empty batch");
  return cross_entropy(logits, std::vector<std::size_t>(labels.begin(), labels.end()), nullptr);
}

LossGradients backward(const ModelParameters& params, const EncoderConfig& config,
                       const EncoderInput& input, const LossTarget& target,
                       const ForwardOptions& options) {
  const ForwardCache cache = run_forward(params, config, input, options, nullptr, true);
  LossGradients result;
  result.gradients = ModelParameters::zeros(config);
  ModelParameters& grads = result.gradients;
  Matrix dout = Matrix::Zero(cache.output.rows(), cache.output.cols());

  if (const auto* mlm = std::get_if<MlmTarget>(&target)) {
    const auto rows = labeled_rows(cache.offsets, cache.lengths, mlm->labels, config.vocab_size);
    if (rows.rows.empty()) throw DataError("no labeled MLM positions in batch");
    const Matrix h = gather_rows(cache.output, rows.rows);
    Matrix logits = h * params.mlm_w;
    logits.rowwise() += params.mlm_b;
    std::vector<std::size_t> targets(rows.targets.begin(), rows.targets.end());
    Matrix dlogits;
    result.loss = cross_entropy(logits, targets, &dlogits);
    grads.mlm_w.noalias() += h.transpose() * dlogits;
    grads.mlm_b += dlogits.colwise().sum();
    const Matrix dh = dlogits * params.mlm_w.transpose();
    for (std::size_t i = 0; i < rows.rows.size(); ++i) dout.row(rows.rows[i]) += dh.row(idx(i));
  } else {
    const auto& labels = std::get<ClassTarget>(target).labels;
    check_class_labels(labels, input.batch_size(), static_cast<std::size_t>(params.classifier_w.cols()));
    Matrix cls(idx(input.batch_size()), cache.output.cols());
    for (std::size_t b = 0; b < input.batch_size(); ++b) {
      cls.row(idx(b)) = cache.output.row(idx(cache.offsets[b]));
    }
    Matrix logits = cls * params.classifier_w;
    logits.rowwise() += params.classifier_b;
    Matrix dlogits;
    result.loss = cross_entropy(logits, labels, &dlogits);
    grads.classifier_w.resize(params.classifier_w.rows(), params.classifier_w.cols());
    grads.classifier_w.noalias() = cls.transpose() * dlogits;
    grads.classifier_b = dlogits.colwise().sum();
    const Matrix dcls = dlogits * params.classifier_w.transpose();
    for (std::size_t b = 0; b < input.batch_size(); ++b) {
      dout.row(idx(cache.offsets[b])) += dcls.row(idx(b));
    }
  }
  backprop_layers(params, config, cache, std::move(dout), grads);
  return result;
}

double compute_loss(const ModelParameters& params, const EncoderConfig& config,
                    const EncoderInput& input, const LossTarget& target,
                    const ForwardOptions& options) {
  const HiddenStates hidden = forward(params, config, input, options);
  if (const auto* mlm = std::get_if<MlmTarget>(&target)) {
    return mlm_loss(hidden, params, mlm->labels);
  }
  return classification_loss(classify(hidden, params), std::get<ClassTarget>(target).labels);
}

}  // namespace logrep
