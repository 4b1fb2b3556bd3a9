#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gradient_check.hpp"
#include "logrep/encoder.hpp"
#include "logrep/error.hpp"
#include "logrep/rng.hpp"
#include "naive_encoder.hpp"

using namespace logrep;

namespace {

EncoderConfig small_config(std::size_t layers, std::size_t heads, std::size_t hidden, std::size_t vocab) {
  EncoderConfig c;
  c.num_layers = layers;
  c.num_heads = heads;
  c.hidden_size = hidden;
  c.ff_size = 2 * hidden;
  c.vocab_size = vocab;
  c.max_seq = 8;
  c.dropout_prob = 0.1;
  return c;
}

// Scales every parameter away from init so layer norms and biases matter.
void perturb(ModelParameters& p, double amount, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& v : parameter_views(p)) {
    for (double& x : v.values) x += amount * (2.0 * rng.uniform() - 1.0);
  }
}

EncoderInput ragged_batch() {
  EncoderInput in;
  in.input_ids = {{2, 5, 6, 3, 0}, {2, 7, 3}, {2, 8, 9, 10, 3}};
  in.attention_mask = {{1, 1, 1, 1, 0}, {1, 1, 1}, {1, 1, 1, 1, 1}};
  return in;
}

}  // namespace

TEST_CASE("init: determinism, scales, spread") {
  const EncoderConfig c = EncoderConfig::tiny(300);
  const ModelParameters a = init_params(c, 5);
  const ModelParameters b = init_params(c, 5);
  const auto va = parameter_views(a), vb = parameter_views(b);
  REQUIRE(va.size() == vb.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    CHECK(std::equal(va[i].values.begin(), va[i].values.end(), vb[i].values.begin()));
    if (va[i].name.ends_with(".scale")) {
      for (double x : va[i].values) CHECK(x == 1.0);
    }
    if (va[i].name.ends_with(".shift") || va[i].name.ends_with(".bias")) {
      for (double x : va[i].values) CHECK(x == 0.0);
    }
  }
  const auto& emb = a.token_embedding;
  const double mean = emb.mean();
  const double sd = std::sqrt((emb.array() - mean).square().sum() / static_cast<double>(emb.size() - 1));
  // Truncation at two standard deviations shrinks the spread by about 12%.
  CHECK(std::abs(sd - 0.02) <= 0.2 * 0.02);
  CHECK(emb.cwiseAbs().maxCoeff() <= 0.04);
  CHECK(a.all_finite());
}

TEST_CASE("config validation") {
  EncoderConfig c = EncoderConfig::tiny(50);
  CHECK_NOTHROW(c.validate());
  c.num_heads = 3;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = EncoderConfig::base(50);
  CHECK(c.num_layers == 12);
  CHECK(c.hidden_size == 768);
  c.dropout_prob = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("forward: hand model with one layer, one head, hidden 4") {
  EncoderConfig c = small_config(1, 1, 4, 7);
  ModelParameters p = init_params(c, 3);
  perturb(p, 0.5, 17);
  EncoderInput in;
  in.input_ids = {{2, 5, 3}};
  in.attention_mask = {{1, 1, 1}};
  const HiddenStates hs = forward(p, c, in);
  const auto ref = testing::naive_forward(p, c, in.input_ids[0], in.attention_mask[0]);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(hs.states(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - ref[i][j]) < 1e-10);
    }
  }
}

TEST_CASE("forward: multi-head ragged batch against reference") {
  EncoderConfig c = small_config(2, 2, 8, 12);
  ModelParameters p = init_params(c, 1);
  perturb(p, 0.3, 2);
  const EncoderInput in = ragged_batch();
  const HiddenStates hs = forward(p, c, in);
  for (std::size_t b = 0; b < in.batch_size(); ++b) {
    const auto ref = testing::naive_forward(p, c, in.input_ids[b], in.attention_mask[b]);
    const auto seq = hs.sequence(b);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (!in.attention_mask[b][i]) continue;
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(std::abs(seq(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - ref[i][j]) < 1e-10);
      }
    }
  }
}

TEST_CASE("forward: attention rows, padding, layer norm, determinism") {
  EncoderConfig c = small_config(2, 2, 8, 12);
  ModelParameters p = init_params(c, 4);
  perturb(p, 0.3, 5);
  EncoderInput in = ragged_batch();
  ForwardTrace trace;
  const HiddenStates hs = forward(p, c, in, {}, &trace);
  for (const auto& layer : trace.attention) {
    for (std::size_t b = 0; b < layer.size(); ++b) {
      for (const auto& probs : layer[b]) {
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
          CHECK(std::abs(probs.row(r).sum() - 1.0) < 1e-6);
          for (Eigen::Index k = 0; k < probs.cols(); ++k) {
            if (!in.attention_mask[b][static_cast<std::size_t>(k)]) CHECK(probs(r, k) == 0.0);
          }
        }
      }
    }
  }

  // Changing what sits in padded positions must not change real outputs.
  EncoderInput alt = in;
  alt.input_ids[0][4] = 11;
  const HiddenStates hs2 = forward(p, c, alt);
  CHECK((hs.sequence(0).topRows(4) - hs2.sequence(0).topRows(4)).cwiseAbs().maxCoeff() < 1e-12);
  const HiddenStates trimmed = forward(p, c, trim_padding(in));
  CHECK((hs.sequence(0).topRows(4) - trimmed.sequence(0)).cwiseAbs().maxCoeff() < 1e-12);

  // With unit scale and zero shift, outputs are the normalized vectors.
  ModelParameters plain = p;
  for (auto& L : plain.layers) {
    L.ff_norm_scale.setOnes();
    L.ff_norm_shift.setZero();
  }
  const HiddenStates normed = forward(plain, c, in);
  for (Eigen::Index r = 0; r < normed.states.rows(); ++r) {
    const double mu = normed.states.row(r).mean();
    const double var = (normed.states.row(r).array() - mu).square().mean();
    CHECK(std::abs(mu) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }

  const HiddenStates again = forward(p, c, in);
  CHECK(again.states == hs.states);
  const HiddenStates d1 = forward(p, c, in, {true, 9});
  const HiddenStates d2 = forward(p, c, in, {true, 9});
  CHECK(d1.states == d2.states);
  CHECK(d1.states != hs.states);

  EncoderInput bad = in;
  bad.input_ids[1][1] = 99;
  CHECK_THROWS_AS(forward(p, c, bad), InvalidArgument);
}

TEST_CASE("mlm loss: analytic cases and brute force") {
  EncoderConfig c = small_config(1, 2, 8, 100);
  ModelParameters p = init_params(c, 8);
  EncoderInput in;
  in.input_ids = {{2, 10, 11, 3}};
  in.attention_mask = {{1, 1, 1, 1}};
  const TokenMatrix labels{{kIgnoreLabel, 40, 41, kIgnoreLabel}};
  ModelParameters uniform = p;
  uniform.mlm_w.setZero();
  uniform.mlm_b.setZero();
  CHECK(mlm_loss(forward(uniform, c, in), uniform, labels) == doctest::Approx(std::log(100.0)).epsilon(1e-12));

  ModelParameters sure = uniform;
  sure.mlm_b(40) = sure.mlm_b(41) = 1e3;
  const double confident = mlm_loss(forward(sure, c, in), sure, labels);
  CHECK(confident == doctest::Approx(std::log(2.0)));
  ModelParameters exact = uniform;
  exact.mlm_b(40) = 1e3;
  const TokenMatrix only40{{kIgnoreLabel, 40, kIgnoreLabel, kIgnoreLabel}};
  CHECK(mlm_loss(forward(exact, c, in), exact, only40) < 1e-300);

  perturb(p, 0.2, 9);
  const double lib = mlm_loss(forward(p, c, in), p, labels);
  CHECK(std::abs(lib - testing::naive_mlm_loss(p, c, in, labels)) < 1e-10);

  const TokenMatrix none{{kIgnoreLabel, kIgnoreLabel, kIgnoreLabel, kIgnoreLabel}};
  CHECK_THROWS_AS(mlm_loss(forward(p, c, in), p, none), DataError);
}

TEST_CASE("classification head") {
  EncoderConfig c = small_config(1, 2, 8, 12);
  ModelParameters p = init_params(c, 10);
  attach_classifier(p, c, 5, 11);
  CHECK(c.num_classes == 5);
  const EncoderInput in = ragged_batch();
  const std::vector<std::size_t> labels{0, 3, 4};

  ModelParameters zero = p;
  zero.classifier_w.setZero();
  zero.classifier_b.setZero();
  const Matrix z = classify(forward(zero, c, in), zero);
  const Matrix probs = softmax_rows(z);
  CHECK((probs.array() - 0.2).abs().maxCoeff() < 1e-15);
  CHECK(classification_loss(z, labels) == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  perturb(p, 0.3, 12);
  const Matrix logits = classify(forward(p, c, in), p);
  const Matrix pr = softmax_rows(logits);
  for (Eigen::Index r = 0; r < pr.rows(); ++r) CHECK(std::abs(pr.row(r).sum() - 1.0) < 1e-6);
  Matrix shifted = logits.array() + 123.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index a = 0, b = 0;
    logits.row(r).maxCoeff(&a);
    shifted.row(r).maxCoeff(&b);
    CHECK(a == b);
  }
  CHECK(std::abs(classification_loss(logits, labels) - testing::naive_class_loss(p, c, in, labels)) < 1e-10);

  Matrix confident = Matrix::Zero(3, 5);
  for (std::size_t i = 0; i < 3; ++i) confident(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) = 50.0;
  CHECK(classification_loss(confident, labels) < 1e-20);
  CHECK_THROWS_AS(classification_loss(logits, std::vector<std::size_t>{0, 1, 5}), InvalidArgument);
}

TEST_CASE("backward: finite differences, both losses, with dropout") {
  EncoderConfig c = small_config(2, 2, 8, 11);
  ModelParameters p = init_params(c, 7);
  attach_classifier(p, c, 3, 9);
  perturb(p, 0.3, 13);
  const EncoderInput in = ragged_batch();
  const ForwardOptions opts{true, 42};
  const LossTarget mlm = MlmTarget{{{kIgnoreLabel, 8, kIgnoreLabel, 6, kIgnoreLabel},
                                    {kIgnoreLabel, 9, 4},
                                    {kIgnoreLabel, 1, kIgnoreLabel, 10, kIgnoreLabel}}};
  const LossTarget cls = ClassTarget{{1, 2, 0}};
  for (const LossTarget* t : {&mlm, &cls}) {
    const auto r = testing::finite_difference_check(p, c, in, *t, opts);
    INFO("worst " << r.worst << " at " << r.worst_name << "[" << r.worst_index << "]");
    CHECK(r.worst < 1e-4);
    CHECK(r.checked == p.parameter_count());
  }
}

TEST_CASE("backward: unused heads get zero gradient, descent lowers loss") {
  EncoderConfig c = small_config(2, 2, 8, 11);
  ModelParameters p = init_params(c, 21);
  attach_classifier(p, c, 3, 22);
  const EncoderInput in = ragged_batch();
  const LossTarget mlm = MlmTarget{{{kIgnoreLabel, 8, kIgnoreLabel, 6, kIgnoreLabel},
                                    {kIgnoreLabel, 9, 4},
                                    {kIgnoreLabel, 1, kIgnoreLabel, 10, kIgnoreLabel}}};
  const LossGradients g = backward(p, c, in, mlm);
  CHECK(g.gradients.classifier_w.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.gradients.classifier_b.cwiseAbs().maxCoeff() == 0.0);
  const LossGradients gc = backward(p, c, in, ClassTarget{{1, 2, 0}});
  CHECK(gc.gradients.mlm_w.cwiseAbs().maxCoeff() == 0.0);

  ModelParameters stepped = p;
  auto pv = parameter_views(stepped);
  const auto gv = parameter_views(g.gradients);
  for (std::size_t i = 0; i < pv.size(); ++i) {
    for (std::size_t j = 0; j < pv[i].values.size(); ++j) pv[i].values[j] -= 1e-2 * gv[i].values[j];
  }
  CHECK(compute_loss(stepped, c, in, mlm) < g.loss);
  CHECK(g.loss == compute_loss(p, c, in, mlm));
}

TEST_CASE("gelu reference values") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(gelu(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
}
