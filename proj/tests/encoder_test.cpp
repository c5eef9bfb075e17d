#include <gtest/gtest.h>

#include <cmath>

#include "layerscope/encoder.hpp"
#include "layerscope/error.hpp"

using namespace layerscope;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.n_layers = 4;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.vocab_size = 12;
  c.max_len = 10;
  c.n_classes = 3;
  c.init_std = 0.3;
  c.embedding_init_std = 0.5;
  c.seed = 17;
  return c;
}

EncodedInput make_input(std::vector<std::uint32_t> ids, std::size_t question_len) {
  EncodedInput in;
  in.token_ids = std::move(ids);
  for (std::size_t i = 0; i < in.token_ids.size(); ++i) {
    in.segment_ids.push_back(i <= question_len ? 0 : 1);
    in.attention_mask.push_back(1);
    in.roles.push_back(i == 0 ? TokenRole::special : (i <= question_len ? TokenRole::question : TokenRole::context));
  }
  return in;
}

std::vector<std::span<double>> param_blocks(Parameters& p) {
  std::vector<std::span<double>> out;
  p.for_each([&](const std::string&, Tensor& t) { out.push_back(t.values()); });
  return out;
}

std::vector<std::span<const double>> const_blocks(Parameters& p) {
  std::vector<std::span<const double>> out;
  p.for_each([&](const std::string&, Tensor& t) { out.emplace_back(t.values()); });
  return out;
}

double model_grad_check(Model& model, const EncodedInput& input, const Target& target, std::uint64_t dropout_seed,
                        std::size_t max_coords = 0) {
  Parameters grads = Parameters::zeros(model.config());
  Rng r0(dropout_seed);
  loss_and_gradient(model, input, target, grads, dropout_seed ? &r0 : nullptr);
  auto loss_fn = [&] {
    Parameters scratch = Parameters::zeros(model.config());
    Rng r(dropout_seed);
    return loss_and_gradient(model, input, target, scratch, dropout_seed ? &r : nullptr);
  };
  GradCheckOptions opts;
  opts.max_coords_per_block = max_coords;
  return grad_check(loss_fn, param_blocks(model.parameters()), const_blocks(grads), opts);
}

}  // namespace

TEST(Forward, TraceShapeContract) {
  Model model(small_config());
  auto input = make_input({1, 2, 3, 4, 5, 6}, 2);
  auto trace = forward_with_trace(model, input);
  ASSERT_EQ(trace.n_layers(), 5u);
  for (const auto& layer : trace.layers) {
    EXPECT_EQ(layer.rows(), 6u);
    EXPECT_EQ(layer.cols(), 8u);
    EXPECT_TRUE(layer.all_finite());
  }
}

TEST(Forward, LayerZeroIsEmbeddingSum) {
  Model model(small_config());
  auto input = make_input({3, 1, 4, 1, 5}, 1);
  auto trace = forward_with_trace(model, input);
  const auto& p = model.parameters();
  for (std::size_t i = 0; i < input.length(); ++i) {
    for (std::size_t c = 0; c < 8; ++c) {
      const double expected = p.token_embedding(input.token_ids[i], c) + p.position_embedding(i, c) +
                              p.segment_embedding(input.segment_ids[i], c);
      EXPECT_DOUBLE_EQ(trace.layers[0](i, c), expected);
    }
  }
}

TEST(Forward, AttentionRowsAreDistributionsOverUnmaskedPositions) {
  Model model(small_config());
  auto input = make_input({1, 2, 3, 4}, 1).padded_to(7, 0);
  auto trace = forward_with_trace(model, input);
  for (std::size_t b = 0; b < 4; ++b) {
    for (const auto& w : attention_weights(model, trace, b)) {
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < w.cols(); ++c) {
          if (!input.attention_mask[c]) EXPECT_EQ(w(r, c), 0.0);
          sum += w(r, c);
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
      }
    }
  }
}

TEST(Forward, PaddingDoesNotChangeRealRows) {
  Model model(small_config());
  auto input = make_input({7, 2, 9, 4, 5}, 2);
  auto plain = forward_with_trace(model, input);
  auto padded = forward_with_trace(model, input.padded_to(10, 0));
  auto stripped = padded.without_padding();
  ASSERT_EQ(stripped.seq_len(), 5u);
  for (std::size_t n = 0; n < plain.n_layers(); ++n) {
    EXPECT_LE(max_abs_diff(plain.layers[n], stripped.layers[n]), 1e-9) << "layer " << n;
  }
  EXPECT_EQ(stripped.input, input);
}

TEST(Forward, DeterministicWithDropoutZero) {
  Model a(small_config());
  Model b(small_config());
  auto input = make_input({1, 2, 3, 4, 5, 6}, 2);
  auto ta = forward_with_trace(a, input);
  auto tb = forward_with_trace(b, input);
  for (std::size_t n = 0; n < ta.n_layers(); ++n) EXPECT_EQ(ta.layers[n], tb.layers[n]);
}

TEST(Forward, Errors) {
  Model model(small_config());
  EXPECT_THROW(forward_with_trace(model, make_input(std::vector<std::uint32_t>(11, 1), 2)), LengthError);
  EXPECT_THROW(forward_with_trace(model, make_input({1, 2, 12}, 1)), VocabError);
  auto bad_mask = make_input({1, 2, 3}, 1);
  bad_mask.attention_mask[2] = 0;
  EXPECT_THROW(forward_with_trace(model, bad_mask), FormatError);
}

TEST(SpanHead, ProbabilitiesSumToOneOverRealTokens) {
  Model model(small_config());
  auto input = make_input({1, 2, 3, 4, 5}, 1).padded_to(8, 0);
  auto pred = span_head(model, forward_with_trace(model, input));
  double s = 0, e = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    s += pred.start_probs[i];
    e += pred.end_probs[i];
    if (!input.attention_mask[i]) {
      EXPECT_EQ(pred.start_probs[i], 0.0);
      EXPECT_EQ(pred.end_probs[i], 0.0);
    }
  }
  EXPECT_NEAR(s, 1.0, 1e-9);
  EXPECT_NEAR(e, 1.0, 1e-9);
  EXPECT_LE(pred.start, pred.end);
}

TEST(SpanHead, OneHotLogitsSelectThatSpan) {
  const std::vector<std::uint8_t> valid(6, 1);
  std::vector<double> start(6, 0.0), end(6, 0.0);
  start[2] = 1.0;
  end[4] = 1.0;
  EXPECT_EQ(best_span(start, end, valid), (std::pair<std::size_t, std::size_t>{2, 4}));
}

TEST(SpanHead, ConstrainedArgmaxMatchesBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng.index(20);
    std::vector<double> start(n), end(n);
    std::vector<std::uint8_t> valid(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      start[i] = rng.uniform();
      end[i] = rng.uniform();
      if (rng.uniform() < 0.2) valid[i] = 0;
    }
    valid[0] = 1;
    // brute force over every admissible pair
    double best = -1;
    std::pair<std::size_t, std::size_t> expected{0, 0};
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t e = 0; e < n; ++e) {
        if (e < s || e - s > 8 || !valid[s] || !valid[e]) continue;
        if (start[s] * end[e] > best) {
          best = start[s] * end[e];
          expected = {s, e};
        }
      }
    }
    EXPECT_EQ(best_span(start, end, valid, 8), expected);
  }
  // unconstrained best pair (3, 1) is inverted
  const std::vector<double> start{0.1, 0.05, 0.05, 0.8};
  const std::vector<double> end{0.05, 0.8, 0.1, 0.05};
  const std::vector<std::uint8_t> valid(4, 1);
  EXPECT_EQ(best_span(start, end, valid), (std::pair<std::size_t, std::size_t>{0, 1}));
}

TEST(ClassificationHead, Distribution) {
  Model model(small_config());
  auto trace = forward_with_trace(model, make_input({1, 2, 3}, 1));
  auto probs = seqclass_head(model, trace, 3);
  double s = 0;
  for (double p : probs) s += p;
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_THROW(seqclass_head(model, trace, 4), DimensionError);
}

TEST(ClassificationHead, ZeroWeightsGiveUniform) {
  Model model(small_config());
  model.parameters().class_weight.fill(0.0);
  model.parameters().class_bias.fill(0.0);
  auto probs = seqclass_head(model, forward_with_trace(model, make_input({1, 2, 3}, 1)), 3);
  for (double p : probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(ClassificationHead, ArgmaxInvariantUnderLogitShift) {
  Model model(small_config());
  auto trace = forward_with_trace(model, make_input({1, 2, 3, 5}, 1));
  auto before = seqclass_head(model, trace, 3);
  for (auto& b : model.parameters().class_bias.values()) b += 7.5;
  auto after = seqclass_head(model, trace, 3);
  EXPECT_EQ(std::max_element(before.begin(), before.end()) - before.begin(),
            std::max_element(after.begin(), after.end()) - after.begin());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(before[i], after[i], 1e-12);
}

TEST(Backward, FullModelClassificationGradient) {
  Model model(small_config());
  auto input = make_input({1, 2, 3, 4, 5, 6}, 2);
  Target t{HeadKind::classification, 2, 0, 0};
  EXPECT_LE(model_grad_check(model, input, t, 0), 1e-4);
}

TEST(Backward, FullModelSpanGradientWithPadding) {
  Model model(small_config());
  auto input = make_input({1, 2, 3, 4, 5, 6}, 2).padded_to(8, 0);
  Target t{HeadKind::span, 0, 3, 4};
  EXPECT_LE(model_grad_check(model, input, t, 0), 1e-4);
}

TEST(Backward, GradientWithDropoutMaskHeldFixed) {
  auto config = small_config();
  config.dropout_rate = 0.2;
  Model model(config);
  auto input = make_input({1, 2, 3, 4, 5, 6}, 2);
  Target t{HeadKind::classification, 1, 0, 0};
  EXPECT_LE(model_grad_check(model, input, t, 99), 1e-4);
}

TEST(Backward, ZeroLossGradientGivesZeroParameterGradients) {
  Model model(small_config());
  auto input = make_input({1, 2, 3, 4}, 1);
  ForwardCache cache;
  auto trace = forward_with_trace(model, input, cache, nullptr);
  Parameters grads = Parameters::zeros(model.config());
  backward(model, trace, cache, Tensor(trace.layers.back().shape()), grads);
  grads.for_each([](const std::string& name, const Tensor& g) {
    for (double v : g.values()) ASSERT_EQ(v, 0.0) << name;
  });
}

TEST(Backward, AbsentTokensGetNoEmbeddingGradient) {
  Model model(small_config());
  auto input = make_input({1, 2, 3, 4}, 1);
  Parameters grads = Parameters::zeros(model.config());
  loss_and_gradient(model, input, Target{HeadKind::classification, 0, 0, 0}, grads);
  for (std::uint32_t tok = 0; tok < 12; ++tok) {
    const bool present = tok >= 1 && tok <= 4;
    double norm = 0;
    for (double v : grads.token_embedding.row(tok)) norm += std::abs(v);
    if (present) {
      EXPECT_GT(norm, 0.0) << tok;
    } else {
      EXPECT_EQ(norm, 0.0) << tok;
    }
  }
}

TEST(Backward, BitDeterministic) {
  Model model(small_config());
  auto input = make_input({1, 2, 3, 4, 5}, 1);
  Parameters g1 = Parameters::zeros(model.config()), g2 = Parameters::zeros(model.config());
  loss_and_gradient(model, input, Target{HeadKind::span, 0, 2, 3}, g1);
  loss_and_gradient(model, input, Target{HeadKind::span, 0, 2, 3}, g2);
  std::vector<Tensor> a, b;
  g1.for_each([&](const std::string&, const Tensor& t) { a.push_back(t); });
  g2.for_each([&](const std::string&, const Tensor& t) { b.push_back(t); });
  EXPECT_EQ(a, b);
}

TEST(ModelConfig, Validation) {
  auto c = small_config();
  c.n_heads = 3;
  EXPECT_THROW(Model{c}, ParameterError);
  c = small_config();
  c.n_layers = 0;
  EXPECT_THROW(Model{c}, ParameterError);
}
