#include "layerscope/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "layerscope/error.hpp"

namespace layerscope {

void ModelConfig::validate() const {
  if (n_layers < 1) throw ParameterError("n_layers must be >= 1");
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
    throw ParameterError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                         std::to_string(n_heads) + ")");
  }
  if (d_ff < 1) throw ParameterError("d_ff must be >= 1");
  if (vocab_size < 1) throw ParameterError("vocab_size must be >= 1");
  if (max_len < 1) throw ParameterError("max_len must be >= 1");
  if (n_segments < 1) throw ParameterError("n_segments must be >= 1");
  if (n_classes < 1) throw ParameterError("n_classes must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("dropout_rate must be in [0,1)");
}

std::string to_string(TokenRole role) {
  switch (role) {
    case TokenRole::question: return "question";
    case TokenRole::context: return "context";
    case TokenRole::answer: return "answer";
    case TokenRole::supporting_fact: return "supporting-fact";
    case TokenRole::special: return "special";
    case TokenRole::pad: return "pad";
  }
  return "pad";
}

TokenRole token_role_from_string(const std::string& s) {
  for (auto r : {TokenRole::question, TokenRole::context, TokenRole::answer, TokenRole::supporting_fact,
                 TokenRole::special, TokenRole::pad}) {
    if (to_string(r) == s) return r;
  }
  throw FormatError("unknown token role '" + s + "'");
}

std::string to_string(HeadKind head) { return head == HeadKind::span ? "span" : "classification"; }

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "span") return HeadKind::span;
  if (s == "classification") return HeadKind::classification;
  throw ParameterError("unknown head '" + s + "' (expected span|classification)");
}

// ---------------------------------------------------------------- inputs

std::size_t EncodedInput::valid_length() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

void EncodedInput::validate(const ModelConfig& config) const {
  const std::size_t n = token_ids.size();
  if (segment_ids.size() != n || attention_mask.size() != n || roles.size() != n) {
    throw FormatError("encoded input sequences differ in length");
  }
  if (n == 0) throw LengthError("encoded input is empty");
  if (n > config.max_len) {
    throw LengthError("input length " + std::to_string(n) + " exceeds max_len " +
                      std::to_string(config.max_len));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (token_ids[i] >= config.vocab_size) {
      throw VocabError("token id " + std::to_string(token_ids[i]) + " at position " + std::to_string(i) +
                       " outside vocabulary of size " + std::to_string(config.vocab_size));
    }
    if (segment_ids[i] >= config.n_segments) {
      throw FormatError("segment id " + std::to_string(segment_ids[i]) + " out of range");
    }
    if ((attention_mask[i] == 0) != (roles[i] == TokenRole::pad) || attention_mask[i] > 1) {
      throw FormatError("attention mask must be 0 exactly on pad positions (position " +
                        std::to_string(i) + ")");
    }
  }
  if (valid_length() == 0) throw LengthError("encoded input has no non-pad tokens");
}

EncodedInput EncodedInput::padded_to(std::size_t length, std::uint32_t pad_id) const {
  EncodedInput out = *this;
  while (out.length() < length) {
    out.token_ids.push_back(pad_id);
    out.segment_ids.push_back(0);
    out.attention_mask.push_back(0);
    out.roles.push_back(TokenRole::pad);
  }
  return out;
}

HiddenStateTrace HiddenStateTrace::without_padding() const {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < input.length(); ++i) {
    if (input.attention_mask[i]) keep.push_back(i);
  }
  HiddenStateTrace out;
  for (std::size_t i : keep) {
    out.input.token_ids.push_back(input.token_ids[i]);
    out.input.segment_ids.push_back(input.segment_ids[i]);
    out.input.attention_mask.push_back(1);
    out.input.roles.push_back(input.roles[i]);
  }
  for (const auto& layer : layers) {
    Tensor t({keep.size(), layer.cols()});
    for (std::size_t r = 0; r < keep.size(); ++r) {
      std::copy_n(layer.row(keep[r]).begin(), layer.cols(), t.row(r).begin());
    }
    out.layers.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------- parameters

Parameters Parameters::zeros(const ModelConfig& c) {
  Parameters p;
  const std::size_t d = c.d_model;
  p.token_embedding = Tensor({c.vocab_size, d});
  p.position_embedding = Tensor({c.max_len, d});
  p.segment_embedding = Tensor({c.n_segments, d});
  p.blocks.resize(c.n_layers);
  for (auto& b : p.blocks) {
    b.query_weight = Tensor({d, d});
    b.query_bias = Tensor({d});
    b.key_weight = Tensor({d, d});
    b.key_bias = Tensor({d});
    b.value_weight = Tensor({d, d});
    b.value_bias = Tensor({d});
    b.output_weight = Tensor({d, d});
    b.output_bias = Tensor({d});
    b.attention_norm_gain = Tensor({d});
    b.attention_norm_bias = Tensor({d});
    b.ff_in_weight = Tensor({d, c.d_ff});
    b.ff_in_bias = Tensor({c.d_ff});
    b.ff_out_weight = Tensor({c.d_ff, d});
    b.ff_out_bias = Tensor({d});
    b.ff_norm_gain = Tensor({d});
    b.ff_norm_bias = Tensor({d});
  }
  p.span_weight = Tensor({d, 2});
  p.span_bias = Tensor({2});
  p.class_weight = Tensor({d, c.n_classes});
  p.class_bias = Tensor({c.n_classes});
  return p;
}

namespace {

template <typename Self, typename Fn>
void visit_parameters(Self& p, Fn&& fn) {
  fn("embeddings.token", p.token_embedding);
  fn("embeddings.position", p.position_embedding);
  fn("embeddings.segment", p.segment_embedding);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string prefix = "block" + std::to_string(i) + ".";
    fn(prefix + "attention.query.weight", b.query_weight);
    fn(prefix + "attention.query.bias", b.query_bias);
    fn(prefix + "attention.key.weight", b.key_weight);
    fn(prefix + "attention.key.bias", b.key_bias);
    fn(prefix + "attention.value.weight", b.value_weight);
    fn(prefix + "attention.value.bias", b.value_bias);
    fn(prefix + "attention.output.weight", b.output_weight);
    fn(prefix + "attention.output.bias", b.output_bias);
    fn(prefix + "attention.norm.gain", b.attention_norm_gain);
    fn(prefix + "attention.norm.bias", b.attention_norm_bias);
    fn(prefix + "ff.in.weight", b.ff_in_weight);
    fn(prefix + "ff.in.bias", b.ff_in_bias);
    fn(prefix + "ff.out.weight", b.ff_out_weight);
    fn(prefix + "ff.out.bias", b.ff_out_bias);
    fn(prefix + "ff.norm.gain", b.ff_norm_gain);
    fn(prefix + "ff.norm.bias", b.ff_norm_bias);
  }
  fn("head.span.weight", p.span_weight);
  fn("head.span.bias", p.span_bias);
  fn("head.class.weight", p.class_weight);
  fn("head.class.bias", p.class_bias);
}

}  // namespace

void Parameters::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_parameters(*this, fn);
}

void Parameters::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_parameters(*this, fn);
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

void Parameters::zero() {
  for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  parameters_ = Parameters::zeros(config_);
  Rng rng(config_.seed);
  parameters_.for_each([&](const std::string& name, Tensor& t) {
    if (name.ends_with(".gain")) {
      t.fill(1.0);
    } else if (name.ends_with(".bias")) {
      t.fill(0.0);
    } else {
      const double std = name.starts_with("embeddings.") ? config_.embedding_init_std : config_.init_std;
      for (auto& v : t.values()) v = rng.normal(0.0, std);
    }
  });
}

Model::Model(ModelConfig config, Parameters parameters)
    : config_(std::move(config)), parameters_(std::move(parameters)) {
  config_.validate();
  Parameters expected = Parameters::zeros(config_);
  std::vector<std::vector<std::size_t>> shapes;
  expected.for_each([&](const std::string&, const Tensor& t) { shapes.push_back(t.shape()); });
  std::size_t i = 0;
  parameters_.for_each([&](const std::string& name, const Tensor& t) {
    if (i >= shapes.size() || t.shape() != shapes[i]) {
      throw DimensionError("parameter " + name + " has shape " + t.shape_string() + ", expected " +
                           (i < shapes.size() ? shape_string(shapes[i]) : std::string("none")));
    }
    ++i;
  });
  if (i != shapes.size()) throw DimensionError("parameter count does not match config");
}

std::uint64_t Model::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  parameters_.for_each([&](const std::string&, const Tensor& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  });
  return h;
}

// ---------------------------------------------------------------- forward

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  add_row_vector(y, b);
  return y;
}

Tensor head_columns(const Tensor& x, std::size_t head, std::size_t head_dim) {
  Tensor out({x.rows(), head_dim});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy_n(x.row(r).begin() + static_cast<std::ptrdiff_t>(head * head_dim), head_dim,
                out.row(r).begin());
  }
  return out;
}

void add_head_columns(Tensor& x, const Tensor& part, std::size_t head, std::size_t head_dim) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto dst = x.row(r).subspan(head * head_dim, head_dim);
    auto src = part.row(r);
    for (std::size_t c = 0; c < head_dim; ++c) dst[c] += src[c];
  }
}

Tensor embed(const Model& model, const EncodedInput& input) {
  const auto& p = model.parameters();
  const std::size_t d = model.config().d_model;
  Tensor x({input.length(), d});
  for (std::size_t i = 0; i < input.length(); ++i) {
    auto out = x.row(i);
    auto tok = p.token_embedding.row(input.token_ids[i]);
    auto pos = p.position_embedding.row(i);
    auto seg = p.segment_embedding.row(input.segment_ids[i]);
    for (std::size_t c = 0; c < d; ++c) out[c] = tok[c] + pos[c] + seg[c];
  }
  return x;
}

Tensor block_forward(const ModelConfig& config, const BlockParameters& b, const Tensor& x,
                     std::span<const std::uint8_t> mask, BlockCache& cache, Rng* rng) {
  const std::size_t heads = config.n_heads;
  const std::size_t head_dim = config.d_model / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const double rate = rng ? config.dropout_rate : 0.0;

  cache.input = x;
  cache.query = linear(x, b.query_weight, b.query_bias);
  cache.key = linear(x, b.key_weight, b.key_bias);
  cache.value = linear(x, b.value_weight, b.value_bias);
  cache.attention.resize(heads);
  cache.context = Tensor({x.rows(), config.d_model});
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor q = head_columns(cache.query, h, head_dim);
    Tensor k = head_columns(cache.key, h, head_dim);
    Tensor v = head_columns(cache.value, h, head_dim);
    Tensor scores = scale(matmul_nt(q, k), inv_sqrt);
    cache.attention[h] = softmax_rows(scores, mask);
    add_head_columns(cache.context, matmul(cache.attention[h], v), h, head_dim);
  }
  Tensor attn = linear(cache.context, b.output_weight, b.output_bias);
  Rng dummy(0);
  attn = dropout(attn, rate, rng ? *rng : dummy, &cache.attention_dropout);
  Tensor residual = add(x, attn);
  cache.attention_out = layer_norm(residual, b.attention_norm_gain, b.attention_norm_bias,
                                   config.layer_norm_eps, &cache.attention_norm);

  cache.ff_pre = linear(cache.attention_out, b.ff_in_weight, b.ff_in_bias);
  cache.ff_act = gelu(cache.ff_pre);
  Tensor ff = linear(cache.ff_act, b.ff_out_weight, b.ff_out_bias);
  ff = dropout(ff, rate, rng ? *rng : dummy, &cache.ff_dropout);
  Tensor residual2 = add(cache.attention_out, ff);
  return layer_norm(residual2, b.ff_norm_gain, b.ff_norm_bias, config.layer_norm_eps, &cache.ff_norm);
}

}  // namespace

HiddenStateTrace forward_with_trace(const Model& model, const EncodedInput& input) {
  ForwardCache cache;
  return forward_with_trace(model, input, cache, nullptr);
}

HiddenStateTrace forward_with_trace(const Model& model, const EncodedInput& input, ForwardCache& cache,
                                    Rng* dropout_rng) {
  const auto& config = model.config();
  input.validate(config);
  HiddenStateTrace trace;
  trace.input = input;
  trace.layers.reserve(config.n_layers + 1);

  Tensor x = embed(model, input);
  trace.layers.push_back(x);
  if (dropout_rng && config.dropout_rate > 0.0) {
    x = dropout(x, config.dropout_rate, *dropout_rng, &cache.embedding_dropout);
  } else {
    cache.embedding_dropout = Tensor();
  }
  cache.blocks.resize(config.n_layers);
  for (std::size_t n = 0; n < config.n_layers; ++n) {
    x = block_forward(config, model.parameters().blocks[n], x, input.attention_mask, cache.blocks[n],
                      dropout_rng);
    trace.layers.push_back(x);
  }
  return trace;
}

std::vector<Tensor> attention_weights(const Model& model, const HiddenStateTrace& trace,
                                      std::size_t block) {
  if (block >= model.config().n_layers) throw IndexError("block index out of range");
  BlockCache cache;
  block_forward(model.config(), model.parameters().blocks[block], trace.layers[block],
                trace.input.attention_mask, cache, nullptr);
  return cache.attention;
}

// ---------------------------------------------------------------- heads

namespace {

void check_trace(const Model& model, const HiddenStateTrace& trace) {
  if (trace.layers.size() != model.config().n_layers + 1) {
    throw DimensionError("trace has " + std::to_string(trace.layers.size()) + " layers, model expects " +
                         std::to_string(model.config().n_layers + 1));
  }
}

Tensor span_logits(const Model& model, const HiddenStateTrace& trace) {
  const auto& p = model.parameters();
  return linear(trace.layers.back(), p.span_weight, p.span_bias);
}

std::vector<double> column_softmax(const Tensor& logits, std::size_t col,
                                   std::span<const std::uint8_t> valid) {
  Tensor row({1, logits.rows()});
  for (std::size_t i = 0; i < logits.rows(); ++i) row[i] = logits(i, col);
  Tensor probs = softmax_rows(row, valid);
  return {probs.values().begin(), probs.values().end()};
}

std::vector<double> class_probs(const Model& model, const HiddenStateTrace& trace) {
  const auto& p = model.parameters();
  const auto cls = trace.layers.back().row(0);
  const std::size_t c = p.class_bias.size();
  Tensor logits({1, c});
  for (std::size_t j = 0; j < c; ++j) {
    double s = p.class_bias[j];
    for (std::size_t i = 0; i < cls.size(); ++i) s += cls[i] * p.class_weight(i, j);
    logits[j] = s;
  }
  Tensor probs = softmax_rows(logits);
  return {probs.values().begin(), probs.values().end()};
}

}  // namespace

std::pair<std::size_t, std::size_t> best_span(std::span<const double> start_probs,
                                              std::span<const double> end_probs,
                                              std::span<const std::uint8_t> valid, std::size_t span_cap) {
  const std::size_t n = start_probs.size();
  double best = -1.0;
  std::pair<std::size_t, std::size_t> span{0, 0};
  for (std::size_t s = 0; s < n; ++s) {
    if (!valid.empty() && !valid[s]) continue;
    for (std::size_t e = s; e < n && e - s <= span_cap; ++e) {
      if (!valid.empty() && !valid[e]) continue;
      const double score = start_probs[s] * end_probs[e];
      if (score > best) {
        best = score;
        span = {s, e};
      }
    }
  }
  return span;
}

SpanPrediction span_head(const Model& model, const HiddenStateTrace& trace, std::size_t span_cap) {
  check_trace(model, trace);
  Tensor logits = span_logits(model, trace);
  SpanPrediction pred;
  pred.start_probs = column_softmax(logits, 0, trace.input.attention_mask);
  pred.end_probs = column_softmax(logits, 1, trace.input.attention_mask);
  std::tie(pred.start, pred.end) =
      best_span(pred.start_probs, pred.end_probs, trace.input.attention_mask, span_cap);
  return pred;
}

std::vector<double> seqclass_head(const Model& model, const HiddenStateTrace& trace, std::size_t n_classes) {
  check_trace(model, trace);
  if (n_classes != model.config().n_classes) {
    throw DimensionError("classification head has " + std::to_string(model.config().n_classes) +
                         " classes, requested " + std::to_string(n_classes));
  }
  return class_probs(model, trace);
}

double head_loss(const Model& model, const HiddenStateTrace& trace, const Target& target) {
  check_trace(model, trace);
  if (target.head == HeadKind::classification) {
    return cross_entropy(class_probs(model, trace), target.label);
  }
  Tensor logits = span_logits(model, trace);
  const auto start = column_softmax(logits, 0, trace.input.attention_mask);
  const auto end = column_softmax(logits, 1, trace.input.attention_mask);
  return 0.5 * (cross_entropy(start, target.start) + cross_entropy(end, target.end));
}

Tensor head_backward(const Model& model, const HiddenStateTrace& trace, const Target& target,
                     Parameters& grads, double loss_scale) {
  check_trace(model, trace);
  const auto& p = model.parameters();
  const Tensor& last = trace.layers.back();
  Tensor d_final(last.shape());
  if (target.head == HeadKind::classification) {
    auto g = softmax_cross_entropy_grad(class_probs(model, trace), target.label);
    const auto cls = last.row(0);
    auto dcls = d_final.row(0);
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double gj = g[j] * loss_scale;
      grads.class_bias[j] += gj;
      for (std::size_t i = 0; i < cls.size(); ++i) {
        grads.class_weight(i, j) += cls[i] * gj;
        dcls[i] += p.class_weight(i, j) * gj;
      }
    }
    return d_final;
  }
  if (target.start >= last.rows() || target.end >= last.rows()) {
    throw IndexError("gold span outside the input");
  }
  Tensor logits = span_logits(model, trace);
  const auto start = column_softmax(logits, 0, trace.input.attention_mask);
  const auto end = column_softmax(logits, 1, trace.input.attention_mask);
  auto gs = softmax_cross_entropy_grad(start, target.start);
  auto ge = softmax_cross_entropy_grad(end, target.end);
  Tensor d_logits({last.rows(), 2});
  for (std::size_t i = 0; i < last.rows(); ++i) {
    if (!trace.input.attention_mask[i]) continue;
    d_logits(i, 0) = 0.5 * loss_scale * gs[i];
    d_logits(i, 1) = 0.5 * loss_scale * ge[i];
  }
  matmul_tn_acc(last, d_logits, grads.span_weight);
  sum_rows_acc(d_logits, grads.span_bias);
  return matmul_nt(d_logits, p.span_weight);
}

// ---------------------------------------------------------------- backward

namespace {

Tensor apply_mask(const Tensor& dy, const Tensor& mask) {
  if (mask.empty()) return dy;
  Tensor out = dy;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

// Gradient of y = x W + b: accumulates dW, db and returns dx.
Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db) {
  matmul_tn_acc(x, dy, dw);
  sum_rows_acc(dy, db);
  return matmul_nt(dy, w);
}

Tensor block_backward(const ModelConfig& config, const BlockParameters& b, const BlockCache& cache,
                      const Tensor& d_out, BlockParameters& g) {
  const std::size_t heads = config.n_heads;
  const std::size_t head_dim = config.d_model / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  // out = LN2(attention_out + dropout(ff_out))
  Tensor d_res2 = layer_norm_backward(d_out, b.ff_norm_gain, cache.ff_norm, g.ff_norm_gain, g.ff_norm_bias);
  Tensor d_ff = apply_mask(d_res2, cache.ff_dropout);
  Tensor d_act = linear_backward(cache.ff_act, b.ff_out_weight, d_ff, g.ff_out_weight, g.ff_out_bias);
  Tensor d_pre = gelu_backward(cache.ff_pre, d_act);
  Tensor d_attn_out =
      linear_backward(cache.attention_out, b.ff_in_weight, d_pre, g.ff_in_weight, g.ff_in_bias);
  add_inplace(d_attn_out, d_res2);

  // attention_out = LN1(x + dropout(attn))
  Tensor d_res1 = layer_norm_backward(d_attn_out, b.attention_norm_gain, cache.attention_norm,
                                      g.attention_norm_gain, g.attention_norm_bias);
  Tensor d_attn = apply_mask(d_res1, cache.attention_dropout);
  Tensor d_context =
      linear_backward(cache.context, b.output_weight, d_attn, g.output_weight, g.output_bias);

  Tensor d_query(cache.query.shape());
  Tensor d_key(cache.key.shape());
  Tensor d_value(cache.value.shape());
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor q = head_columns(cache.query, h, head_dim);
    Tensor k = head_columns(cache.key, h, head_dim);
    Tensor v = head_columns(cache.value, h, head_dim);
    Tensor dc = head_columns(d_context, h, head_dim);
    const Tensor& probs = cache.attention[h];
    Tensor d_probs = matmul_nt(dc, v);
    add_head_columns(d_value, matmul_tn(probs, dc), h, head_dim);
    Tensor d_scores = scale(softmax_rows_backward(probs, d_probs), inv_sqrt);
    add_head_columns(d_query, matmul(d_scores, k), h, head_dim);
    add_head_columns(d_key, matmul_tn(d_scores, q), h, head_dim);
  }
  Tensor dx = d_res1;
  add_inplace(dx, linear_backward(cache.input, b.query_weight, d_query, g.query_weight, g.query_bias));
  add_inplace(dx, linear_backward(cache.input, b.key_weight, d_key, g.key_weight, g.key_bias));
  add_inplace(dx, linear_backward(cache.input, b.value_weight, d_value, g.value_weight, g.value_bias));
  return dx;
}

}  // namespace

void backward(const Model& model, const HiddenStateTrace& trace, const ForwardCache& cache,
              const Tensor& d_final, Parameters& grads) {
  const auto& config = model.config();
  if (cache.blocks.size() != config.n_layers) throw DimensionError("forward cache does not match model");
  Tensor d = d_final;
  for (std::size_t n = config.n_layers; n-- > 0;) {
    d = block_backward(config, model.parameters().blocks[n], cache.blocks[n], d, grads.blocks[n]);
  }
  d = apply_mask(d, cache.embedding_dropout);
  const auto& input = trace.input;
  const std::size_t dm = config.d_model;
  for (std::size_t i = 0; i < input.length(); ++i) {
    auto src = d.row(i);
    auto tok = grads.token_embedding.row(input.token_ids[i]);
    auto pos = grads.position_embedding.row(i);
    auto seg = grads.segment_embedding.row(input.segment_ids[i]);
    for (std::size_t c = 0; c < dm; ++c) {
      tok[c] += src[c];
      pos[c] += src[c];
      seg[c] += src[c];
    }
  }
}

double loss(const Model& model, const EncodedInput& input, const Target& target) {
  return head_loss(model, forward_with_trace(model, input), target);
}

double loss_and_gradient(const Model& model, const EncodedInput& input, const Target& target,
                         Parameters& grads, Rng* dropout_rng, double loss_scale) {
  ForwardCache cache;
  HiddenStateTrace trace = forward_with_trace(model, input, cache, dropout_rng);
  const double value = head_loss(model, trace, target);
  Tensor d_final = head_backward(model, trace, target, grads, loss_scale);
  backward(model, trace, cache, d_final, grads);
  return value;
}

}  // namespace layerscope
