#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "layerscope/tensor.hpp"

namespace layerscope {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 0;
  std::size_t max_len = 128;
  std::size_t n_segments = 2;
  // Output width of the sequence classification head.
  std::size_t n_classes = 2;
  double dropout_rate = 0.0;
  double init_std = 0.02;
  double embedding_init_std = 0.02;
  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class TokenRole : std::uint8_t {
  question = 0,
  context = 1,
  answer = 2,
  supporting_fact = 3,
  special = 4,
  pad = 5,
};

std::string to_string(TokenRole role);
TokenRole token_role_from_string(const std::string& s);

struct EncodedInput {
  std::vector<std::uint32_t> token_ids;
  std::vector<std::uint32_t> segment_ids;
  std::vector<std::uint8_t> attention_mask;
  std::vector<TokenRole> roles;

  std::size_t length() const { return token_ids.size(); }
  std::size_t valid_length() const;
  // Throws LengthError / VocabError / FormatError.
  void validate(const ModelConfig& config) const;
  // Appends pad tokens (id `pad_id`, mask 0) up to `length`.
  EncodedInput padded_to(std::size_t length, std::uint32_t pad_id) const;

  friend bool operator==(const EncodedInput&, const EncodedInput&) = default;
};

struct HiddenStateTrace {
  // layers[0] is the embedding sum; layers[n] is the output of block n.
  std::vector<Tensor> layers;
  EncodedInput input;

  std::size_t n_layers() const { return layers.size(); }
  std::size_t seq_len() const { return input.length(); }
  // Copy with every pad row (mask 0) removed from all layers and the input.
  HiddenStateTrace without_padding() const;
};

struct SpanPrediction {
  std::vector<double> start_probs;
  std::vector<double> end_probs;
  std::size_t start = 0;
  std::size_t end = 0;
};

struct BlockParameters {
  Tensor query_weight, query_bias;
  Tensor key_weight, key_bias;
  Tensor value_weight, value_bias;
  Tensor output_weight, output_bias;
  Tensor attention_norm_gain, attention_norm_bias;
  Tensor ff_in_weight, ff_in_bias;
  Tensor ff_out_weight, ff_out_bias;
  Tensor ff_norm_gain, ff_norm_bias;
};

struct Parameters {
  Tensor token_embedding;
  Tensor position_embedding;
  Tensor segment_embedding;
  std::vector<BlockParameters> blocks;
  Tensor span_weight, span_bias;
  Tensor class_weight, class_bias;

  // Zero-filled parameters with the shapes implied by `config`.
  static Parameters zeros(const ModelConfig& config);

  // Stable (name, tensor) enumeration used by optimizers, persistence and
  // gradient checks.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::size_t count() const;
  void zero();
};

class Model {
 public:
  // Random initialization from config.seed.
  explicit Model(ModelConfig config);
  Model(ModelConfig config, Parameters parameters);

  const ModelConfig& config() const { return config_; }
  Parameters& parameters() { return parameters_; }
  const Parameters& parameters() const { return parameters_; }

  // FNV-1a over every parameter's bytes, for "weights untouched" checks.
  std::uint64_t checksum() const;

 private:
  ModelConfig config_;
  Parameters parameters_;
};

struct BlockCache {
  Tensor input;
  Tensor query, key, value;
  std::vector<Tensor> attention;  // per head, seq x seq
  Tensor context;
  Tensor attention_dropout;
  LayerNormCache attention_norm;
  Tensor attention_out;  // output of first layer norm
  Tensor ff_pre;
  Tensor ff_act;
  Tensor ff_dropout;
  LayerNormCache ff_norm;
};

// Activations recorded by a training forward pass.
struct ForwardCache {
  Tensor embedding_dropout;
  std::vector<BlockCache> blocks;
};

// Inference forward (no dropout). Returns all n_layers + 1 outputs.
HiddenStateTrace forward_with_trace(const Model& model, const EncodedInput& input);

// Forward pass that records activations in `cache`. Dropout is applied when
// `dropout_rng` is non-null and the configured rate is positive.
HiddenStateTrace forward_with_trace(const Model& model, const EncodedInput& input, ForwardCache& cache,
                                    Rng* dropout_rng);

// Per-head attention weights of one block, recomputed from the trace.
std::vector<Tensor> attention_weights(const Model& model, const HiddenStateTrace& trace,
                                      std::size_t block);

inline constexpr std::size_t kDefaultSpanCap = 8;

SpanPrediction span_head(const Model& model, const HiddenStateTrace& trace,
                         std::size_t span_cap = kDefaultSpanCap);
// Best (s, e) with s <= e, e - s <= span_cap, both admissible.
std::pair<std::size_t, std::size_t> best_span(std::span<const double> start_probs,
                                              std::span<const double> end_probs,
                                              std::span<const std::uint8_t> valid,
                                              std::size_t span_cap = kDefaultSpanCap);

std::vector<double> seqclass_head(const Model& model, const HiddenStateTrace& trace,
                                  std::size_t n_classes);

enum class HeadKind { span, classification };

std::string to_string(HeadKind head);
HeadKind head_kind_from_string(const std::string& s);

struct Target {
  HeadKind head = HeadKind::classification;
  std::size_t label = 0;  // classification
  std::size_t start = 0;  // span, inclusive
  std::size_t end = 0;    // span, inclusive
};

// Head loss: cross entropy for classification, mean of start/end cross
// entropies for spans.
double head_loss(const Model& model, const HiddenStateTrace& trace, const Target& target);

// Gradient of the head loss with respect to the final layer (seq x d_model).
// Head parameter gradients are accumulated into `grads`.
Tensor head_backward(const Model& model, const HiddenStateTrace& trace, const Target& target,
                     Parameters& grads, double loss_scale = 1.0);

// Backpropagates `d_final` (gradient wrt the last trace layer) through every
// block and the embeddings, accumulating into `grads`.
void backward(const Model& model, const HiddenStateTrace& trace, const ForwardCache& cache,
              const Tensor& d_final, Parameters& grads);

double loss(const Model& model, const EncodedInput& input, const Target& target);

// Full forward + backward for one example. Returns the loss; gradients
// (scaled by loss_scale) are accumulated into `grads`.
double loss_and_gradient(const Model& model, const EncodedInput& input, const Target& target,
                         Parameters& grads, Rng* dropout_rng = nullptr, double loss_scale = 1.0);

}  // namespace layerscope
