#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "layerscope/encoder.hpp"
#include "layerscope/tasks.hpp"
#include "layerscope/tensor.hpp"

namespace layerscope {

// Mean of the token vectors inside each span at `layer`, spans concatenated
// in order. Throws IndexError for out-of-range spans and FormatError for
// spans that cover only padding.
std::vector<double> pool_spans(const HiddenStateTrace& trace, std::size_t layer, const std::vector<Span>& spans);

struct ProbeConfig {
  std::size_t hidden = 64;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 3;  // dev evaluations without improvement
  bool class_weighted = true;
  std::uint64_t seed = 0;
};

struct FeatureSet {
  Tensor x;                    // n x dim
  std::vector<std::size_t> y;  // class indices
  std::size_t size() const { return y.size(); }
};

// Two-layer MLP over standardized pooled features.
class ProbeClassifier {
 public:
  std::size_t layer = 0;
  ProbeTask task = ProbeTask::nel;
  std::vector<std::string> labels;
  std::vector<double> feature_mean, feature_scale;
  Tensor w1, b1, w2, b2;
  std::size_t epochs_trained = 0;

  Tensor logits(const Tensor& x) const;
  std::vector<std::size_t> predict(const Tensor& x) const;
};

// Adam on (weighted) cross-entropy with early stopping on dev macro-F1.
// Throws DegenerateDataError when the training labels hold one class.
ProbeClassifier train_probe(const FeatureSet& train, const FeatureSet& dev, const std::vector<std::string>& labels,
                            std::size_t layer, ProbeTask task, const ProbeConfig& config);

// Unweighted mean of per-class F1 over classes with gold support.
double macro_f1(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& golds,
                std::size_t n_classes);
double macro_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& golds,
                const std::vector<std::string>& inventory);

// Expected macro-F1 of a predictor that draws labels from `prior`,
// evaluated against `golds` (ratio of expected counts per class).
double chance_macro_f1(const std::vector<double>& prior, const std::vector<std::size_t>& golds);

struct LayerProbeResult {
  ProbeTask task = ProbeTask::nel;
  std::string model_tag;  // "fine-tuned" or "untrained"
  std::vector<double> scores;  // test macro-F1 per layer 0..N
  std::vector<double> dev_scores;
  double chance = 0.0;
  std::uint64_t seed = 0;

  std::size_t best_layer() const;  // first argmax
};

// Pooled features for every (task, split, layer); each distinct token
// sequence is run through the encoder once.
struct ProbeFeatures {
  struct Splits {
    std::vector<FeatureSet> train, dev, test;  // indexed by layer
    std::vector<std::string> labels;
  };
  std::map<ProbeTask, Splits> tasks;
  std::size_t n_layers = 0;  // N + 1
  std::size_t unique_sequences = 0;
};

ProbeFeatures extract_probe_features(const Model& model, const Lexicon& lexicon,
                                     const std::map<ProbeTask, ProbeSplits>& suite);

// One independent probe per (task, layer); scores on the test split.
std::vector<LayerProbeResult> probe_all_layers(const ProbeFeatures& features, const std::string& model_tag,
                                               const ProbeConfig& config);
std::vector<LayerProbeResult> probe_all_layers(const Model& model, const Lexicon& lexicon,
                                               const std::map<ProbeTask, ProbeSplits>& suite,
                                               const std::string& model_tag, const ProbeConfig& config);

struct PhaseMatrix {
  std::vector<ProbeTask> tasks;
  std::vector<std::vector<double>> values;  // rows = tasks, columns = layers
};

// Per-row min-max to [0, 1]; constant rows become 0.5.
std::vector<double> normalize_row(const std::vector<double>& row);
PhaseMatrix normalize_phase_matrix(const std::vector<LayerProbeResult>& results);

// CSV with header task,layer,split,macro_f1,model_tag,seed.
std::string probe_results_csv(const std::vector<LayerProbeResult>& results);
std::vector<LayerProbeResult> parse_probe_results_csv(const std::string& text);

}  // namespace layerscope
