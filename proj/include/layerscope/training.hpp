#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "layerscope/encoder.hpp"
#include "layerscope/synthgen.hpp"

namespace layerscope {

enum class Scheduler { constant, linear_warmup_decay };
std::string to_string(Scheduler s);
Scheduler scheduler_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  Scheduler scheduler = Scheduler::constant;
  double warmup_fraction = 0.1;
  std::size_t epochs = 5;
  std::size_t eval_interval_steps = 200;
  std::uint64_t seed = 0;
  // Settings the reference training recipe leaves open; echoed in reports.
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip_norm = 1.0;

  void validate() const;
  std::string describe() const;  // one-line key=value echo
};

// Default grid: lr {1e-4, 3e-4} x batch {16, 32} x {constant, warmup-decay}.
std::vector<TrainConfig> default_grid(std::uint64_t seed = 0);

struct QaDataset {
  std::vector<EncodedExample> train;
  std::vector<EncodedExample> dev;
  std::vector<EncodedExample> test;
};

QaDataset encode_dataset(const std::vector<DeductionSample>& samples, const Lexicon& lexicon, HeadKind head,
                         std::size_t max_len);

struct EvalRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean over the steps since the previous eval
  double dev_metric = 0.0;
};

struct TrainReport {
  TrainConfig config;
  HeadKind head = HeadKind::classification;
  std::vector<EvalRecord> evals;
  std::size_t best_eval = 0;  // index into evals
  double best_dev_metric = 0.0;
  std::optional<double> test_metric;
  std::vector<double> step_losses;
  std::string assumptions;
};

struct TrainResult {
  TrainReport report;
  Model best_model;
};

struct TrainOptions {
  // Line-delimited JSON progress records; null disables logging.
  std::ostream* log = nullptr;
};

// Adam over shuffled mini-batches; dev evaluation every eval_interval_steps
// and after the final step. Returns the best-dev checkpoint.
TrainResult fine_tune(const Model& initial, const QaDataset& data, HeadKind head, const TrainConfig& config,
                      const TrainOptions& options = {});

double evaluate_qa(const Model& model, const std::vector<EncodedExample>& examples, HeadKind head);
bool predict_correct(const Model& model, const EncodedExample& example, HeadKind head);

struct GridCell {
  TrainConfig config;
  std::optional<TrainReport> report;
  std::string error;  // set when the cell failed
};

struct GridReport {
  std::vector<GridCell> cells;
  std::size_t best_cell = 0;
  std::optional<TrainResult> best;
};

using ModelFactory = std::function<Model()>;

// Runs fine_tune per cell; highest dev metric wins, earliest cell on ties.
// Failed cells are recorded and skipped. Throws if every cell fails.
GridReport grid_search(const ModelFactory& factory, const QaDataset& data, HeadKind head,
                       const std::vector<TrainConfig>& grid, const TrainOptions& options = {});

// Adam state over a Parameters layout.
class AdamOptimizer {
 public:
  AdamOptimizer(const Parameters& like, double beta1, double beta2, double eps, double weight_decay);
  void step(Parameters& params, const Parameters& grads, double learning_rate);
  std::size_t steps() const { return t_; }

 private:
  Parameters m_, v_;
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
};

double learning_rate_at(const TrainConfig& config, std::size_t step, std::size_t total_steps);
// Scales `grads` so that their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_global_norm(Parameters& grads, double max_norm);

// Worker count: LAYERSCOPE_THREADS caps hardware concurrency.
std::size_t worker_count();

// Summed gradient of the mean loss over `batch`. Work is split into a fixed
// number of chunks so the result does not depend on the worker count.
double batch_gradient(const Model& model, const std::vector<const EncodedExample*>& batch, Parameters& grads,
                      std::uint64_t dropout_seed);

}  // namespace layerscope
