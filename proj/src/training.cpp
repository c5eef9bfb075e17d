#include "layerscope/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <thread>

#include "layerscope/error.hpp"

namespace layerscope {

std::string to_string(Scheduler s) {
  return s == Scheduler::constant ? "constant" : "linear-warmup-decay";
}

Scheduler scheduler_from_string(const std::string& s) {
  if (s == "constant") return Scheduler::constant;
  if (s == "linear-warmup-decay") return Scheduler::linear_warmup_decay;
  throw ParameterError("unknown scheduler '" + s + "' (expected constant|linear-warmup-decay)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ParameterError("learning_rate must be >= 0");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (eval_interval_steps < 1) throw ParameterError("eval_interval_steps must be >= 1");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) throw ParameterError("warmup_fraction must be in [0,1)");
  if (grad_clip_norm < 0.0) throw ParameterError("grad_clip_norm must be >= 0");
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os << std::setprecision(17) << "learning_rate=" << learning_rate << " batch_size=" << batch_size
     << " scheduler=" << to_string(scheduler) << " warmup_fraction=" << warmup_fraction << " epochs=" << epochs
     << " eval_interval_steps=" << eval_interval_steps << " seed=" << seed << " adam_beta1=" << adam_beta1
     << " adam_beta2=" << adam_beta2 << " adam_eps=" << adam_eps << " weight_decay=" << weight_decay
     << " grad_clip_norm=" << grad_clip_norm;
  return os.str();
}

std::vector<TrainConfig> default_grid(std::uint64_t seed) {
  std::vector<TrainConfig> grid;
  for (double lr : {1e-4, 3e-4}) {
    for (std::size_t batch : {16, 32}) {
      for (Scheduler s : {Scheduler::constant, Scheduler::linear_warmup_decay}) {
        TrainConfig c;
        c.learning_rate = lr;
        c.batch_size = batch;
        c.scheduler = s;
        c.warmup_fraction = 0.1;
        c.seed = seed;
        grid.push_back(c);
      }
    }
  }
  return grid;
}

QaDataset encode_dataset(const std::vector<DeductionSample>& samples, const Lexicon& lexicon, HeadKind head,
                         std::size_t max_len) {
  QaDataset data;
  for (const auto& s : samples) {
    auto ex = encode(s, lexicon, head, max_len);
    switch (s.split) {
      case Split::train: data.train.push_back(std::move(ex)); break;
      case Split::dev: data.dev.push_back(std::move(ex)); break;
      case Split::test: data.test.push_back(std::move(ex)); break;
    }
  }
  return data;
}

// ---------------------------------------------------------------- optimizer

AdamOptimizer::AdamOptimizer(const Parameters& like, double beta1, double beta2, double eps, double weight_decay)
    : m_(like), v_(like), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  m_.zero();
  v_.zero();
}

void AdamOptimizer::step(Parameters& params, const Parameters& grads, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::vector<Tensor*> p, m, v;
  std::vector<const Tensor*> g;
  params.for_each([&](const std::string&, Tensor& t) { p.push_back(&t); });
  m_.for_each([&](const std::string&, Tensor& t) { m.push_back(&t); });
  v_.for_each([&](const std::string&, Tensor& t) { v.push_back(&t); });
  grads.for_each([&](const std::string&, const Tensor& t) { g.push_back(&t); });
  for (std::size_t b = 0; b < p.size(); ++b) {
    auto& pb = *p[b];
    auto& mb = *m[b];
    auto& vb = *v[b];
    const auto& gb = *g[b];
    for (std::size_t i = 0; i < pb.size(); ++i) {
      // A zero gradient on a never-updated coordinate leaves it unchanged.
      mb[i] = beta1_ * mb[i] + (1.0 - beta1_) * gb[i];
      vb[i] = beta2_ * vb[i] + (1.0 - beta2_) * gb[i] * gb[i];
      const double update = (mb[i] / c1) / (std::sqrt(vb[i] / c2) + eps_);
      pb[i] -= learning_rate * (update + weight_decay_ * pb[i]);
    }
  }
}

double learning_rate_at(const TrainConfig& config, std::size_t step, std::size_t total_steps) {
  if (config.scheduler == Scheduler::constant || total_steps == 0) return config.learning_rate;
  const double warm = std::max(1.0, std::floor(config.warmup_fraction * static_cast<double>(total_steps)));
  const double s = static_cast<double>(step);
  if (s <= warm) return config.learning_rate * s / warm;
  const double remaining = static_cast<double>(total_steps) - warm;
  return config.learning_rate * std::max(0.0, (static_cast<double>(total_steps) - s) / std::max(1.0, remaining));
}

double clip_global_norm(Parameters& grads, double max_norm) {
  double sq = 0.0;
  grads.for_each([&](const std::string&, const Tensor& t) {
    for (double v : t.values()) sq += v * v;
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    grads.for_each([&](const std::string&, Tensor& t) {
      for (auto& v : t.values()) v *= s;
    });
  }
  return norm;
}

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LAYERSCOPE_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

namespace {

constexpr std::size_t kGradientChunks = 8;

void add_parameters(Parameters& into, const Parameters& from) {
  std::vector<const Tensor*> src;
  from.for_each([&](const std::string&, const Tensor& t) { src.push_back(&t); });
  std::size_t i = 0;
  into.for_each([&](const std::string&, Tensor& t) { add_inplace(t, *src[i++]); });
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

double batch_gradient(const Model& model, const std::vector<const EncodedExample*>& batch, Parameters& grads,
                      std::uint64_t dropout_seed) {
  const std::size_t n = batch.size();
  const std::size_t chunks = std::min(n, kGradientChunks);
  const double scale = 1.0 / static_cast<double>(n);
  const bool use_dropout = model.config().dropout_rate > 0.0;
  std::vector<Parameters> partial(chunks, Parameters::zeros(model.config()));
  std::vector<double> losses(n, 0.0);

  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * n / chunks;
    const std::size_t end = (c + 1) * n / chunks;
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(mix(dropout_seed, i));
      losses[i] = loss_and_gradient(model, batch[i]->input, batch[i]->target, partial[c],
                                    use_dropout ? &rng : nullptr, scale);
    }
  };

  const std::size_t workers = std::min(worker_count(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
      });
    }
    for (auto& t : threads) t.join();
  }
  for (const auto& p : partial) add_parameters(grads, p);
  double total = 0.0;
  for (double l : losses) total += l;
  return total * scale;
}

// ---------------------------------------------------------------- evaluation

bool predict_correct(const Model& model, const EncodedExample& example, HeadKind head) {
  auto trace = forward_with_trace(model, example.input);
  if (head == HeadKind::classification) {
    auto probs = seqclass_head(model, trace, model.config().n_classes);
    const auto pred = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    return pred == example.target.label;
  }
  auto pred = span_head(model, trace);
  return pred.start == example.target.start && pred.end == example.target.end;
}

double evaluate_qa(const Model& model, const std::vector<EncodedExample>& examples, HeadKind head) {
  if (examples.empty()) throw ParameterError("evaluate_qa: empty dataset");
  std::vector<std::uint8_t> correct(examples.size(), 0);
  const std::size_t workers = std::min(worker_count(), examples.size());
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < examples.size(); i += workers) correct[i] = predict_correct(model, examples[i], head);
  };
  if (workers <= 1) {
    run(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w);
    for (auto& t : threads) t.join();
  }
  const auto hits = std::count(correct.begin(), correct.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

// ---------------------------------------------------------------- fine-tuning

TrainResult fine_tune(const Model& initial, const QaDataset& data, HeadKind head, const TrainConfig& config,
                      const TrainOptions& options) {
  config.validate();
  if (data.train.empty()) throw ParameterError("fine_tune: empty training set");
  if (data.dev.empty()) throw ParameterError("fine_tune: empty dev set");
  for (const auto& ex : data.train) {
    if (ex.target.head != head) throw ParameterError("fine_tune: example encoded for a different head");
  }

  Model model = initial;
  Model best = initial;
  TrainReport report;
  report.config = config;
  report.head = head;
  {
    std::ostringstream a;
    a << "optimizer=adam beta1=" << config.adam_beta1 << " beta2=" << config.adam_beta2 << " eps=" << config.adam_eps
      << " weight_decay=" << config.weight_decay << "; grad_clip_norm=" << config.grad_clip_norm
      << "; warmup_fraction=" << config.warmup_fraction << " (" << to_string(config.scheduler) << ")";
    report.assumptions = a.str();
  }

  Rng rng(config.seed);
  const std::size_t n = data.train.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  AdamOptimizer adam(model.parameters(), config.adam_beta1, config.adam_beta2, config.adam_eps, config.weight_decay);
  Parameters grads = Parameters::zeros(model.config());

  double loss_since_eval = 0.0;
  std::size_t steps_since_eval = 0;
  auto evaluate = [&](std::size_t step, std::size_t epoch) {
    EvalRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.train_loss = steps_since_eval ? loss_since_eval / static_cast<double>(steps_since_eval) : 0.0;
    rec.dev_metric = evaluate_qa(model, data.dev, head);
    loss_since_eval = 0.0;
    steps_since_eval = 0;
    if (report.evals.empty() || rec.dev_metric > report.best_dev_metric) {
      report.best_dev_metric = rec.dev_metric;
      report.best_eval = report.evals.size();
      best = model;
    }
    report.evals.push_back(rec);
    if (options.log) {
      *options.log << std::setprecision(10) << "{\"step\":" << rec.step << ",\"epoch\":" << rec.epoch
                   << ",\"loss\":" << rec.train_loss << ",\"dev_metric\":" << rec.dev_metric << "}\n";
      options.log->flush();
    }
  };

  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      std::vector<const EncodedExample*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&data.train[order[i]]);
      ++step;
      grads.zero();
      const double batch_loss = batch_gradient(model, batch, grads, rng.next_u64());
      const double lr = learning_rate_at(config, step, total_steps);
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "training diverged at step " << step << " (lr=" << lr << ", loss=" << batch_loss << ")";
        throw DivergenceError(msg.str());
      }
      clip_global_norm(grads, config.grad_clip_norm);
      adam.step(model.parameters(), grads, lr);
      report.step_losses.push_back(batch_loss);
      loss_since_eval += batch_loss;
      ++steps_since_eval;
      if (step % config.eval_interval_steps == 0 && step != total_steps) evaluate(step, epoch);
    }
  }
  evaluate(step, config.epochs - 1);
  if (!data.test.empty()) report.test_metric = evaluate_qa(best, data.test, head);
  return TrainResult{std::move(report), std::move(best)};
}

GridReport grid_search(const ModelFactory& factory, const QaDataset& data, HeadKind head,
                       const std::vector<TrainConfig>& grid, const TrainOptions& options) {
  if (grid.empty()) throw ParameterError("grid_search: empty grid");
  GridReport out;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    GridCell cell;
    cell.config = grid[i];
    try {
      TrainResult result = fine_tune(factory(), data, head, grid[i], options);
      cell.report = result.report;
      if (!best || result.report.best_dev_metric > out.cells[*best].report->best_dev_metric) {
        best = i;
        out.best.emplace(std::move(result));
      }
    } catch (const Error& e) {
      cell.error = e.what();
    }
    out.cells.push_back(std::move(cell));
  }
  if (!best) throw Error("grid_search: every cell failed; first error: " + out.cells.front().error);
  out.best_cell = *best;
  return out;
}

}  // namespace layerscope
