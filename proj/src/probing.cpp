#include "layerscope/probing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "layerscope/error.hpp"
#include "layerscope/training.hpp"

namespace layerscope {

std::vector<double> pool_spans(const HiddenStateTrace& trace, std::size_t layer, const std::vector<Span>& spans) {
  if (layer >= trace.layers.size()) {
    throw IndexError("layer " + std::to_string(layer) + " out of range (trace has " +
                     std::to_string(trace.layers.size()) + ")");
  }
  if (spans.empty()) throw FormatError("pool_spans: no spans");
  const Tensor& h = trace.layers[layer];
  const std::size_t d = h.cols();
  const auto& mask = trace.input.attention_mask;
  std::vector<double> out(spans.size() * d, 0.0);
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto [b, e] = spans[k];
    if (b >= e || e > h.rows()) {
      throw IndexError("span [" + std::to_string(b) + "," + std::to_string(e) + ") outside " +
                       std::to_string(h.rows()) + " positions");
    }
    std::size_t used = 0;
    double* dst = out.data() + k * d;
    for (std::size_t i = b; i < e; ++i) {
      if (i < mask.size() && mask[i] == 0) continue;
      auto row = h.row(i);
      for (std::size_t c = 0; c < d; ++c) dst[c] += row[c];
      ++used;
    }
    if (used == 0) {
      throw FormatError("span [" + std::to_string(b) + "," + std::to_string(e) + ") covers only padding");
    }
    for (std::size_t c = 0; c < d; ++c) dst[c] /= static_cast<double>(used);
  }
  return out;
}

// ---------------------------------------------------------------- metrics

double macro_f1(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& golds,
                std::size_t n_classes) {
  if (predictions.size() != golds.size()) {
    throw DimensionError("macro_f1: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(golds.size()) + " golds");
  }
  std::vector<double> tp(n_classes, 0), pred(n_classes, 0), gold(n_classes, 0);
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (golds[i] >= n_classes || predictions[i] >= n_classes) throw IndexError("macro_f1: label outside inventory");
    ++gold[golds[i]];
    ++pred[predictions[i]];
    if (golds[i] == predictions[i]) ++tp[golds[i]];
  }
  double sum = 0.0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (gold[c] == 0) continue;
    ++supported;
    if (tp[c] > 0) sum += 2.0 * tp[c] / (gold[c] + pred[c]);
  }
  return supported ? sum / static_cast<double>(supported) : 0.0;
}

double macro_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& golds,
                const std::vector<std::string>& inventory) {
  auto index = [&](const std::string& s) {
    auto it = std::find(inventory.begin(), inventory.end(), s);
    if (it == inventory.end()) throw IndexError("macro_f1: label '" + s + "' not in inventory");
    return static_cast<std::size_t>(it - inventory.begin());
  };
  if (predictions.size() != golds.size()) {
    throw DimensionError("macro_f1: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(golds.size()) + " golds");
  }
  std::vector<std::size_t> p, g;
  for (const auto& s : predictions) p.push_back(index(s));
  for (const auto& s : golds) g.push_back(index(s));
  return macro_f1(p, g, inventory.size());
}

double chance_macro_f1(const std::vector<double>& prior, const std::vector<std::size_t>& golds) {
  std::vector<double> gold(prior.size(), 0.0);
  for (auto g : golds) {
    if (g >= prior.size()) throw IndexError("chance_macro_f1: label outside inventory");
    ++gold[g];
  }
  const double n = static_cast<double>(golds.size());
  double sum = 0.0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < prior.size(); ++c) {
    if (gold[c] == 0) continue;
    ++supported;
    const double denom = gold[c] + n * prior[c];
    if (denom > 0) sum += 2.0 * gold[c] * prior[c] / denom;
  }
  return supported ? sum / static_cast<double>(supported) : 0.0;
}

// ---------------------------------------------------------------- probe MLP

namespace {

Tensor standardize(const Tensor& x, const std::vector<double>& mean, const std::vector<double>& scale) {
  Tensor out = x;
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < d; ++c) row[c] = (row[c] - mean[c]) * scale[c];
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  Tensor out({end - begin, x.cols()});
  for (std::size_t i = begin; i < end; ++i) {
    auto src = x.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i - begin).begin());
  }
  return out;
}

struct Adam {
  std::vector<Tensor> m, v;
  std::size_t t = 0;
  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads, double lr) {
    if (m.empty()) {
      for (auto* p : params) {
        m.emplace_back(p->shape());
        v.emplace_back(p->shape());
      }
    }
    ++t;
    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& p = *params[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = grads[k][i];
        m[k][i] = 0.9 * m[k][i] + 0.1 * g;
        v[k][i] = 0.999 * v[k][i] + 0.001 * g * g;
        p[i] -= lr * (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + 1e-8);
      }
    }
  }
};

}  // namespace

Tensor ProbeClassifier::logits(const Tensor& x) const {
  Tensor z = standardize(x, feature_mean, feature_scale);
  Tensor h = matmul(z, w1);
  add_row_vector(h, b1);
  h = relu(h);
  Tensor out = matmul(h, w2);
  add_row_vector(out, b2);
  return out;
}

std::vector<std::size_t> ProbeClassifier::predict(const Tensor& x) const {
  const Tensor z = logits(x);
  std::vector<std::size_t> out(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

ProbeClassifier train_probe(const FeatureSet& train, const FeatureSet& dev, const std::vector<std::string>& labels,
                            std::size_t layer, ProbeTask task, const ProbeConfig& config) {
  const std::size_t n = train.size();
  const std::size_t k = labels.size();
  if (n == 0) throw DegenerateDataError(to_string(task) + " layer " + std::to_string(layer) + ": empty training set");
  if (train.x.rows() != n) throw DimensionError("train_probe: feature rows do not match labels");
  std::vector<double> counts(k, 0.0);
  for (auto y : train.y) {
    if (y >= k) throw IndexError("train_probe: label index outside inventory");
    ++counts[y];
  }
  const auto present = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; });
  if (present < 2) {
    throw DegenerateDataError(to_string(task) + " layer " + std::to_string(layer) +
                              ": training labels contain a single class");
  }
  std::vector<double> class_weight(k, 1.0);
  if (config.class_weighted) {
    for (std::size_t c = 0; c < k; ++c) {
      class_weight[c] = counts[c] > 0 ? static_cast<double>(n) / (static_cast<double>(present) * counts[c]) : 0.0;
    }
  }

  const std::size_t d = train.x.cols();
  ProbeClassifier probe;
  probe.layer = layer;
  probe.task = task;
  probe.labels = labels;
  probe.feature_mean.assign(d, 0.0);
  probe.feature_scale.assign(d, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = train.x.row(r);
    for (std::size_t c = 0; c < d; ++c) probe.feature_mean[c] += row[c];
  }
  for (auto& m : probe.feature_mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = train.x.row(r);
    for (std::size_t c = 0; c < d; ++c) var[c] += (row[c] - probe.feature_mean[c]) * (row[c] - probe.feature_mean[c]);
  }
  for (std::size_t c = 0; c < d; ++c) {
    const double sd = std::sqrt(var[c] / static_cast<double>(n));
    probe.feature_scale[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }

  Rng rng = Rng(config.seed).split(layer * 16 + static_cast<std::uint64_t>(task));
  const std::size_t h = config.hidden;
  probe.w1 = randn({d, h}, std::sqrt(2.0 / static_cast<double>(d)), rng);
  probe.b1 = Tensor({h});
  probe.w2 = randn({h, k}, std::sqrt(1.0 / static_cast<double>(h)), rng);
  probe.b2 = Tensor({k});

  const Tensor z = standardize(train.x, probe.feature_mean, probe.feature_scale);
  const FeatureSet& stop_set = dev.size() ? dev : train;
  auto score = [&](const ProbeClassifier& p) { return macro_f1(p.predict(stop_set.x), stop_set.y, k); };

  Adam adam;
  ProbeClassifier best = probe;
  double best_score = score(probe);
  std::size_t since_best = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t b = 0; b < n; b += config.batch_size) {
      const std::size_t e = std::min(n, b + config.batch_size);
      const Tensor xb = gather_rows(z, order, b, e);
      Tensor pre = matmul(xb, probe.w1);
      add_row_vector(pre, probe.b1);
      const Tensor act = relu(pre);
      Tensor logits = matmul(act, probe.w2);
      add_row_vector(logits, probe.b2);
      Tensor dlogits = softmax_rows(logits);
      double wsum = 0.0;
      for (std::size_t i = b; i < e; ++i) wsum += class_weight[train.y[order[i]]];
      for (std::size_t i = b; i < e; ++i) {
        const std::size_t y = train.y[order[i]];
        const double w = class_weight[y] / wsum;
        auto row = dlogits.row(i - b);
        row[y] -= 1.0;
        for (auto& v : row) v *= w;
      }
      std::vector<Tensor> grads;
      grads.push_back(Tensor({d, h}));
      grads.push_back(Tensor({h}));
      grads.push_back(matmul_tn(act, dlogits));
      grads.push_back(Tensor({k}));
      sum_rows_acc(dlogits, grads[3]);
      const Tensor dpre = relu_backward(pre, matmul_nt(dlogits, probe.w2));
      matmul_tn_acc(xb, dpre, grads[0]);
      sum_rows_acc(dpre, grads[1]);
      adam.step({&probe.w1, &probe.b1, &probe.w2, &probe.b2}, grads, config.learning_rate);
    }
    probe.epochs_trained = epoch + 1;
    const double s = score(probe);
    if (s > best_score) {
      best_score = s;
      best = probe;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  best.epochs_trained = probe.epochs_trained;
  return best;
}

std::size_t LayerProbeResult::best_layer() const {
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

// ---------------------------------------------------------------- features

namespace {

template <typename F>
void parallel_for(std::size_t n, F&& body) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : threads) t.join();
}

struct SampleRef {
  ProbeTask task;
  int split;
  std::size_t index;
  const ProbingSample* sample;
};

}  // namespace

ProbeFeatures extract_probe_features(const Model& model, const Lexicon& lexicon,
                                     const std::map<ProbeTask, ProbeSplits>& suite) {
  ProbeFeatures out;
  out.n_layers = model.config().n_layers + 1;
  const std::size_t d = model.config().d_model;
  std::map<std::vector<std::string>, std::vector<SampleRef>> by_sequence;

  for (const auto& [task, splits] : suite) {
    auto& dst = out.tasks[task];
    std::vector<ProbingSample> all;
    const std::vector<ProbingSample>* parts[3] = {&splits.train, &splits.dev, &splits.test};
    std::vector<std::vector<FeatureSet>*> targets = {&dst.train, &dst.dev, &dst.test};
    for (auto* p : parts) all.insert(all.end(), p->begin(), p->end());
    dst.labels = label_inventory(all);
    for (int s = 0; s < 3; ++s) {
      const auto& samples = *parts[s];
      const std::size_t width = samples.empty() ? 0 : samples.front().spans.size() * d;
      targets[s]->assign(out.n_layers, FeatureSet{});
      for (auto& fs : *targets[s]) {
        fs.x = Tensor({samples.size(), width});
        fs.y.resize(samples.size());
      }
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& sample = samples[i];
        sample.validate();
        if (sample.spans.size() * d != width) throw FormatError(to_string(task) + ": inconsistent span counts");
        const auto y = static_cast<std::size_t>(
            std::find(dst.labels.begin(), dst.labels.end(), sample.label) - dst.labels.begin());
        for (auto& fs : *targets[s]) fs.y[i] = y;
        by_sequence[sample.tokens].push_back({task, s, i, &sample});
      }
    }
  }
  out.unique_sequences = by_sequence.size();

  std::vector<const std::pair<const std::vector<std::string>, std::vector<SampleRef>>*> jobs;
  for (const auto& entry : by_sequence) jobs.push_back(&entry);
  const std::size_t max_len = model.config().max_len;
  parallel_for(jobs.size(), [&](std::size_t j) {
    const auto& [tokens, refs] = *jobs[j];
    const auto trace = forward_with_trace(model, encode_tokens(tokens, lexicon, max_len));
    for (const auto& ref : refs) {
      auto& dst = out.tasks.at(ref.task);
      auto& sets = ref.split == 0 ? dst.train : (ref.split == 1 ? dst.dev : dst.test);
      for (std::size_t layer = 0; layer < out.n_layers; ++layer) {
        const auto pooled = pool_spans(trace, layer, ref.sample->spans);
        std::copy(pooled.begin(), pooled.end(), sets[layer].x.row(ref.index).begin());
      }
    }
  });
  return out;
}

std::vector<LayerProbeResult> probe_all_layers(const ProbeFeatures& features, const std::string& model_tag,
                                               const ProbeConfig& config) {
  std::vector<std::pair<ProbeTask, std::size_t>> jobs;
  for (const auto& [task, _] : features.tasks) {
    for (std::size_t layer = 0; layer < features.n_layers; ++layer) jobs.push_back({task, layer});
  }
  std::vector<double> test_scores(jobs.size()), dev_scores(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t j) {
    const auto [task, layer] = jobs[j];
    const auto& f = features.tasks.at(task);
    try {
      if (f.test[layer].size() == 0) throw DegenerateDataError("empty test split");
      const auto probe = train_probe(f.train[layer], f.dev[layer], f.labels, layer, task, config);
      test_scores[j] = macro_f1(probe.predict(f.test[layer].x), f.test[layer].y, f.labels.size());
      dev_scores[j] = f.dev[layer].size() ? macro_f1(probe.predict(f.dev[layer].x), f.dev[layer].y, f.labels.size())
                                          : 0.0;
    } catch (const Error& e) {
      errors[j] = to_string(task) + " layer " + std::to_string(layer) + ": " + e.what();
    }
  });
  for (const auto& e : errors) {
    if (!e.empty()) throw Error("probing failed: " + e);
  }

  std::vector<LayerProbeResult> results;
  std::size_t j = 0;
  for (const auto& [task, f] : features.tasks) {
    LayerProbeResult r;
    r.task = task;
    r.model_tag = model_tag;
    r.seed = config.seed;
    std::vector<double> prior(f.labels.size(), 0.0);
    for (auto y : f.train[0].y) prior[y] += 1.0 / static_cast<double>(f.train[0].size());
    r.chance = chance_macro_f1(prior, f.test[0].y);
    for (std::size_t layer = 0; layer < features.n_layers; ++layer, ++j) {
      r.scores.push_back(test_scores[j]);
      r.dev_scores.push_back(dev_scores[j]);
    }
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<LayerProbeResult> probe_all_layers(const Model& model, const Lexicon& lexicon,
                                               const std::map<ProbeTask, ProbeSplits>& suite,
                                               const std::string& model_tag, const ProbeConfig& config) {
  return probe_all_layers(extract_probe_features(model, lexicon, suite), model_tag, config);
}

// ---------------------------------------------------------------- phases

std::vector<double> normalize_row(const std::vector<double>& row) {
  if (row.empty()) return {};
  const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
  const double min = *lo, max = *hi;
  std::vector<double> out(row.size(), 0.5);
  if (max > min) {
    for (std::size_t i = 0; i < row.size(); ++i) out[i] = (row[i] - min) / (max - min);
  }
  return out;
}

PhaseMatrix normalize_phase_matrix(const std::vector<LayerProbeResult>& results) {
  PhaseMatrix m;
  for (const auto& r : results) {
    if (!m.values.empty() && r.scores.size() != m.values.front().size()) {
      throw DimensionError("phase matrix: tasks probed over different layer ranges");
    }
    m.tasks.push_back(r.task);
    m.values.push_back(normalize_row(r.scores));
  }
  return m;
}

// ---------------------------------------------------------------- CSV

std::string probe_results_csv(const std::vector<LayerProbeResult>& results) {
  std::ostringstream os;
  os << "task,layer,split,macro_f1,model_tag,seed\n";
  char buf[64];
  auto row = [&](const LayerProbeResult& r, std::size_t layer, const char* split, double v, const std::string& tag) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    os << to_string(r.task) << ',' << layer << ',' << split << ',' << buf << ',' << tag << ',' << r.seed << '\n';
  };
  for (const auto& r : results) {
    for (std::size_t l = 0; l < r.scores.size(); ++l) row(r, l, "test", r.scores[l], r.model_tag);
    for (std::size_t l = 0; l < r.dev_scores.size(); ++l) row(r, l, "dev", r.dev_scores[l], r.model_tag);
    row(r, 0, "test", r.chance, r.model_tag + "/chance");
  }
  return os.str();
}

std::vector<LayerProbeResult> parse_probe_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "task,layer,split,macro_f1,model_tag,seed") {
    throw FormatError("probe CSV: missing header");
  }
  std::vector<LayerProbeResult> out;
  auto find = [&](ProbeTask t, const std::string& tag, std::uint64_t seed) -> LayerProbeResult& {
    for (auto& r : out) {
      if (r.task == t && r.model_tag == tag && r.seed == seed) return r;
    }
    out.push_back({t, tag, {}, {}, 0.0, seed});
    return out.back();
  };
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw FormatError("probe CSV line " + std::to_string(lineno) + ": expected 6 fields");
    try {
      const ProbeTask task = probe_task_from_string(f[0]);
      const std::size_t layer = std::stoul(f[1]);
      const double v = std::stod(f[3]);
      const std::uint64_t seed = std::stoull(f[5]);
      std::string tag = f[4];
      const bool chance = tag.size() > 7 && tag.ends_with("/chance");
      if (chance) tag.resize(tag.size() - 7);
      auto& r = find(task, tag, seed);
      if (chance) {
        r.chance = v;
        continue;
      }
      auto& dst = f[2] == "dev" ? r.dev_scores : r.scores;
      if (layer != dst.size()) throw FormatError("layers out of order");
      dst.push_back(v);
    } catch (const std::logic_error& e) {
      throw FormatError("probe CSV line " + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("probe CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace layerscope
