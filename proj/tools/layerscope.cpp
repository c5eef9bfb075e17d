// layerscope command-line entry point: gen, train, trace, probe, analyze, report.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "layerscope/analysis.hpp"
#include "layerscope/config.hpp"
#include "layerscope/error.hpp"
#include "layerscope/persistence.hpp"
#include "layerscope/probing.hpp"
#include "layerscope/tasks.hpp"
#include "layerscope/training.hpp"
#include "layerscope/viz.hpp"

namespace fs = std::filesystem;
using namespace layerscope;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

PipelineConfig load_config(const Common& c) {
  PipelineConfig cfg;
  if (!c.config_path.empty()) apply_key_values(cfg, parse_key_values(read_file_bytes(c.config_path)));
  if (c.seed) cfg.set_seed(*c.seed);
  cfg.suite.seed = cfg.probe.seed;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) { write_file_bytes(path, text); }

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

// Generator settings travel with the data (gen_config.txt) so that every
// later stage rebuilds the same lexicon.
struct DataDir {
  PipelineConfig config;
  Lexicon lexicon;
  std::vector<DeductionSample> samples;
};

DataDir load_data(const fs::path& dir) {
  DataDir d;
  const fs::path gen = dir / "gen_config.txt";
  if (!fs::exists(gen)) throw FormatError("missing " + gen.string() + " (run `layerscope gen` first)");
  apply_key_values(d.config, parse_key_values(read_file_bytes(gen)));
  d.lexicon = Lexicon::build(d.config.generator);
  const fs::path samples = dir / "samples.jsonl";
  if (fs::exists(samples)) {
    auto imported = read_samples_jsonl(samples);
    if (!imported.errors.empty()) {
      std::string msg = samples.string() + ": " + std::to_string(imported.errors.size()) + " bad line(s)";
      for (std::size_t i = 0; i < std::min<std::size_t>(3, imported.errors.size()); ++i) msg += "\n  " + imported.errors[i];
      throw FormatError(msg);
    }
    d.samples = std::move(imported.samples);
  }
  return d;
}

std::vector<DeductionSample> of_split(const std::vector<DeductionSample>& all, Split s) {
  std::vector<DeductionSample> out;
  for (const auto& x : all)
    if (x.split == s) out.push_back(x);
  return out;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  Common common;
  std::string out;
  std::optional<std::size_t> n;
};

int run_gen(const GenArgs& a) {
  PipelineConfig cfg = load_config(a.common);
  if (a.n) cfg.n_samples = *a.n;
  cfg.generator.validate();
  const auto samples = generate(cfg.generator, cfg.n_samples);
  fs::create_directories(a.out);
  write_samples_jsonl(fs::path(a.out) / "samples.jsonl", samples);
  write_text(fs::path(a.out) / "gen_config.txt", section_text(cfg, "gen"));
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& s : samples) ++counts[static_cast<int>(s.split)];
  std::cout << "wrote " << samples.size() << " samples (train " << counts[0] << ", dev " << counts[1] << ", test "
            << counts[2] << ") to " << a.out << " seed=" << cfg.generator.seed << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string data, out, head;
  bool grid = false;
};

std::string train_log_csv(const TrainReport& r) {
  std::string out = "step,epoch,train_loss,dev_metric,seed\n";
  for (const auto& e : r.evals) {
    out += std::to_string(e.step) + "," + std::to_string(e.epoch) + "," + fmt6(e.train_loss) + "," +
           fmt6(e.dev_metric) + "," + std::to_string(r.config.seed) + "\n";
  }
  return out;
}

int run_train(const TrainArgs& a) {
  PipelineConfig cfg = load_config(a.common);
  if (!a.head.empty()) cfg.head = head_kind_from_string(a.head);
  const DataDir data = load_data(a.data);
  if (data.samples.empty()) throw FormatError("no samples in " + a.data);
  cfg.generator = data.config.generator;
  cfg.model.vocab_size = data.lexicon.size();
  cfg.model.n_classes = cfg.generator.n_kinds;
  cfg.model.validate();
  cfg.train.validate();
  const QaDataset qa = encode_dataset(data.samples, data.lexicon, cfg.head, cfg.model.max_len);
  const ModelConfig model_config = cfg.model;
  const ModelFactory factory = [&] { return Model(model_config); };
  fs::create_directories(a.out);
  const fs::path out(a.out);
  std::ofstream log(out / "train_log.jsonl", std::ios::binary);
  TrainOptions opts;
  opts.log = &log;

  std::cerr << "training " << to_string(cfg.head) << " head on " << qa.train.size() << " examples ("
            << worker_count() << " worker(s))\n";
  TrainResult result = [&] {
    if (!a.grid) return fine_tune(factory(), qa, cfg.head, cfg.train, opts);
    std::vector<TrainConfig> grid = default_grid(cfg.train.seed);
    for (auto& cell : grid) {
      TrainConfig merged = cfg.train;
      merged.learning_rate = cell.learning_rate;
      merged.batch_size = cell.batch_size;
      merged.scheduler = cell.scheduler;
      merged.warmup_fraction = cell.warmup_fraction;
      cell = merged;
    }
    GridReport g = grid_search(factory, qa, cfg.head, grid, opts);
    std::string csv = "cell,learning_rate,batch_size,scheduler,best_dev,test,error,seed\n";
    for (std::size_t i = 0; i < g.cells.size(); ++i) {
      const auto& c = g.cells[i];
      csv += std::to_string(i) + "," + std::to_string(c.config.learning_rate) + "," +
             std::to_string(c.config.batch_size) + "," + to_string(c.config.scheduler) + "," +
             (c.report ? fmt6(c.report->best_dev_metric) : "") + "," +
             (c.report && c.report->test_metric ? fmt6(*c.report->test_metric) : "") + "," + csv_field(c.error) +
             "," + std::to_string(c.config.seed) + "\n";
    }
    write_text(out / "grid.csv", csv);
    return std::move(*g.best);
  }();
  cfg.train = result.report.config;

  std::map<std::string, std::string> meta;
  meta["head"] = to_string(cfg.head);
  meta["seed"] = std::to_string(cfg.train.seed);
  for (const auto& [k, v] : parse_key_values(section_text(cfg, "gen"))) meta[k] = v;
  save_checkpoint(out / "model.lwck", result.best_model, meta);
  write_text(out / "train_config.txt", section_text(cfg, "train"));
  write_text(out / "model_config.txt", section_text(cfg, "model"));
  write_text(out / "train_log.csv", train_log_csv(result.report));
  std::ostringstream summary;
  summary << "head = " << to_string(cfg.head) << "\nbest_dev_accuracy = " << fmt6(result.report.best_dev_metric)
          << "\nbest_step = " << result.report.evals[result.report.best_eval].step
          << "\ntest_accuracy = " << (result.report.test_metric ? fmt6(*result.report.test_metric) : "n/a")
          << "\nseed = " << cfg.train.seed << "\nassumptions = " << result.report.assumptions << "\n";
  write_text(out / "train_summary.txt", summary.str());
  std::cout << summary.str();
  return kOk;
}

// ---------------------------------------------------------------- trace

struct TraceArgs {
  Common common;
  std::string checkpoint, data, out, split = "test";
  std::size_t n = 1;
  bool correct = false, incorrect = false;
};

HeadKind checkpoint_head(const Checkpoint& c) {
  auto it = c.metadata.find("head");
  if (it == c.metadata.end()) throw FormatError("checkpoint has no head metadata");
  return head_kind_from_string(it->second);
}

int run_trace(const TraceArgs& a) {
  const PipelineConfig cfg = load_config(a.common);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const HeadKind head = checkpoint_head(ckpt);
  const DataDir data = load_data(a.data);
  const auto samples = of_split(data.samples, split_from_string(a.split));
  if (samples.empty()) throw FormatError("no " + a.split + " samples in " + a.data);
  const bool want_correct = a.correct || !a.incorrect;
  const bool want_incorrect = a.incorrect || !a.correct;

  std::vector<std::size_t> right, wrong;
  std::vector<EncodedExample> encoded;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    encoded.push_back(encode(samples[i], data.lexicon, head, ckpt.model.config().max_len));
    (predict_correct(ckpt.model, encoded.back(), head) ? right : wrong).push_back(i);
  }
  Rng rng(cfg.train.seed);
  rng.shuffle(right);
  rng.shuffle(wrong);

  fs::create_directories(a.out);
  const fs::path out(a.out);
  write_text(out / "gen_config.txt", read_file_bytes(fs::path(a.data) / "gen_config.txt"));
  std::string index = "file,split,sample_index,prediction,question,answer,seed\n";
  std::string notes;
  auto emit = [&](const std::vector<std::size_t>& pool, const char* label) {
    for (std::size_t k = 0; k < std::min(a.n, pool.size()); ++k) {
      const std::size_t i = pool[k];
      const std::string file = "trace_" + a.split + "_" + std::to_string(i) + ".lwt";
      dump_trace(out / file, forward_with_trace(ckpt.model, encoded[i].input));
      index += file + "," + a.split + "," + std::to_string(i) + "," + label + "," +
               csv_field(detokenize(samples[i].question)) + "," + samples[i].answer + "," +
               std::to_string(cfg.train.seed) + "\n";
    }
  };
  if (want_correct) {
    if (right.empty()) notes += "no correct samples in the " + a.split + " split\n";
    emit(right, "correct");
  }
  if (want_incorrect) {
    if (wrong.empty()) notes += "no incorrect samples in the " + a.split + " split\n";
    emit(wrong, "incorrect");
  }
  write_text(out / "traces.csv", index);
  if (!notes.empty()) {
    write_text(out / "trace_notes.txt", notes);
    std::cout << notes;
  }
  std::cout << "accuracy on " << a.split << ": " << right.size() << "/" << samples.size() << "; traces in " << a.out
            << " seed=" << cfg.train.seed << "\n";
  return kOk;
}

// ---------------------------------------------------------------- probe

struct ProbeArgs {
  Common common;
  std::string checkpoint, data, out;
  std::vector<std::string> tasks;
  bool no_finetune = false, control = false;
};

int run_probe(const ProbeArgs& a) {
  PipelineConfig cfg = load_config(a.common);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const DataDir data = load_data(a.data);
  cfg.suite.head = checkpoint_head(ckpt);
  cfg.suite.max_len = ckpt.model.config().max_len;
  cfg.suite.seed = cfg.probe.seed;
  std::set<ProbeTask> wanted;
  for (const auto& t : a.tasks) wanted.insert(probe_task_from_string(t));
  auto suite = build_probe_suite(data.samples, data.lexicon, cfg.suite);
  if (!wanted.empty()) std::erase_if(suite, [&](const auto& kv) { return !wanted.count(kv.first); });

  std::vector<LayerProbeResult> results;
  if (!a.no_finetune) {
    std::cerr << "probing fine-tuned encoder\n";
    auto r = probe_all_layers(ckpt.model, data.lexicon, suite, "fine-tuned", cfg.probe);
    results.insert(results.end(), r.begin(), r.end());
  }
  if (a.no_finetune || a.control) {
    std::cerr << "probing untrained control encoder\n";
    const Model control(ckpt.model.config());
    auto r = probe_all_layers(control, data.lexicon, suite, "untrained", cfg.probe);
    results.insert(results.end(), r.begin(), r.end());
  }

  fs::create_directories(a.out);
  const fs::path out(a.out);
  const std::string desc = "seed=" + std::to_string(cfg.probe.seed);
  const auto curves = emit_probe_curves(results, desc);
  write_text(out / "probes.csv", curves.csv);
  write_text(out / "probes.svg", curves.svg);
  write_text(out / "probe_results.csv", probe_results_csv(results));
  std::vector<LayerProbeResult> primary;
  for (const auto& r : results)
    if (r.model_tag == results.front().model_tag) primary.push_back(r);
  write_text(out / "phases.svg", emit_phase_heatmap(normalize_phase_matrix(primary), desc + " model=" + primary.front().model_tag));
  std::string balance;
  for (const auto& [task, splits] : suite) {
    balance += "train " + format_class_balance(task, splits.train) + "\n";
    balance += "test  " + format_class_balance(task, splits.test) + "\n";
  }
  write_text(out / "class_balance.txt", balance);
  write_text(out / "probe_config.txt", section_text(cfg, "probe"));
  for (const auto& r : results) {
    std::cout << to_string(r.task) << " " << r.model_tag << " best layer " << r.best_layer() << " macro-F1 "
              << fmt6(r.scores[r.best_layer()]) << " (chance " << fmt6(r.chance) << ")\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  Common common;
  std::string traces, out, method = "pca";
  std::optional<std::size_t> k;
  bool sentence_colors = false;
};

int run_analyze(const AnalyzeArgs& a) {
  const PipelineConfig cfg = load_config(a.common);
  const ProjectionMethod method = projection_method_from_string(a.method);
  const fs::path gen = fs::path(a.traces) / "gen_config.txt";
  if (!fs::exists(gen)) throw FormatError("missing " + gen.string());
  PipelineConfig gen_cfg;
  apply_key_values(gen_cfg, parse_key_values(read_file_bytes(gen)));
  const Lexicon lexicon = Lexicon::build(gen_cfg.generator);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.traces)) {
    if (e.is_regular_file() && e.path().extension() == ".lwt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError("no .lwt traces in " + a.traces);
  const std::uint64_t seed = cfg.train.seed;

  fs::create_directories(a.out);
  std::string summary = "trace,layer,method,k,ari,explained_ratio_1,explained_ratio_2,warning,seed\n";
  for (const auto& file : files) {
    const HiddenStateTrace trace = load_trace(file);
    const auto layers = analyze_trace(trace, lexicon, method, a.k, seed);
    const fs::path dir = fs::path(a.out) / file.stem();
    fs::create_directories(dir);
    write_text(dir / "projection.csv", projection_csv(layers));
    for (const auto& l : layers) {
      ScatterOptions opt;
      opt.title = file.stem().string() + " layer " + std::to_string(l.layer) + " (" + a.method + ")";
      opt.description = "seed=" + std::to_string(seed) + " method=" + a.method;
      opt.show_clusters = true;
      write_text(dir / ("scatter_layer_" + std::to_string(l.layer) + ".svg"), emit_layer_scatter(l.projection, opt));
      if (a.sentence_colors) {
        opt.color_by_sentence = true;
        opt.show_clusters = false;
        write_text(dir / ("sentences_layer_" + std::to_string(l.layer) + ".svg"),
                   emit_layer_scatter(l.projection, opt));
      }
      summary += file.stem().string() + "," + std::to_string(l.layer) + "," + a.method + "," +
                 std::to_string(l.clusters_full.centroids.rows()) + "," + fmt6(l.ari) + "," +
                 (l.explained_ratio.size() > 1 ? fmt6(l.explained_ratio[0]) + "," + fmt6(l.explained_ratio[1]) : ",") +
                 "," + csv_field(l.warning) + "," + std::to_string(seed) + "\n";
      if (!l.warning.empty()) std::cerr << "warning: " << file.stem().string() << " layer " << l.layer << ": " << l.warning << "\n";
    }
  }
  write_text(fs::path(a.out) / "analysis.csv", summary);
  std::cout << "analyzed " << files.size() << " trace(s) into " << a.out << " seed=" << seed << "\n";
  return kOk;
}

// ---------------------------------------------------------------- report

int run_report(const std::string& run_dir) {
  if (!fs::is_directory(run_dir)) throw FormatError("run directory '" + run_dir + "' does not exist");
  write_text(fs::path(run_dir) / "report.html", assemble_report(run_dir));
  std::cout << "wrote " << (fs::path(run_dir) / "report.html").string() << "\n";
  return kOk;
}

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "seed for every random choice (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layerscope: train a small QA encoder and analyze its layers"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic deduction QA dataset");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--n", gen.n, "number of samples (default 10000)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "fine-tune the encoder on a generated dataset");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--data", train.data, "dataset directory from `gen`")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", train.out, "output directory for the checkpoint and logs")->required();
  train_cmd->add_option("--head", train.head, "span | classification")->check(CLI::IsMember({"span", "classification"}));
  train_cmd->add_flag("--grid", train.grid, "search the default 8-cell hyperparameter grid");

  TraceArgs trace;
  auto* trace_cmd = app.add_subcommand("trace", "capture per-layer hidden states for selected samples");
  add_common(trace_cmd, trace.common);
  trace_cmd->add_option("--checkpoint", trace.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  trace_cmd->add_option("--data", trace.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  trace_cmd->add_option("--out", trace.out, "output directory for traces")->required();
  trace_cmd->add_option("--n", trace.n, "samples per outcome (default 1)");
  trace_cmd->add_option("--split", trace.split, "train | dev | test")->check(CLI::IsMember({"train", "dev", "test"}));
  trace_cmd->add_flag("--correct", trace.correct, "select correctly predicted samples");
  trace_cmd->add_flag("--incorrect", trace.incorrect, "select falsely predicted samples");

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "train per-layer edge probes");
  add_common(probe_cmd, probe.common);
  probe_cmd->add_option("--checkpoint", probe.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  probe_cmd->add_option("--data", probe.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  probe_cmd->add_option("--out", probe.out, "output directory")->required();
  probe_cmd->add_option("--tasks", probe.tasks, "subset of NEL COREF REL QUES SUP")
      ->check(CLI::IsMember({"NEL", "COREF", "REL", "QUES", "SUP"}));
  probe_cmd->add_flag("--no-finetune", probe.no_finetune, "probe only the untrained control encoder");
  probe_cmd->add_flag("--control", probe.control, "also probe the untrained control encoder");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "project and cluster token vectors per layer");
  add_common(analyze_cmd, analyze.common);
  analyze_cmd->add_option("--traces", analyze.traces, "trace directory from `trace`")->required()->check(CLI::ExistingDirectory);
  analyze_cmd->add_option("--out", analyze.out, "output directory")->required();
  analyze_cmd->add_option("--method", analyze.method, "pca | ica | tsne")->check(CLI::IsMember({"pca", "ica", "tsne"}));
  analyze_cmd->add_option("--k", analyze.k, "k-means cluster count (default: role classes present)")
      ->check(CLI::PositiveNumber);
  analyze_cmd->add_flag("--sentence-colors", analyze.sentence_colors, "also emit sentence-colored scatters");

  std::string run_dir;
  auto* report_cmd = app.add_subcommand("report", "assemble report.html for a run directory");
  report_cmd->add_option("run_dir", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands()) sub = s;
    std::cerr << (sub ? sub->help() : app.help());
    return kValidation;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(train);
    if (*trace_cmd) return run_trace(trace);
    if (*probe_cmd) return run_probe(probe);
    if (*analyze_cmd) return run_analyze(analyze);
    if (*report_cmd) return run_report(run_dir);
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const VocabError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const LengthError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kValidation;
}
