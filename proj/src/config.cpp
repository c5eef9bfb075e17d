#include "layerscope/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "layerscope/error.hpp"

namespace layerscope {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParameterError("config: bad value '" + v + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParameterError("config: bad value '" + v + "' for " + key + " (expected true|false)");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define LS_SIZE(KEY, EXPR)                                                                           \
  Field {                                                                                            \
    KEY, [](PipelineConfig& c, const std::string& v) { c.EXPR = parse_number<std::size_t>(KEY, v); }, \
        [](const PipelineConfig& c) { return std::to_string(c.EXPR); }                             \
  }
#define LS_U64(KEY, EXPR)                                                                              \
  Field {                                                                                              \
    KEY, [](PipelineConfig& c, const std::string& v) { c.EXPR = parse_number<std::uint64_t>(KEY, v); }, \
        [](const PipelineConfig& c) { return std::to_string(c.EXPR); }                               \
  }
#define LS_DOUBLE(KEY, EXPR)                                                                      \
  Field {                                                                                         \
    KEY, [](PipelineConfig& c, const std::string& v) { c.EXPR = parse_number<double>(KEY, v); }, \
        [](const PipelineConfig& c) { return format_double(c.EXPR); }                           \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      LS_SIZE("gen.n_samples", n_samples),
      LS_SIZE("gen.n_names", generator.n_names),
      LS_SIZE("gen.n_kinds", generator.n_kinds),
      LS_SIZE("gen.n_distractor_sentences", generator.n_distractor_sentences),
      LS_U64("gen.seed", generator.seed),
      LS_DOUBLE("gen.train_ratio", generator.train_ratio),
      LS_DOUBLE("gen.dev_ratio", generator.dev_ratio),
      LS_DOUBLE("gen.test_ratio", generator.test_ratio),

      LS_SIZE("model.n_layers", model.n_layers),
      LS_SIZE("model.d_model", model.d_model),
      LS_SIZE("model.n_heads", model.n_heads),
      LS_SIZE("model.d_ff", model.d_ff),
      LS_SIZE("model.max_len", model.max_len),
      LS_DOUBLE("model.dropout_rate", model.dropout_rate),
      LS_DOUBLE("model.init_std", model.init_std),
      LS_DOUBLE("model.embedding_init_std", model.embedding_init_std),
      LS_DOUBLE("model.layer_norm_eps", model.layer_norm_eps),
      LS_U64("model.seed", model.seed),

      Field{"train.head", [](PipelineConfig& c, const std::string& v) { c.head = head_kind_from_string(v); },
            [](const PipelineConfig& c) { return to_string(c.head); }},
      LS_DOUBLE("train.learning_rate", train.learning_rate),
      LS_SIZE("train.batch_size", train.batch_size),
      Field{"train.scheduler",
            [](PipelineConfig& c, const std::string& v) { c.train.scheduler = scheduler_from_string(v); },
            [](const PipelineConfig& c) { return to_string(c.train.scheduler); }},
      LS_DOUBLE("train.warmup_fraction", train.warmup_fraction),
      LS_SIZE("train.epochs", train.epochs),
      LS_SIZE("train.eval_interval_steps", train.eval_interval_steps),
      LS_U64("train.seed", train.seed),
      LS_DOUBLE("train.adam_beta1", train.adam_beta1),
      LS_DOUBLE("train.adam_beta2", train.adam_beta2),
      LS_DOUBLE("train.adam_eps", train.adam_eps),
      LS_DOUBLE("train.weight_decay", train.weight_decay),
      LS_DOUBLE("train.grad_clip_norm", train.grad_clip_norm),

      LS_SIZE("probe.hidden", probe.hidden),
      LS_DOUBLE("probe.learning_rate", probe.learning_rate),
      LS_SIZE("probe.batch_size", probe.batch_size),
      LS_SIZE("probe.max_epochs", probe.max_epochs),
      LS_SIZE("probe.patience", probe.patience),
      Field{"probe.class_weighted",
            [](PipelineConfig& c, const std::string& v) { c.probe.class_weighted = parse_bool("probe.class_weighted", v); },
            [](const PipelineConfig& c) { return std::string(c.probe.class_weighted ? "true" : "false"); }},
      LS_U64("probe.seed", probe.seed),
      LS_SIZE("probe.max_train", suite.max_train),
      LS_SIZE("probe.max_dev", suite.max_dev),
      LS_SIZE("probe.max_test", suite.max_test),
  };
  return all;
}

#undef LS_SIZE
#undef LS_U64
#undef LS_DOUBLE

}  // namespace

void PipelineConfig::set_seed(std::uint64_t seed) {
  generator.seed = seed;
  model.seed = seed;
  train.seed = seed;
  probe.seed = seed;
  suite.seed = seed;
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

void apply_key_values(PipelineConfig& config, const KeyValues& values) {
  for (const auto& [key, value] : values) {
    if (key == "seed") {
      config.set_seed(parse_number<std::uint64_t>(key, value));
      continue;
    }
    bool found = false;
    for (const auto& f : fields()) {
      if (f.key == key) {
        try {
          f.set(config, value);
        } catch (const ParameterError&) {
          throw;
        } catch (const Error& e) {
          throw ParameterError("config: bad value '" + value + "' for " + key + ": " + e.what());
        }
        found = true;
        break;
      }
    }
    if (!found) throw ParameterError("config: unknown key '" + key + "'");
  }
  config.suite.seed = config.probe.seed;
  config.suite.head = config.head;
  config.suite.max_len = config.model.max_len;
}

PipelineConfig load_pipeline_config(const std::string& text) {
  PipelineConfig c;
  apply_key_values(c, parse_key_values(text));
  return c;
}

std::vector<std::string> config_keys(const std::string& section) {
  std::vector<std::string> keys;
  for (const auto& f : fields()) {
    if (f.key.rfind(section + ".", 0) == 0) keys.push_back(f.key);
  }
  return keys;
}

std::string section_text(const PipelineConfig& config, const std::string& section) {
  std::string out;
  for (const auto& f : fields()) {
    if (f.key.rfind(section + ".", 0) == 0) out += f.key + " = " + f.get(config) + "\n";
  }
  if (out.empty()) throw ParameterError("config: unknown section '" + section + "'");
  return out;
}

}  // namespace layerscope
