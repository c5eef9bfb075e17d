#include "layerscope/persistence.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <sstream>

#include <json.hpp>

#include "layerscope/error.hpp"
#include "layerscope/tasks.hpp"

namespace layerscope {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string finish() {
    put<std::uint32_t>(crc32_of(out_));
    return std::move(out_);
  }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view bytes, const char* what) : bytes_(bytes), what_(what) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptFileError(std::string(what_) + ": unexpected end of data");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
  const char* what_;
};

// Magic check plus trailing CRC; returns the body without the CRC.
std::string_view verify_envelope(std::string_view bytes, std::string_view magic, const char* what) {
  if (bytes.size() < magic.size() || bytes.substr(0, magic.size()) != magic) {
    throw CorruptFileError(std::string(what) + ": bad magic (expected '" + std::string(magic) + "')");
  }
  return bytes;
}

void verify_crc(std::string_view bytes, const char* what) {
  if (bytes.size() < 8) throw CorruptFileError(std::string(what) + ": file too short");
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  if (stored != crc32_of(body)) throw CorruptFileError(std::string(what) + ": CRC mismatch (truncated or corrupted)");
}

ordered_json model_config_json(const ModelConfig& c) {
  ordered_json j;
  j["n_layers"] = c.n_layers;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["d_ff"] = c.d_ff;
  j["vocab_size"] = c.vocab_size;
  j["max_len"] = c.max_len;
  j["n_segments"] = c.n_segments;
  j["n_classes"] = c.n_classes;
  j["dropout_rate"] = c.dropout_rate;
  j["init_std"] = c.init_std;
  j["embedding_init_std"] = c.embedding_init_std;
  j["layer_norm_eps"] = c.layer_norm_eps;
  j["seed"] = c.seed;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.n_segments = j.at("n_segments").get<std::size_t>();
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.init_std = j.at("init_std").get<double>();
  c.embedding_init_std = j.at("embedding_init_std").get<double>();
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

// ---------------------------------------------------------------- checkpoint

std::string encode_checkpoint(const Model& model, const std::map<std::string, std::string>& metadata) {
  Writer w;
  w.bytes("LWCK");
  w.put<std::uint16_t>(kCheckpointVersion);
  ordered_json header;
  header["model"] = model_config_json(model.config());
  header["metadata"] = metadata;
  const std::string text = header.dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  std::uint32_t count = 0;
  model.parameters().for_each([&](const std::string&, const Tensor&) { ++count; });
  w.put<std::uint32_t>(count);
  model.parameters().for_each([&](const std::string& name, const Tensor& t) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : t.values()) w.put<double>(v);
  });
  return w.finish();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  const char* what = "checkpoint";
  verify_envelope(bytes, "LWCK", what);
  Reader r(bytes, what);
  r.bytes(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw CorruptFileError("checkpoint: unsupported format version " + std::to_string(version) +
                           " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  verify_crc(bytes, what);
  Reader body(bytes.substr(0, bytes.size() - 4), what);
  body.bytes(6);
  const auto text_len = body.get<std::uint32_t>();
  ModelConfig config;
  std::map<std::string, std::string> metadata;
  try {
    const json header = json::parse(body.bytes(text_len));
    config = model_config_from_json(header.at("model"));
    metadata = header.at("metadata").get<std::map<std::string, std::string>>();
    config.validate();
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("checkpoint: bad config header: ") + e.what());
  } catch (const ParameterError& e) {
    throw CorruptFileError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  Parameters params = Parameters::zeros(config);
  std::uint32_t expected = 0;
  params.for_each([&](const std::string&, Tensor&) { ++expected; });
  const auto count = body.get<std::uint32_t>();
  if (count != expected) {
    throw CorruptFileError("checkpoint: " + std::to_string(count) + " tensors, config implies " +
                           std::to_string(expected));
  }
  params.for_each([&](const std::string& name, Tensor& t) {
    const auto name_len = body.get<std::uint16_t>();
    const std::string_view stored = body.bytes(name_len);
    if (stored != name) throw CorruptFileError("checkpoint: expected tensor '" + name + "', found '" + std::string(stored) + "'");
    const auto rank = body.get<std::uint8_t>();
    std::vector<std::size_t> shape;
    for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(body.get<std::uint32_t>());
    if (shape != t.shape()) throw CorruptFileError("checkpoint: shape mismatch for '" + name + "'");
    for (double& v : t.values()) v = body.get<double>();
  });
  if (body.remaining() != 0) throw CorruptFileError("checkpoint: trailing bytes after tensors");
  return Checkpoint{Model(config, std::move(params)), std::move(metadata)};
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::map<std::string, std::string>& metadata) {
  write_file_bytes(path, encode_checkpoint(model, metadata));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

// ---------------------------------------------------------------- trace

std::string encode_trace(const HiddenStateTrace& full) {
  const HiddenStateTrace trace = full.without_padding();
  if (trace.layers.empty()) throw DimensionError("encode_trace: trace has no layers");
  const std::size_t seq = trace.input.length();
  const std::size_t d = trace.layers[0].cols();
  Writer w;
  w.bytes("LWT1");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(trace.layers.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(seq));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (TokenRole r : trace.input.roles) w.put<std::uint8_t>(static_cast<std::uint8_t>(r));
  for (std::uint32_t id : trace.input.token_ids) w.put<std::uint32_t>(id);
  for (const Tensor& layer : trace.layers) {
    if (layer.rows() != seq || layer.cols() != d) {
      throw DimensionError("encode_trace: layer shape " + layer.shape_string() + " differs from [" +
                           std::to_string(seq) + ", " + std::to_string(d) + "]");
    }
    for (double v : layer.values()) w.put<float>(static_cast<float>(v));
  }
  return w.finish();
}

HiddenStateTrace decode_trace(std::string_view bytes) {
  const char* what = "trace";
  verify_envelope(bytes, "LWT1", what);
  verify_crc(bytes, what);
  Reader r(bytes.substr(0, bytes.size() - 4), what);
  r.bytes(4);
  const std::size_t n_layers = r.get<std::uint32_t>();
  const std::size_t seq = r.get<std::uint32_t>();
  const std::size_t d = r.get<std::uint32_t>();
  const std::size_t expected = seq + 4 * seq + 4 * n_layers * seq * d;
  if (r.remaining() != expected) {
    throw CorruptFileError("trace: payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                           std::to_string(expected));
  }
  HiddenStateTrace t;
  for (std::size_t i = 0; i < seq; ++i) {
    const auto role = r.get<std::uint8_t>();
    if (role > static_cast<std::uint8_t>(TokenRole::pad)) throw CorruptFileError("trace: bad role tag " + std::to_string(role));
    t.input.roles.push_back(static_cast<TokenRole>(role));
  }
  bool after_sep = false;
  for (std::size_t i = 0; i < seq; ++i) {
    const auto id = r.get<std::uint32_t>();
    t.input.token_ids.push_back(id);
    t.input.segment_ids.push_back(after_sep ? 1 : 0);
    if (id == Lexicon::kSep) after_sep = true;
  }
  t.input.attention_mask.assign(seq, 1);
  for (std::size_t l = 0; l < n_layers; ++l) {
    Tensor m({seq, d});
    for (double& v : m.values()) v = static_cast<double>(r.get<float>());
    t.layers.push_back(std::move(m));
  }
  return t;
}

void dump_trace(const std::filesystem::path& path, const HiddenStateTrace& trace) {
  write_file_bytes(path, encode_trace(trace));
}

HiddenStateTrace load_trace(const std::filesystem::path& path) { return decode_trace(read_file_bytes(path)); }

// ---------------------------------------------------------------- samples

std::string sample_to_json_line(const DeductionSample& s) {
  ordered_json j;
  j["context"] = s.context;
  j["question"] = s.question;
  j["answer"] = s.answer;
  j["supporting_facts"] = s.supporting_facts;
  ordered_json mentions = ordered_json::array();
  for (const auto& m : s.mentions) {
    mentions.push_back({{"sentence", m.sentence}, {"token", m.token}, {"entity", m.entity},
                        {"category", to_string(m.category)}});
  }
  j["mentions"] = mentions;
  ordered_json relations = ordered_json::array();
  for (const auto& r : s.relations) {
    relations.push_back({{"subject", r.subject}, {"object", r.object}, {"relation", to_string(r.relation)}});
  }
  j["relations"] = relations;
  j["split"] = to_string(s.split);
  return j.dump();
}

namespace {

DeductionSample sample_from_json(const json& j) {
  DeductionSample s;
  s.context = j.at("context").get<std::vector<std::vector<std::string>>>();
  s.question = j.at("question").get<std::vector<std::string>>();
  s.answer = j.at("answer").get<std::string>();
  s.supporting_facts = j.at("supporting_facts").get<std::vector<std::size_t>>();
  for (const auto& m : j.at("mentions")) {
    Mention x;
    x.sentence = m.at("sentence").get<int>();
    x.token = m.at("token").get<std::size_t>();
    x.entity = m.at("entity").get<std::string>();
    x.category = entity_category_from_string(m.at("category").get<std::string>());
    s.mentions.push_back(std::move(x));
  }
  for (const auto& r : j.at("relations")) {
    RelationTriple t;
    t.subject = r.at("subject").get<std::size_t>();
    t.object = r.at("object").get<std::size_t>();
    t.relation = relation_from_string(r.at("relation").get<std::string>());
    if (t.subject >= s.mentions.size() || t.object >= s.mentions.size()) {
      throw FormatError("relation refers to a missing mention");
    }
    s.relations.push_back(t);
  }
  s.split = split_from_string(j.at("split").get<std::string>());
  for (std::size_t sf : s.supporting_facts) {
    if (sf >= s.context.size()) throw FormatError("supporting fact " + std::to_string(sf) + " out of range");
  }
  return s;
}

}  // namespace

SampleImport parse_samples_jsonl(std::istream& in) {
  SampleImport out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (auto bad = first_invalid_utf8(line)) {
      out.errors.push_back(where + "invalid UTF-8 byte at offset " + std::to_string(*bad));
      continue;
    }
    try {
      out.samples.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      out.errors.push_back(where + "malformed sample: " + e.what());
    } catch (const Error& e) {
      out.errors.push_back(where + e.what());
    }
  }
  return out;
}

void write_samples_jsonl(const std::filesystem::path& path, const std::vector<DeductionSample>& samples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  for (const auto& s : samples) f << sample_to_json_line(s) << '\n';
  if (!f) throw FormatError("write failed for '" + path.string() + "'");
}

SampleImport read_samples_jsonl(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path.string() + "'");
  return parse_samples_jsonl(f);
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("write failed for '" + path.string() + "'");
}

}  // namespace layerscope
