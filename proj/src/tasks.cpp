#include "layerscope/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <optional>
#include <tuple>
#include <set>
#include <sstream>

#include <json.hpp>

#include "layerscope/error.hpp"

namespace layerscope {

std::string to_string(ProbeTask t) {
  switch (t) {
    case ProbeTask::nel: return "NEL";
    case ProbeTask::coref: return "COREF";
    case ProbeTask::rel: return "REL";
    case ProbeTask::ques: return "QUES";
    case ProbeTask::sup: return "SUP";
  }
  return "?";
}

ProbeTask probe_task_from_string(const std::string& s) {
  for (auto t : all_probe_tasks()) {
    if (to_string(t) == s) return t;
  }
  throw FormatError("unknown probing task '" + s + "' (expected NEL|COREF|REL|QUES|SUP)");
}

const std::vector<ProbeTask>& all_probe_tasks() {
  static const std::vector<ProbeTask> tasks = {ProbeTask::nel, ProbeTask::coref, ProbeTask::rel, ProbeTask::ques,
                                               ProbeTask::sup};
  return tasks;
}

void ProbingSample::validate() const {
  const std::string where = to_string(task) + " sample";
  if (tokens.empty()) throw FormatError(where + ": no tokens");
  const std::size_t want = (task == ProbeTask::coref || task == ProbeTask::rel) ? 2 : 1;
  if (spans.size() != want) {
    throw FormatError(where + ": expected " + std::to_string(want) + " span(s), got " + std::to_string(spans.size()));
  }
  for (const auto& [s, e] : spans) {
    if (s >= e || e > tokens.size()) {
      throw FormatError(where + ": span [" + std::to_string(s) + "," + std::to_string(e) + ") outside " +
                        std::to_string(tokens.size()) + " tokens");
    }
  }
  if (label.empty()) throw FormatError(where + ": empty label");
  if (task == ProbeTask::coref && label != "same" && label != "different") {
    throw FormatError(where + ": label '" + label + "' not in {same, different}");
  }
  if (task == ProbeTask::sup && label != "true" && label != "false") {
    throw FormatError(where + ": label '" + label + "' not in {true, false}");
  }
}

// ---------------------------------------------------------------- contexts

QaContext qa_context(const DeductionSample& sample, const Lexicon& lexicon, HeadKind head, std::size_t max_len) {
  const auto ex = encode(sample, lexicon, head, max_len);
  QaContext ctx;
  ctx.tokens.reserve(ex.input.length());
  for (auto id : ex.input.token_ids) ctx.tokens.push_back(lexicon.token(id));
  ctx.question = ex.layout.question;
  ctx.sentences = ex.layout.sentences;
  ctx.supporting_facts = sample.supporting_facts;
  return ctx;
}

QaContext single_hop_context(const std::vector<std::string>& question,
                             const std::vector<std::vector<std::string>>& sentences,
                             const std::vector<std::string>& answer_phrase) {
  QaContext ctx;
  ctx.tokens.push_back("[CLS]");
  ctx.tokens.insert(ctx.tokens.end(), question.begin(), question.end());
  ctx.question = {1, ctx.tokens.size()};
  ctx.tokens.push_back("[SEP]");
  std::optional<std::size_t> sf;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    const std::size_t begin = ctx.tokens.size();
    ctx.tokens.insert(ctx.tokens.end(), s.begin(), s.end());
    ctx.sentences.push_back({begin, ctx.tokens.size()});
    if (!sf && !answer_phrase.empty() &&
        std::search(s.begin(), s.end(), answer_phrase.begin(), answer_phrase.end()) != s.end()) {
      sf = i;
    }
  }
  ctx.tokens.push_back("[SEP]");
  if (sf) ctx.supporting_facts = {*sf};
  return ctx;
}

// ---------------------------------------------------------------- SUP

namespace {

void append_sup(const QaContext& pair, std::vector<ProbingSample>& out) {
  if (pair.sentences.empty()) throw FormatError("SUP: QA pair has no sentence boundaries");
  for (const auto& [s, e] : pair.sentences) {
    if (s >= e || e > pair.tokens.size()) throw FormatError("SUP: sentence boundary outside the token sequence");
  }
  if (pair.sentences.size() < 2) return;
  for (std::size_t i = 0; i < pair.sentences.size(); ++i) {
    const bool sf = std::find(pair.supporting_facts.begin(), pair.supporting_facts.end(), i) !=
                    pair.supporting_facts.end();
    out.push_back({pair.tokens, {pair.sentences[i]}, sf ? "true" : "false", ProbeTask::sup});
  }
}

}  // namespace

std::vector<ProbingSample> build_supporting_fact_task(const std::vector<QaContext>& pairs) {
  std::vector<ProbingSample> out;
  for (const auto& p : pairs) append_sup(p, out);
  return out;
}

// ---------------------------------------------------------------- QUES

const std::vector<std::string>& question_type_inventory() {
  static const std::vector<std::string> inv = [] {
    std::vector<std::string> v;
    for (auto t : all_question_types()) v.push_back(to_string(t));
    return v;
  }();
  return inv;
}

std::vector<ProbingSample> build_question_type_task(const std::vector<LabeledQuestion>& questions) {
  const auto& inv = question_type_inventory();
  std::vector<ProbingSample> out;
  out.reserve(questions.size());
  for (const auto& q : questions) {
    if (std::find(inv.begin(), inv.end(), q.type) == inv.end()) {
      throw FormatError("QUES: unknown question type '" + q.type + "'");
    }
    if (q.tokens.empty()) throw FormatError("QUES: empty question");
    ProbingSample s;
    s.tokens.push_back("[CLS]");
    s.tokens.insert(s.tokens.end(), q.tokens.begin(), q.tokens.end());
    s.tokens.push_back("[SEP]");
    s.spans = {{1, 1 + q.tokens.size()}};
    s.label = q.type;
    s.task = ProbeTask::ques;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LabeledQuestion> labeled_questions(const DeductionSample& sample, const Lexicon& lexicon) {
  std::vector<LabeledQuestion> out;
  for (auto& q : question_variants(sample, lexicon)) out.push_back({std::move(q.tokens), to_string(q.type)});
  return out;
}

// ---------------------------------------------------------------- NEL / COREF / REL

namespace {

std::size_t mention_position(const Mention& m, const QaContext& ctx) {
  const std::size_t base = m.sentence < 0 ? ctx.question.first : ctx.sentences.at(static_cast<std::size_t>(m.sentence)).first;
  const std::size_t pos = base + m.token;
  if (pos >= ctx.tokens.size()) throw FormatError("mention position outside the encoded input");
  return pos;
}

void append_edges(const DeductionSample& sample, const QaContext& ctx, Rng& rng, EdgeTaskSets& out) {
  std::vector<Span> span(sample.mentions.size());
  for (std::size_t i = 0; i < sample.mentions.size(); ++i) {
    const std::size_t p = mention_position(sample.mentions[i], ctx);
    span[i] = {p, p + 1};
    out.nel.push_back({ctx.tokens, {span[i]}, to_string(sample.mentions[i].category), ProbeTask::nel});
  }

  std::vector<CorefPair> same, different;
  for (const auto& p : sample.coref_pairs()) (p.same_entity ? same : different).push_back(p);
  const std::size_t k = std::min(same.size(), different.size());
  rng.shuffle(same);
  rng.shuffle(different);
  std::vector<CorefPair> chosen(same.begin(), same.begin() + static_cast<std::ptrdiff_t>(k));
  chosen.insert(chosen.end(), different.begin(), different.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(chosen.begin(), chosen.end(),
            [](const CorefPair& a, const CorefPair& b) { return std::tie(a.first, a.second) < std::tie(b.first, b.second); });
  for (const auto& p : chosen) {
    out.coref.push_back({ctx.tokens, {span[p.first], span[p.second]}, p.same_entity ? "same" : "different",
                         ProbeTask::coref});
  }

  std::set<std::pair<std::size_t, std::size_t>> related;
  for (const auto& r : sample.relations) {
    out.rel.push_back({ctx.tokens, {span[r.subject], span[r.object]}, to_string(r.relation), ProbeTask::rel});
    related.insert({std::min(r.subject, r.object), std::max(r.subject, r.object)});
  }
  std::vector<std::pair<std::size_t, std::size_t>> unrelated;
  for (std::size_t i = 0; i < sample.mentions.size(); ++i) {
    for (std::size_t j = i + 1; j < sample.mentions.size(); ++j) {
      if (related.count({i, j}) || sample.mentions[i].entity == sample.mentions[j].entity) continue;
      unrelated.push_back({i, j});
    }
  }
  rng.shuffle(unrelated);
  unrelated.resize(std::min(unrelated.size(), sample.relations.size() / 2));
  std::sort(unrelated.begin(), unrelated.end());
  for (const auto& [i, j] : unrelated) {
    out.rel.push_back({ctx.tokens, {span[i], span[j]}, to_string(Relation::none), ProbeTask::rel});
  }
}

}  // namespace

EdgeTaskSets build_entity_coref_relation_tasks(const std::vector<DeductionSample>& samples, const Lexicon& lexicon,
                                               HeadKind head, std::size_t max_len, std::uint64_t seed) {
  EdgeTaskSets out;
  Rng rng(seed);
  for (const auto& s : samples) append_edges(s, qa_context(s, lexicon, head, max_len), rng, out);
  return out;
}

// ---------------------------------------------------------------- suite

std::map<ProbeTask, ProbeSplits> build_probe_suite(const std::vector<DeductionSample>& samples,
                                                   const Lexicon& lexicon, const ProbeSuiteConfig& config) {
  std::map<ProbeTask, ProbeSplits> suite;
  for (auto t : all_probe_tasks()) suite[t];
  Rng rng(config.seed);
  auto target = [&](ProbeSplits& s, Split split) -> std::vector<ProbingSample>& {
    return split == Split::train ? s.train : (split == Split::dev ? s.dev : s.test);
  };
  auto cap = [&](Split split) {
    return split == Split::train ? config.max_train : (split == Split::dev ? config.max_dev : config.max_test);
  };
  // Whole QA pairs are added while they fit under the cap, which keeps
  // per-pair balancing (COREF 1:1) intact.
  auto add = [&](ProbeTask task, Split split, std::vector<ProbingSample>&& fresh) {
    auto& dst = target(suite[task], split);
    if (dst.size() + fresh.size() > cap(split)) return;
    std::move(fresh.begin(), fresh.end(), std::back_inserter(dst));
  };
  for (const auto& s : samples) {
    const QaContext ctx = qa_context(s, lexicon, config.head, config.max_len);
    std::vector<ProbingSample> sup;
    append_sup(ctx, sup);
    add(ProbeTask::sup, s.split, std::move(sup));
    add(ProbeTask::ques, s.split, build_question_type_task(labeled_questions(s, lexicon)));
    EdgeTaskSets edges;
    append_edges(s, ctx, rng, edges);
    add(ProbeTask::nel, s.split, std::move(edges.nel));
    add(ProbeTask::coref, s.split, std::move(edges.coref));
    add(ProbeTask::rel, s.split, std::move(edges.rel));
  }
  return suite;
}

// ---------------------------------------------------------------- labels

std::vector<std::string> label_inventory(const std::vector<ProbingSample>& samples) {
  std::set<std::string> labels;
  for (const auto& s : samples) labels.insert(s.label);
  return {labels.begin(), labels.end()};
}

std::map<std::string, std::size_t> class_balance(const std::vector<ProbingSample>& samples) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.label];
  return counts;
}

std::string format_class_balance(ProbeTask task, const std::vector<ProbingSample>& samples) {
  std::ostringstream os;
  os << to_string(task) << " n=" << samples.size();
  for (const auto& [label, n] : class_balance(samples)) os << ' ' << label << '=' << n;
  return os.str();
}

// ---------------------------------------------------------------- JSONL

namespace {

ProbingSample sample_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("record is not a JSON object");
  for (const char* key : {"tokens", "spans", "label", "task"}) {
    if (!j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  }
  ProbingSample s;
  const auto& tokens = j.at("tokens");
  if (!tokens.is_array()) throw FormatError("'tokens' must be an array of strings");
  for (const auto& t : tokens) {
    if (!t.is_string()) throw FormatError("'tokens' must be an array of strings");
    s.tokens.push_back(t.get<std::string>());
  }
  const auto& spans = j.at("spans");
  if (!spans.is_array()) throw FormatError("'spans' must be an array of [start, end] pairs");
  for (const auto& sp : spans) {
    if (!sp.is_array() || sp.size() != 2 || !sp[0].is_number_unsigned() || !sp[1].is_number_unsigned()) {
      throw FormatError("'spans' must be an array of [start, end] pairs of non-negative integers");
    }
    s.spans.push_back({sp[0].get<std::size_t>(), sp[1].get<std::size_t>()});
  }
  if (!j.at("label").is_string()) throw FormatError("'label' must be a string");
  if (!j.at("task").is_string()) throw FormatError("'task' must be a string");
  s.label = j.at("label").get<std::string>();
  s.task = probe_task_from_string(j.at("task").get<std::string>());
  s.validate();
  return s;
}

}  // namespace

std::optional<std::size_t> first_invalid_utf8(std::string_view text) {
  const auto* b = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned c = b[i];
    std::size_t len;
    unsigned cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((b[i + k] & 0xC0) != 0x80) return i + k;
      cp = (cp << 6) | (b[i + k] & 0x3F);
    }
    static constexpr unsigned kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::nullopt;
}

ImportResult parse_edge_jsonl(const std::string& text) {
  ImportResult result;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (auto bad = first_invalid_utf8(line)) {
      result.errors.push_back("line " + std::to_string(lineno) + ": invalid UTF-8 byte at offset " +
                              std::to_string(*bad));
      continue;
    }
    try {
      result.samples.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      result.errors.push_back("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
    } catch (const FormatError& e) {
      result.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return result;
}

ImportResult import_edge_jsonl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_edge_jsonl(ss.str());
}

std::string to_edge_jsonl(const std::vector<ProbingSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& [b, e] : s.spans) spans.push_back({b, e});
    nlohmann::ordered_json j;
    j["tokens"] = s.tokens;
    j["spans"] = spans;
    j["label"] = s.label;
    j["task"] = to_string(s.task);
    out += j.dump() + "\n";
  }
  return out;
}

void write_edge_jsonl(const std::string& path, const std::vector<ProbingSample>& samples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write '" + path + "'");
  f << to_edge_jsonl(samples);
}

}  // namespace layerscope
