#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "layerscope/synthgen.hpp"

namespace layerscope {

enum class ProbeTask { nel, coref, rel, ques, sup };
std::string to_string(ProbeTask t);  // "NEL", "COREF", ...
ProbeTask probe_task_from_string(const std::string& s);
const std::vector<ProbeTask>& all_probe_tasks();

using Span = std::pair<std::size_t, std::size_t>;  // half-open token range

struct ProbingSample {
  std::vector<std::string> tokens;  // full model input, special tokens included
  std::vector<Span> spans;
  std::string label;
  ProbeTask task = ProbeTask::nel;

  // Throws FormatError on bad span count/bounds or an out-of-inventory label
  // for the closed binary tasks.
  void validate() const;

  friend bool operator==(const ProbingSample&, const ProbingSample&) = default;
};

// A QA pair laid out as the model sees it, with sentence boundaries.
struct QaContext {
  std::vector<std::string> tokens;
  Span question{0, 0};
  std::vector<Span> sentences;
  std::vector<std::size_t> supporting_facts;
};

QaContext qa_context(const DeductionSample& sample, const Lexicon& lexicon, HeadKind head, std::size_t max_len);
// Single-hop import: the supporting fact is the first sentence containing
// the answer phrase.
QaContext single_hop_context(const std::vector<std::string>& question,
                             const std::vector<std::vector<std::string>>& sentences,
                             const std::vector<std::string>& answer_phrase);

// One sample per (question, sentence); pairs with fewer than two sentences
// are dropped.
std::vector<ProbingSample> build_supporting_fact_task(const std::vector<QaContext>& pairs);

struct LabeledQuestion {
  std::vector<std::string> tokens;  // question words, no special tokens
  std::string type;
};
const std::vector<std::string>& question_type_inventory();
std::vector<ProbingSample> build_question_type_task(const std::vector<LabeledQuestion>& questions);
std::vector<LabeledQuestion> labeled_questions(const DeductionSample& sample, const Lexicon& lexicon);

struct EdgeTaskSets {
  std::vector<ProbingSample> nel;
  std::vector<ProbingSample> coref;
  std::vector<ProbingSample> rel;
};

// NEL: every mention; COREF: all same-entity pairs plus an equal number of
// sampled different-entity pairs; REL: every annotated triple plus sampled
// unrelated mention pairs labelled "none".
EdgeTaskSets build_entity_coref_relation_tasks(const std::vector<DeductionSample>& samples, const Lexicon& lexicon,
                                               HeadKind head, std::size_t max_len, std::uint64_t seed);

struct ProbeSplits {
  std::vector<ProbingSample> train, dev, test;
};

struct ProbeSuiteConfig {
  std::size_t max_train = 10000;
  std::size_t max_dev = 2000;
  std::size_t max_test = 2000;
  HeadKind head = HeadKind::classification;
  std::size_t max_len = 128;
  std::uint64_t seed = 0;
};

// All five tasks built from the QA samples of the matching split, truncated
// to the configured caps.
std::map<ProbeTask, ProbeSplits> build_probe_suite(const std::vector<DeductionSample>& samples,
                                                   const Lexicon& lexicon, const ProbeSuiteConfig& config);

// Sorted distinct labels.
std::vector<std::string> label_inventory(const std::vector<ProbingSample>& samples);
std::map<std::string, std::size_t> class_balance(const std::vector<ProbingSample>& samples);
std::string format_class_balance(ProbeTask task, const std::vector<ProbingSample>& samples);

// Byte offset of the first byte that breaks UTF-8 well-formedness.
std::optional<std::size_t> first_invalid_utf8(std::string_view text);

// Edge-probe JSONL: {"tokens": [...], "spans": [[s,e], ...], "label": "...", "task": "..."}.
struct ImportResult {
  std::vector<ProbingSample> samples;
  std::vector<std::string> errors;  // "line N: message"
};
ImportResult import_edge_jsonl(const std::string& path);
ImportResult parse_edge_jsonl(const std::string& text);
std::string to_edge_jsonl(const std::vector<ProbingSample>& samples);
void write_edge_jsonl(const std::string& path, const std::vector<ProbingSample>& samples);

}  // namespace layerscope
