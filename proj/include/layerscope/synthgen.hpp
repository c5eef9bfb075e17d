#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "layerscope/encoder.hpp"

namespace layerscope {

struct GeneratorConfig {
  std::size_t n_names = 192;
  std::size_t n_kinds = 6;
  std::size_t n_distractor_sentences = 6;
  std::uint64_t seed = 0;
  double train_ratio = 0.8;
  double dev_ratio = 0.1;
  double test_ratio = 0.1;

  void validate() const;
};

struct KindForms {
  std::string singular;
  std::string plural;
};

// Closed whitespace vocabulary: special tokens, function words, kind forms
// and names.
class Lexicon {
 public:
  static constexpr std::uint32_t kPad = 0;
  static constexpr std::uint32_t kCls = 1;
  static constexpr std::uint32_t kSep = 2;
  static constexpr std::uint32_t kUnk = 3;

  Lexicon() = default;
  Lexicon(std::vector<std::string> tokens, std::vector<KindForms> kinds, std::vector<std::string> names);
  static Lexicon build(const GeneratorConfig& config);

  std::size_t size() const { return tokens_.size(); }
  std::uint32_t id(const std::string& token) const;  // throws VocabError
  std::uint32_t id_or_unk(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(std::uint32_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<KindForms>& kinds() const { return kinds_; }
  const std::vector<std::string>& names() const { return names_; }

  // Index of the kind whose plural (or singular) form is `token`.
  std::optional<std::size_t> kind_index(const std::string& token) const;
  bool is_name(const std::string& token) const;

 private:
  std::vector<std::string> tokens_;
  std::vector<KindForms> kinds_;
  std::vector<std::string> names_;
  std::vector<std::pair<std::string, std::uint32_t>> sorted_;  // for lookup
};

enum class EntityCategory { person, animal_kind, none };
enum class Relation { afraid_of, is_a, none };

std::string to_string(EntityCategory c);
std::string to_string(Relation r);
EntityCategory entity_category_from_string(const std::string& s);
Relation relation_from_string(const std::string& s);

// A single-token mention. sentence == -1 addresses the question.
struct Mention {
  int sentence = -1;
  std::size_t token = 0;
  std::string entity;  // "person:<name>" or "kind:<singular>"
  EntityCategory category = EntityCategory::none;

  friend bool operator==(const Mention&, const Mention&) = default;
};

struct RelationTriple {
  std::size_t subject = 0;  // mention indices
  std::size_t object = 0;
  Relation relation = Relation::none;

  friend bool operator==(const RelationTriple&, const RelationTriple&) = default;
};

struct CorefPair {
  std::size_t first = 0;  // mention indices
  std::size_t second = 0;
  bool same_entity = false;
};

enum class Split { train, dev, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct DeductionSample {
  std::vector<std::vector<std::string>> context;
  std::vector<std::string> question;
  std::string answer;
  std::vector<std::size_t> supporting_facts;  // sorted sentence indices
  std::vector<Mention> mentions;
  std::vector<RelationTriple> relations;
  Split split = Split::train;

  // Every mention pair with its same-entity flag.
  std::vector<CorefPair> coref_pairs() const;

  friend bool operator==(const DeductionSample&, const DeductionSample&) = default;
};

// Symbolic oracle: follows "<name> is a <kind>" then "<kinds> are afraid of
// <kinds>". Returns the answer and the two supporting sentence indices, or
// nullopt when the chain is missing or ambiguous.
struct Derivation {
  std::string answer;
  std::vector<std::size_t> supporting_facts;
};
std::optional<Derivation> solve(const std::vector<std::vector<std::string>>& context,
                                const std::vector<std::string>& question, const Lexicon& lexicon);

// Builds a fully annotated sample from explicit context sentences and the
// queried name; answer and supporting facts come from `solve`.
DeductionSample make_sample(const std::vector<std::vector<std::string>>& context, const std::string& name,
                            const Lexicon& lexicon, Split split = Split::train);

// Annotates mentions (names and kind forms) and in-sentence relations.
void annotate(DeductionSample& sample, const Lexicon& lexicon);

std::vector<std::string> tokenize(const std::string& text);
std::string detokenize(const std::vector<std::string>& tokens);

// Samples are emitted in split order: train, dev, test. Entity names are
// partitioned across splits.
std::vector<DeductionSample> generate(const GeneratorConfig& config, std::size_t n_samples);

enum class QuestionType { abbreviation, entity, description, human, location, numeric };
std::string to_string(QuestionType t);
QuestionType question_type_from_string(const std::string& s);
const std::vector<QuestionType>& all_question_types();

struct TypedQuestion {
  std::vector<std::string> tokens;
  QuestionType type = QuestionType::entity;
};

// One templated question of every type over the entities of `sample`.
std::vector<TypedQuestion> question_variants(const DeductionSample& sample, const Lexicon& lexicon);
// Template-table classification of a question (the QUES label oracle).
std::optional<QuestionType> classify_question(const std::vector<std::string>& tokens);

// Token ranges (half-open, positions in the encoded input).
struct EncodedLayout {
  std::pair<std::size_t, std::size_t> question;
  std::vector<std::pair<std::size_t, std::size_t>> sentences;
  std::pair<std::size_t, std::size_t> candidates{0, 0};  // empty for classification
};

struct EncodedExample {
  EncodedInput input;
  Target target;
  EncodedLayout layout;
};

// [CLS] question [SEP] context [SEP] candidates [SEP]; gold span is the
// answer's candidate position.
EncodedExample encode_for_span(const DeductionSample& sample, const Lexicon& lexicon, std::size_t max_len);
// [CLS] question [SEP] context [SEP]; label = answer kind index.
EncodedExample encode_for_classification(const DeductionSample& sample, const Lexicon& lexicon,
                                         std::size_t max_len);
EncodedExample encode(const DeductionSample& sample, const Lexicon& lexicon, HeadKind head, std::size_t max_len);

// [CLS] question [SEP], used by the question-type probe.
EncodedInput encode_question_only(const std::vector<std::string>& question, const Lexicon& lexicon,
                                  std::size_t max_len);

// Encodes an arbitrary token sequence that already contains [CLS]/[SEP]
// markers: segment 0 up to and including the first [SEP], 1 afterwards.
// Unknown tokens map to [UNK].
EncodedInput encode_tokens(const std::vector<std::string>& tokens, const Lexicon& lexicon, std::size_t max_len);

// Context sentence index per position, -1 outside the context.
std::vector<int> sentence_indices(const EncodedInput& input, const Lexicon& lexicon);

}  // namespace layerscope
