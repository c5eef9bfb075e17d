#include "layerscope/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "layerscope/error.hpp"

namespace layerscope {

namespace {

const std::vector<std::string> kSpecials{"[PAD]", "[CLS]", "[SEP]", "[UNK]"};
const std::vector<std::string> kFunctionWords{".",     "?",     "what",  "is",           "a",
                                              "are",   "afraid", "of",   "the",          "abbreviation",
                                              "for",   "how",   "described", "who",       "where",
                                              "many",  "there"};

const std::vector<KindForms> kAllKinds{
    {"mouse", "mice"}, {"sheep", "sheep"}, {"wolf", "wolves"}, {"cat", "cats"},   {"lion", "lions"},
    {"swan", "swans"}, {"dog", "dogs"},    {"bear", "bears"},  {"fox", "foxes"}, {"goat", "goats"},
};

// bAbI-style first names; the first four appear in the reference deduction
// example.
const std::vector<std::string> kAllNames{
    "emily",    "winona",   "gertrude", "jessica",  "bill",     "fred",     "jeff",     "mary",
    "john",     "sandra",   "daniel",   "julie",    "brian",    "greg",     "lily",     "bernhard",
    "julius",   "yann",     "antoine",  "sumit",    "jason",    "kate",     "anna",     "oliver",
    "sophia",   "liam",     "emma",     "noah",     "ava",      "elijah",   "mia",      "lucas",
    "amelia",   "mason",    "harper",   "logan",    "evelyn",   "ethan",    "abigail",  "james",
    "ella",     "aiden",    "scarlett", "jacob",    "grace",    "michael",  "chloe",    "alexander",
    "victoria", "benjamin", "riley",    "william",  "aria",     "henry",    "zoey",     "sebastian",
    "nora",     "jack",     "hannah",   "owen",     "layla",    "samuel",   "zoe",      "matthew",
    "stella",   "joseph",   "hazel",    "levi",     "ellie",    "david",    "paisley",  "wyatt",
    "audrey",   "carter",   "skylar",   "julian",   "violet",   "luke",     "claire",   "grayson",
    "bella",    "isaac",    "aurora",   "jayden",   "lucy",     "gabriel",  "savannah", "anthony",
    "caroline", "dylan",    "genesis",  "leo",      "aaliyah",  "lincoln",  "kennedy",  "jaxon",
    "kinsley",  "asher",    "allison",  "christopher", "maya",  "josiah",   "sarah",    "andrew",
    "madelyn",  "thomas",   "adeline",  "joshua",   "alexa",    "ezra",     "ariana",   "hudson",
    "elena",    "charles",  "gabriella", "caleb",   "naomi",    "isaiah",   "alice",    "ryan",
    "sadie",    "nathan",   "hailey",   "adrian",   "eva",      "christian", "emilia",  "maverick",
    "autumn",   "colton",   "quinn",    "elias",    "nevaeh",   "aaron",    "piper",    "eli",
    "ruby",     "landon",   "serenity", "jonathan", "willow",   "nolan",    "everly",   "hunter",
    "cora",     "cameron",  "kaylee",   "connor",   "lydia",    "santiago", "aubree",   "jeremiah",
    "arianna",  "ezekiel",  "eliana",   "angel",    "peyton",   "roman",    "melanie",  "easton",
    "gianna",   "miles",    "isabelle", "robert",   "julia",    "jameson",  "valentina", "nicholas",
    "nova",     "greyson",  "clara",    "cooper",   "vivian",   "ian",      "reagan",   "carson",
    "mackenzie", "axel",    "madeline", "jaxson",   "brielle",  "dominic",  "delilah",  "leonardo",
    "isla",     "luca",     "rylee",    "austin",   "katherine", "jordan",  "sophie",   "adam",
    "josephine", "xavier",  "ivy",      "jose",     "liliana",  "jace",     "jade",     "everett",
};

std::vector<std::string> isa_sentence(const std::string& name, const KindForms& kind) {
  return {name, "is", "a", kind.singular, "."};
}

std::vector<std::string> fear_sentence(const KindForms& subject, const KindForms& object) {
  return {subject.plural, "are", "afraid", "of", object.plural, "."};
}

bool is_isa(const std::vector<std::string>& s) {
  return s.size() == 5 && s[1] == "is" && s[2] == "a" && s[4] == ".";
}

bool is_fear(const std::vector<std::string>& s) {
  return s.size() == 6 && s[1] == "are" && s[2] == "afraid" && s[3] == "of" && s[5] == ".";
}

}  // namespace

// ---------------------------------------------------------------- config

void GeneratorConfig::validate() const {
  if (n_names < 2) throw ParameterError("n_names must be >= 2");
  if (n_kinds < 3) throw ParameterError("n_kinds must be >= 3");
  if (n_names > kAllNames.size()) {
    throw ParameterError("n_names exceeds the built-in name inventory of " + std::to_string(kAllNames.size()));
  }
  if (n_kinds > kAllKinds.size()) {
    throw ParameterError("n_kinds exceeds the built-in kind inventory of " + std::to_string(kAllKinds.size()));
  }
  if (train_ratio < 0 || dev_ratio < 0 || test_ratio < 0 ||
      std::abs(train_ratio + dev_ratio + test_ratio - 1.0) > 1e-9) {
    throw ParameterError("split ratios must be non-negative and sum to 1");
  }
}

// ---------------------------------------------------------------- lexicon

Lexicon::Lexicon(std::vector<std::string> tokens, std::vector<KindForms> kinds, std::vector<std::string> names)
    : tokens_(std::move(tokens)), kinds_(std::move(kinds)), names_(std::move(names)) {
  if (tokens_.size() < kSpecials.size() || !std::equal(kSpecials.begin(), kSpecials.end(), tokens_.begin())) {
    throw FormatError("lexicon must start with [PAD] [CLS] [SEP] [UNK]");
  }
  for (std::uint32_t i = 0; i < tokens_.size(); ++i) sorted_.emplace_back(tokens_[i], i);
  std::sort(sorted_.begin(), sorted_.end());
  for (std::size_t i = 1; i < sorted_.size(); ++i) {
    if (sorted_[i].first == sorted_[i - 1].first) throw FormatError("duplicate lexicon entry '" + sorted_[i].first + "'");
  }
  for (const auto& k : kinds_) {
    if (!contains(k.singular) || !contains(k.plural)) throw FormatError("kind form missing from lexicon");
  }
  for (const auto& n : names_) {
    if (!contains(n)) throw FormatError("name '" + n + "' missing from lexicon");
  }
}

Lexicon Lexicon::build(const GeneratorConfig& config) {
  config.validate();
  std::vector<std::string> tokens = kSpecials;
  tokens.insert(tokens.end(), kFunctionWords.begin(), kFunctionWords.end());
  std::vector<KindForms> kinds(kAllKinds.begin(), kAllKinds.begin() + static_cast<std::ptrdiff_t>(config.n_kinds));
  for (const auto& k : kinds) {
    tokens.push_back(k.singular);
    if (k.plural != k.singular) tokens.push_back(k.plural);
  }
  std::vector<std::string> names(kAllNames.begin(), kAllNames.begin() + static_cast<std::ptrdiff_t>(config.n_names));
  tokens.insert(tokens.end(), names.begin(), names.end());
  return Lexicon(std::move(tokens), std::move(kinds), std::move(names));
}

bool Lexicon::contains(const std::string& token) const {
  auto it = std::lower_bound(sorted_.begin(), sorted_.end(), std::make_pair(token, std::uint32_t{0}));
  return it != sorted_.end() && it->first == token;
}

std::uint32_t Lexicon::id(const std::string& token) const {
  auto it = std::lower_bound(sorted_.begin(), sorted_.end(), std::make_pair(token, std::uint32_t{0}));
  if (it == sorted_.end() || it->first != token) throw VocabError("token '" + token + "' not in lexicon");
  return it->second;
}

std::uint32_t Lexicon::id_or_unk(const std::string& token) const {
  return contains(token) ? id(token) : kUnk;
}

const std::string& Lexicon::token(std::uint32_t id) const {
  if (id >= tokens_.size()) throw VocabError("token id " + std::to_string(id) + " not in lexicon");
  return tokens_[id];
}

std::optional<std::size_t> Lexicon::kind_index(const std::string& token) const {
  for (std::size_t i = 0; i < kinds_.size(); ++i) {
    if (kinds_[i].plural == token || kinds_[i].singular == token) return i;
  }
  return std::nullopt;
}

bool Lexicon::is_name(const std::string& token) const {
  return std::find(names_.begin(), names_.end(), token) != names_.end();
}

// ---------------------------------------------------------------- enums

std::string to_string(EntityCategory c) {
  switch (c) {
    case EntityCategory::person: return "person";
    case EntityCategory::animal_kind: return "animal-kind";
    case EntityCategory::none: return "none";
  }
  return "none";
}

std::string to_string(Relation r) {
  switch (r) {
    case Relation::afraid_of: return "afraid-of";
    case Relation::is_a: return "is-a";
    case Relation::none: return "none";
  }
  return "none";
}

EntityCategory entity_category_from_string(const std::string& s) {
  for (auto c : {EntityCategory::person, EntityCategory::animal_kind, EntityCategory::none}) {
    if (to_string(c) == s) return c;
  }
  throw FormatError("unknown entity category '" + s + "'");
}

Relation relation_from_string(const std::string& s) {
  for (auto r : {Relation::afraid_of, Relation::is_a, Relation::none}) {
    if (to_string(r) == s) return r;
  }
  throw FormatError("unknown relation '" + s + "'");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

std::string to_string(QuestionType t) {
  switch (t) {
    case QuestionType::abbreviation: return "abbreviation";
    case QuestionType::entity: return "entity";
    case QuestionType::description: return "description";
    case QuestionType::human: return "human";
    case QuestionType::location: return "location";
    case QuestionType::numeric: return "numeric";
  }
  return "entity";
}

const std::vector<QuestionType>& all_question_types() {
  static const std::vector<QuestionType> types{QuestionType::abbreviation, QuestionType::entity,
                                               QuestionType::description,  QuestionType::human,
                                               QuestionType::location,     QuestionType::numeric};
  return types;
}

QuestionType question_type_from_string(const std::string& s) {
  for (auto t : all_question_types()) {
    if (to_string(t) == s) return t;
  }
  throw FormatError("unknown question type '" + s + "'");
}

// ---------------------------------------------------------------- samples

std::vector<CorefPair> DeductionSample::coref_pairs() const {
  std::vector<CorefPair> pairs;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    for (std::size_t j = i + 1; j < mentions.size(); ++j) {
      pairs.push_back({i, j, mentions[i].entity == mentions[j].entity});
    }
  }
  return pairs;
}

std::optional<Derivation> solve(const std::vector<std::vector<std::string>>& context,
                                const std::vector<std::string>& question, const Lexicon& lexicon) {
  std::vector<std::string> asked;
  for (const auto& t : question) {
    if (lexicon.is_name(t)) asked.push_back(t);
  }
  if (asked.size() != 1) return std::nullopt;

  std::optional<std::size_t> isa_idx;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (is_isa(context[i]) && context[i][0] == asked[0]) {
      if (isa_idx) return std::nullopt;
      isa_idx = i;
    }
  }
  if (!isa_idx) return std::nullopt;
  const auto kind = lexicon.kind_index(context[*isa_idx][3]);
  if (!kind) return std::nullopt;

  std::optional<std::size_t> fear_idx;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (is_fear(context[i]) && context[i][0] == lexicon.kinds()[*kind].plural) {
      if (fear_idx) return std::nullopt;
      fear_idx = i;
    }
  }
  if (!fear_idx) return std::nullopt;
  Derivation d;
  d.answer = context[*fear_idx][4];
  d.supporting_facts = {std::min(*isa_idx, *fear_idx), std::max(*isa_idx, *fear_idx)};
  return d;
}

void annotate(DeductionSample& sample, const Lexicon& lexicon) {
  sample.mentions.clear();
  sample.relations.clear();
  auto mention_for = [&](int sentence, std::size_t token, const std::string& word) -> std::optional<Mention> {
    if (lexicon.is_name(word)) return Mention{sentence, token, "person:" + word, EntityCategory::person};
    if (auto k = lexicon.kind_index(word)) {
      return Mention{sentence, token, "kind:" + lexicon.kinds()[*k].singular, EntityCategory::animal_kind};
    }
    return std::nullopt;
  };
  for (std::size_t t = 0; t < sample.question.size(); ++t) {
    if (auto m = mention_for(-1, t, sample.question[t])) sample.mentions.push_back(*m);
  }
  for (std::size_t s = 0; s < sample.context.size(); ++s) {
    const auto& sentence = sample.context[s];
    std::vector<std::size_t> in_sentence;
    for (std::size_t t = 0; t < sentence.size(); ++t) {
      if (auto m = mention_for(static_cast<int>(s), t, sentence[t])) {
        in_sentence.push_back(sample.mentions.size());
        sample.mentions.push_back(*m);
      }
    }
    if (in_sentence.size() == 2) {
      const Relation r = is_isa(sentence) ? Relation::is_a : (is_fear(sentence) ? Relation::afraid_of : Relation::none);
      if (r != Relation::none) sample.relations.push_back({in_sentence[0], in_sentence[1], r});
    }
  }
}

DeductionSample make_sample(const std::vector<std::vector<std::string>>& context, const std::string& name,
                            const Lexicon& lexicon, Split split) {
  DeductionSample sample;
  sample.context = context;
  sample.question = {"what", "is", name, "afraid", "of", "?"};
  sample.split = split;
  auto derivation = solve(context, sample.question, lexicon);
  if (!derivation) throw GenerationError("context does not determine a unique answer for '" + name + "'");
  sample.answer = derivation->answer;
  sample.supporting_facts = derivation->supporting_facts;
  annotate(sample, lexicon);
  return sample;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(current);
    current.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else if (ch == '.' || ch == '?') {
      flush();
      out.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  flush();
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty() && t != "." && t != "?") out.push_back(' ');
    out += t;
  }
  return out;
}

// ---------------------------------------------------------------- generation

std::vector<DeductionSample> generate(const GeneratorConfig& config, std::size_t n_samples) {
  config.validate();
  const Lexicon lexicon = Lexicon::build(config);
  const auto& kinds = lexicon.kinds();
  Rng rng(config.seed);

  // Partition names across splits.
  std::vector<std::string> names = lexicon.names();
  rng.shuffle(names);
  const auto n_train_names = static_cast<std::size_t>(std::llround(config.train_ratio * static_cast<double>(names.size())));
  const auto n_dev_names = static_cast<std::size_t>(std::llround(config.dev_ratio * static_cast<double>(names.size())));
  std::vector<std::vector<std::string>> pools(3);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::size_t p = i < n_train_names ? 0 : (i < n_train_names + n_dev_names ? 1 : 2);
    pools[p].push_back(names[i]);
  }

  const auto n_train = static_cast<std::size_t>(std::llround(config.train_ratio * static_cast<double>(n_samples)));
  const auto n_dev = std::min(n_samples - n_train,
                              static_cast<std::size_t>(std::llround(config.dev_ratio * static_cast<double>(n_samples))));

  const std::size_t n_fear_distractors = std::min(config.n_kinds - 1, config.n_distractor_sentences / 2);
  const std::size_t n_isa_distractors = config.n_distractor_sentences - n_fear_distractors;

  std::vector<DeductionSample> out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Split split = i < n_train ? Split::train : (i < n_train + n_dev ? Split::dev : Split::test);
    const auto& pool = pools[static_cast<std::size_t>(split)];
    if (pool.size() < 1 + n_isa_distractors) {
      throw GenerationError("split '" + to_string(split) + "' has " + std::to_string(pool.size()) +
                            " names; need " + std::to_string(1 + n_isa_distractors) + " distinct names per sample");
    }
    // Each kind fears exactly one other kind.
    std::vector<std::size_t> fears(kinds.size());
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      std::size_t other = rng.index(kinds.size() - 1);
      fears[k] = other >= k ? other + 1 : other;
    }
    std::vector<std::string> chosen_names = pool;
    rng.shuffle(chosen_names);
    chosen_names.resize(1 + n_isa_distractors);
    const std::string& asked = chosen_names[0];
    const std::size_t kind_a = rng.index(kinds.size());

    std::vector<std::vector<std::string>> sentences;
    sentences.push_back(isa_sentence(asked, kinds[kind_a]));
    sentences.push_back(fear_sentence(kinds[kind_a], kinds[fears[kind_a]]));
    std::vector<std::size_t> other_kinds;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      if (k != kind_a) other_kinds.push_back(k);
    }
    rng.shuffle(other_kinds);
    for (std::size_t j = 0; j < n_fear_distractors; ++j) {
      sentences.push_back(fear_sentence(kinds[other_kinds[j]], kinds[fears[other_kinds[j]]]));
    }
    for (std::size_t j = 1; j <= n_isa_distractors; ++j) {
      sentences.push_back(isa_sentence(chosen_names[j], kinds[rng.index(kinds.size())]));
    }
    rng.shuffle(sentences);

    DeductionSample sample = make_sample(sentences, asked, lexicon, split);
    if (sample.answer != kinds[fears[kind_a]].plural) {
      throw GenerationError("internal: solver disagrees with construction");
    }
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------- questions

std::vector<TypedQuestion> question_variants(const DeductionSample& sample, const Lexicon& lexicon) {
  std::string name;
  for (const auto& t : sample.question) {
    if (lexicon.is_name(t)) name = t;
  }
  auto derivation = solve(sample.context, sample.question, lexicon);
  if (name.empty() || !derivation) throw FormatError("sample has no resolvable queried name");
  const std::size_t isa_idx = is_isa(sample.context[derivation->supporting_facts[0]])
                                  ? derivation->supporting_facts[0]
                                  : derivation->supporting_facts[1];
  const auto kind_a = *lexicon.kind_index(sample.context[isa_idx][3]);
  const auto& forms = lexicon.kinds()[kind_a];
  return {
      {{"what", "is", "the", "abbreviation", "for", forms.plural, "?"}, QuestionType::abbreviation},
      {{"what", "is", name, "afraid", "of", "?"}, QuestionType::entity},
      {{"how", "is", name, "described", "?"}, QuestionType::description},
      {{"who", "is", "a", forms.singular, "?"}, QuestionType::human},
      {{"where", "is", name, "?"}, QuestionType::location},
      {{"how", "many", derivation->answer, "are", "there", "?"}, QuestionType::numeric},
  };
}

std::optional<QuestionType> classify_question(const std::vector<std::string>& q) {
  auto starts = [&](std::initializer_list<const char*> prefix) {
    if (q.size() < prefix.size()) return false;
    std::size_t i = 0;
    for (const char* p : prefix) {
      if (q[i++] != p) return false;
    }
    return true;
  };
  if (starts({"what", "is", "the", "abbreviation", "for"})) return QuestionType::abbreviation;
  if (starts({"what", "is"}) && q.size() >= 5 && q[q.size() - 3] == "afraid" && q[q.size() - 2] == "of") {
    return QuestionType::entity;
  }
  if (starts({"how", "many"})) return QuestionType::numeric;
  if (starts({"how", "is"}) && q.size() >= 2 && q[q.size() - 2] == "described") return QuestionType::description;
  if (starts({"who"})) return QuestionType::human;
  if (starts({"where"})) return QuestionType::location;
  return std::nullopt;
}

// ---------------------------------------------------------------- encoding

namespace {

struct Builder {
  const Lexicon& lexicon;
  EncodedInput input;

  void push(const std::string& token, std::uint32_t segment, TokenRole role) {
    input.token_ids.push_back(lexicon.id(token));
    input.segment_ids.push_back(segment);
    input.attention_mask.push_back(1);
    input.roles.push_back(role);
  }
};

EncodedExample encode_common(const DeductionSample& sample, const Lexicon& lexicon, std::size_t max_len,
                             bool with_candidates) {
  EncodedExample ex;
  Builder b{lexicon, {}};
  b.push("[CLS]", 0, TokenRole::special);
  const std::size_t q0 = b.input.length();
  for (const auto& t : sample.question) b.push(t, 0, TokenRole::question);
  ex.layout.question = {q0, b.input.length()};
  b.push("[SEP]", 0, TokenRole::special);
  for (std::size_t s = 0; s < sample.context.size(); ++s) {
    const bool supporting = std::find(sample.supporting_facts.begin(), sample.supporting_facts.end(), s) !=
                            sample.supporting_facts.end();
    const std::size_t start = b.input.length();
    for (const auto& t : sample.context[s]) {
      TokenRole role = supporting ? TokenRole::supporting_fact : TokenRole::context;
      if (supporting && t == sample.answer) role = TokenRole::answer;
      b.push(t, 1, role);
    }
    ex.layout.sentences.emplace_back(start, b.input.length());
  }
  b.push("[SEP]", 1, TokenRole::special);
  if (with_candidates) {
    const std::size_t c0 = b.input.length();
    std::size_t gold = 0;
    for (const auto& k : lexicon.kinds()) {
      const bool is_answer = k.plural == sample.answer;
      if (is_answer) gold = b.input.length();
      b.push(k.plural, 1, is_answer ? TokenRole::answer : TokenRole::context);
    }
    ex.layout.candidates = {c0, b.input.length()};
    b.push("[SEP]", 1, TokenRole::special);
    ex.target = Target{HeadKind::span, 0, gold, gold};
  } else {
    const auto label = lexicon.kind_index(sample.answer);
    if (!label) throw FormatError("answer '" + sample.answer + "' is not a known kind");
    ex.target = Target{HeadKind::classification, *label, 0, 0};
  }
  if (b.input.length() > max_len) {
    throw LengthError("encoded length " + std::to_string(b.input.length()) + " exceeds max_len " +
                      std::to_string(max_len));
  }
  ex.input = std::move(b.input);
  return ex;
}

}  // namespace

EncodedExample encode_for_span(const DeductionSample& sample, const Lexicon& lexicon, std::size_t max_len) {
  return encode_common(sample, lexicon, max_len, true);
}

EncodedExample encode_for_classification(const DeductionSample& sample, const Lexicon& lexicon,
                                         std::size_t max_len) {
  return encode_common(sample, lexicon, max_len, false);
}

EncodedExample encode(const DeductionSample& sample, const Lexicon& lexicon, HeadKind head, std::size_t max_len) {
  return head == HeadKind::span ? encode_for_span(sample, lexicon, max_len)
                                : encode_for_classification(sample, lexicon, max_len);
}

EncodedInput encode_question_only(const std::vector<std::string>& question, const Lexicon& lexicon,
                                  std::size_t max_len) {
  Builder b{lexicon, {}};
  b.push("[CLS]", 0, TokenRole::special);
  for (const auto& t : question) b.push(t, 0, TokenRole::question);
  b.push("[SEP]", 0, TokenRole::special);
  if (b.input.length() > max_len) throw LengthError("question exceeds max_len");
  return std::move(b.input);
}

EncodedInput encode_tokens(const std::vector<std::string>& tokens, const Lexicon& lexicon, std::size_t max_len) {
  if (tokens.size() > max_len) {
    throw LengthError("token sequence of length " + std::to_string(tokens.size()) + " exceeds max_len " +
                      std::to_string(max_len));
  }
  EncodedInput in;
  std::uint32_t segment = 0;
  bool seen_sep = false;
  for (const auto& t : tokens) {
    const std::uint32_t id = lexicon.id_or_unk(t);
    in.token_ids.push_back(id);
    in.segment_ids.push_back(segment);
    in.attention_mask.push_back(1);
    const bool special = id == Lexicon::kCls || id == Lexicon::kSep;
    in.roles.push_back(special ? TokenRole::special : (seen_sep ? TokenRole::context : TokenRole::question));
    if (id == Lexicon::kSep && !seen_sep) {
      seen_sep = true;
      segment = 1;
    }
  }
  return in;
}

std::vector<int> sentence_indices(const EncodedInput& input, const Lexicon& lexicon) {
  std::vector<int> out(input.length(), -1);
  const std::uint32_t period = lexicon.id(".");
  std::size_t seps = 0;
  int sentence = 0;
  for (std::size_t i = 0; i < input.length(); ++i) {
    const auto id = input.token_ids[i];
    if (id == Lexicon::kSep) {
      ++seps;
      continue;
    }
    if (seps == 1 && input.attention_mask[i]) {
      out[i] = sentence;
      if (id == period) ++sentence;
    }
  }
  return out;
}

}  // namespace layerscope
