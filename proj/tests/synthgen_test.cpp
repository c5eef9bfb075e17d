#include <gtest/gtest.h>

#include <set>

#include "layerscope/error.hpp"
#include "layerscope/synthgen.hpp"

using namespace layerscope;

namespace {

// Basic Deduction reference example: question "What is Emily afraid of?",
// answer "cats", supporting facts in sentences 0 and 5.
const std::vector<std::string> kTableOneContext{
    "Wolves are afraid of cats.", "Sheep are afraid of wolves.", "Mice are afraid of sheep.",
    "Gertrude is a mouse.",       "Jessica is a mouse.",         "Emily is a wolf.",
    "Cats are afraid of sheep.",  "Winona is a wolf.",
};

std::vector<std::vector<std::string>> table_one_sentences() {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : kTableOneContext) out.push_back(tokenize(s));
  return out;
}

GeneratorConfig table_one_config() {
  GeneratorConfig c;
  c.n_kinds = 4;  // mouse, sheep, wolf, cat
  return c;
}

}  // namespace

TEST(Lexicon, DefaultSizeNearTarget) {
  const Lexicon lex = Lexicon::build(GeneratorConfig{});
  EXPECT_GE(lex.size(), 220u);
  EXPECT_LE(lex.size(), 240u);
  EXPECT_EQ(lex.id("[PAD]"), Lexicon::kPad);
  EXPECT_EQ(lex.id("[CLS]"), Lexicon::kCls);
  EXPECT_EQ(lex.id("[SEP]"), Lexicon::kSep);
  EXPECT_THROW(lex.id("zebra"), VocabError);
  EXPECT_EQ(lex.id_or_unk("zebra"), Lexicon::kUnk);
}

TEST(TableOne, SolverReproducesAnswerAndSupportingFacts) {
  const Lexicon lex = Lexicon::build(table_one_config());
  DeductionSample s = make_sample(table_one_sentences(), "emily", lex);
  EXPECT_EQ(s.answer, "cats");
  EXPECT_EQ(s.supporting_facts, (std::vector<std::size_t>{0, 5}));
  EXPECT_EQ(detokenize(s.question), "what is emily afraid of?");
}

TEST(TableOne, InstanceIsProducibleBySomeSeed) {
  GeneratorConfig c = table_one_config();
  c.n_names = 8;
  c.train_ratio = 1.0;
  c.dev_ratio = 0.0;
  c.test_ratio = 0.0;
  bool found = false;
  for (std::uint64_t seed = 0; seed < 10 && !found; ++seed) {
    c.seed = seed;
    for (const auto& s : generate(c, 500)) {
      std::multiset<std::string> sf;
      for (auto i : s.supporting_facts) sf.insert(detokenize(s.context[i]));
      if (sf == std::multiset<std::string>{"emily is a wolf.", "wolves are afraid of cats."}) {
        EXPECT_EQ(s.answer, "cats");
        found = true;
        break;
      }
    }
  }
  EXPECT_TRUE(found);
}

TEST(TableOne, SpanEncodingPointsAtCatsCandidate) {
  const Lexicon lex = Lexicon::build(table_one_config());
  auto ex = encode_for_span(make_sample(table_one_sentences(), "emily", lex), lex, 128);
  EXPECT_EQ(ex.target.start, ex.target.end);
  EXPECT_EQ(lex.token(ex.input.token_ids[ex.target.start]), "cats");
  EXPECT_GE(ex.target.start, ex.layout.candidates.first);
  EXPECT_LT(ex.target.start, ex.layout.candidates.second);
  EXPECT_EQ(ex.input.roles[ex.target.start], TokenRole::answer);
}

TEST(TableOne, ClassificationLabelIsCatsIndex) {
  const Lexicon lex = Lexicon::build(table_one_config());
  auto ex = encode_for_classification(make_sample(table_one_sentences(), "emily", lex), lex, 128);
  EXPECT_EQ(lex.kinds().size(), 4u);
  EXPECT_EQ(lex.kinds()[ex.target.label].plural, "cats");
}

TEST(Generate, NoDistractorsMeansTwoSupportingSentences) {
  GeneratorConfig c;
  c.n_distractor_sentences = 0;
  for (const auto& s : generate(c, 50)) {
    ASSERT_EQ(s.context.size(), 2u);
    EXPECT_EQ(s.supporting_facts, (std::vector<std::size_t>{0, 1}));
  }
}

TEST(Generate, DeterministicForSameSeed) {
  GeneratorConfig c;
  c.seed = 7;
  EXPECT_EQ(generate(c, 200), generate(c, 200));
  GeneratorConfig d = c;
  d.seed = 8;
  EXPECT_NE(generate(c, 50), generate(d, 50));
}

TEST(Generate, SymbolicSolverIsTheGoldOracle) {
  GeneratorConfig c;
  c.seed = 3;
  const Lexicon lex = Lexicon::build(c);
  const auto samples = generate(c, 2000);
  for (const auto& s : samples) {
    auto d = solve(s.context, s.question, lex);
    ASSERT_TRUE(d);
    EXPECT_EQ(d->answer, s.answer);
    EXPECT_EQ(d->supporting_facts, s.supporting_facts);
    ASSERT_EQ(s.supporting_facts.size(), 2u);
    EXPECT_EQ(s.context.size(), 8u);
    bool answer_in_sf = false;
    for (auto i : s.supporting_facts) {
      for (const auto& t : s.context[i]) answer_in_sf |= t == s.answer;
    }
    EXPECT_TRUE(answer_in_sf);
  }
}

TEST(Generate, AnswerNeverCoOccursWithQueriedName) {
  const Lexicon lex = Lexicon::build(GeneratorConfig{});
  for (const auto& s : generate(GeneratorConfig{}, 2000)) {
    const std::string& name = s.question[2];
    for (const auto& sentence : s.context) {
      const bool has_name = std::find(sentence.begin(), sentence.end(), name) != sentence.end();
      const bool has_answer = std::find(sentence.begin(), sentence.end(), s.answer) != sentence.end();
      EXPECT_FALSE(has_name && has_answer) << detokenize(sentence);
    }
  }
  (void)lex;
}

TEST(Generate, SplitNamesAreDisjoint) {
  const Lexicon lex = Lexicon::build(GeneratorConfig{});
  std::map<Split, std::set<std::string>> names;
  std::map<Split, std::size_t> counts;
  for (const auto& s : generate(GeneratorConfig{}, 1000)) {
    ++counts[s.split];
    for (const auto& m : s.mentions) {
      if (m.category == EntityCategory::person) names[s.split].insert(m.entity);
    }
  }
  EXPECT_EQ(counts[Split::train], 800u);
  EXPECT_EQ(counts[Split::dev], 100u);
  EXPECT_EQ(counts[Split::test], 100u);
  for (auto a : {Split::train, Split::dev, Split::test}) {
    for (auto b : {Split::train, Split::dev, Split::test}) {
      if (a == b) continue;
      for (const auto& n : names[a]) EXPECT_EQ(names[b].count(n), 0u) << n;
    }
  }
  (void)lex;
}

TEST(Generate, AnswersRoughlyBalanced) {
  GeneratorConfig c;
  const Lexicon lex = Lexicon::build(c);
  std::vector<std::size_t> counts(c.n_kinds);
  const std::size_t n = 6000;
  for (const auto& s : generate(c, n)) ++counts[*lex.kind_index(s.answer)];
  for (auto k : counts) EXPECT_NEAR(static_cast<double>(k) / n, 1.0 / static_cast<double>(c.n_kinds), 0.03);
}

TEST(Generate, TooFewNamesIsAGenerationError) {
  GeneratorConfig c;
  c.n_names = 10;  // dev/test pools get a single name each
  EXPECT_THROW(generate(c, 100), GenerationError);
  c.n_kinds = 2;
  EXPECT_THROW(generate(c, 10), ParameterError);
}

TEST(Encoding, CandidateListHoldsEveryKindOnce) {
  GeneratorConfig c;
  const Lexicon lex = Lexicon::build(c);
  for (const auto& s : generate(c, 100)) {
    auto ex = encode_for_span(s, lex, 128);
    std::multiset<std::string> cands;
    for (auto i = ex.layout.candidates.first; i < ex.layout.candidates.second; ++i) {
      cands.insert(lex.token(ex.input.token_ids[i]));
    }
    std::multiset<std::string> expected;
    for (const auto& k : lex.kinds()) expected.insert(k.plural);
    EXPECT_EQ(cands, expected);
    EXPECT_EQ(ex.target.start, ex.target.end);
    EXPECT_EQ(lex.token(ex.input.token_ids[ex.target.start]), s.answer);
  }
}

TEST(Encoding, RolesAndSegments) {
  const Lexicon lex = Lexicon::build(table_one_config());
  auto ex = encode_for_classification(make_sample(table_one_sentences(), "emily", lex), lex, 128);
  const auto& in = ex.input;
  EXPECT_EQ(in.roles[0], TokenRole::special);
  for (auto i = ex.layout.question.first; i < ex.layout.question.second; ++i) {
    EXPECT_EQ(in.roles[i], TokenRole::question);
    EXPECT_EQ(in.segment_ids[i], 0u);
  }
  // "wolves are afraid of cats ." is sentence 0 and supporting; "cats" is the answer.
  auto [b, e] = ex.layout.sentences[0];
  EXPECT_EQ(e - b, 6u);
  EXPECT_EQ(in.roles[b], TokenRole::supporting_fact);
  EXPECT_EQ(in.roles[b + 4], TokenRole::answer);
  auto [b1, e1] = ex.layout.sentences[1];
  for (auto i = b1; i < e1; ++i) EXPECT_EQ(in.roles[i], TokenRole::context);
  EXPECT_THROW(encode_for_classification(make_sample(table_one_sentences(), "emily", lex), lex, 20), LengthError);

  const auto sent = sentence_indices(in, lex);
  for (std::size_t s = 0; s < ex.layout.sentences.size(); ++s) {
    for (auto i = ex.layout.sentences[s].first; i < ex.layout.sentences[s].second; ++i) {
      EXPECT_EQ(sent[i], static_cast<int>(s));
    }
  }
  EXPECT_EQ(sent[0], -1);
}

TEST(Questions, TemplateOracleAgreesWithVariants) {
  const Lexicon lex = Lexicon::build(table_one_config());
  auto sample = make_sample(table_one_sentences(), "emily", lex);
  EXPECT_EQ(classify_question(sample.question), QuestionType::entity);
  auto variants = question_variants(sample, lex);
  ASSERT_EQ(variants.size(), 6u);
  std::set<QuestionType> seen;
  for (const auto& v : variants) {
    EXPECT_EQ(classify_question(v.tokens), v.type) << detokenize(v.tokens);
    for (const auto& t : v.tokens) EXPECT_TRUE(lex.contains(t)) << t;
    seen.insert(v.type);
  }
  EXPECT_EQ(seen.size(), 6u);
}

TEST(Annotations, MentionsAndRelations) {
  const Lexicon lex = Lexicon::build(table_one_config());
  auto s = make_sample(table_one_sentences(), "emily", lex);
  // question mention first
  ASSERT_FALSE(s.mentions.empty());
  EXPECT_EQ(s.mentions[0].entity, "person:emily");
  EXPECT_EQ(s.mentions[0].category, EntityCategory::person);
  std::size_t afraid = 0, isa = 0;
  for (const auto& r : s.relations) {
    const auto& subj = s.mentions[r.subject];
    const auto& obj = s.mentions[r.object];
    EXPECT_EQ(subj.sentence, obj.sentence);
    if (r.relation == Relation::afraid_of) {
      ++afraid;
      EXPECT_EQ(subj.category, EntityCategory::animal_kind);
    } else {
      ++isa;
      EXPECT_EQ(subj.category, EntityCategory::person);
    }
  }
  EXPECT_EQ(afraid, 4u);
  EXPECT_EQ(isa, 4u);
  // wolf (sentence 5) and wolves (sentence 0) corefer; emily and winona do not.
  bool wolf_pair = false, people_pair = false;
  for (const auto& p : s.coref_pairs()) {
    const auto& a = s.mentions[p.first];
    const auto& b = s.mentions[p.second];
    if (a.entity == "kind:wolf" && b.entity == "kind:wolf") wolf_pair |= p.same_entity;
    if ((a.entity == "person:emily" && b.entity == "person:winona") ||
        (a.entity == "person:winona" && b.entity == "person:emily")) {
      people_pair = true;
      EXPECT_FALSE(p.same_entity);
    }
  }
  EXPECT_TRUE(wolf_pair);
  EXPECT_TRUE(people_pair);
}
