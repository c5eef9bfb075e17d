#include "layerscope/persistence.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "layerscope/error.hpp"
#include "layerscope/tasks.hpp"

using namespace layerscope;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.vocab_size = 30;
  c.max_len = 16;
  c.n_classes = 3;
  c.seed = 12;
  return c;
}

EncodedInput padded_input() {
  EncodedInput in;
  in.token_ids = {Lexicon::kCls, 7, 8, Lexicon::kSep, 9, 10, Lexicon::kSep, 0, 0};
  in.segment_ids = {0, 0, 0, 0, 1, 1, 1, 0, 0};
  in.attention_mask = {1, 1, 1, 1, 1, 1, 1, 0, 0};
  in.roles = {TokenRole::special, TokenRole::question, TokenRole::question, TokenRole::special,
              TokenRole::supporting_fact, TokenRole::answer, TokenRole::special, TokenRole::pad, TokenRole::pad};
  return in;
}

void write_u16(std::string& bytes, std::size_t at, std::uint16_t v) {
  bytes[at] = static_cast<char>(v & 0xff);
  bytes[at + 1] = static_cast<char>(v >> 8);
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitIdentical) {
  Model m(small_config());
  const auto bytes = encode_checkpoint(m, {{"head", "span"}, {"seed", "12"}});
  EXPECT_EQ(bytes.substr(0, 4), "LWCK");
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.model.config(), m.config());
  EXPECT_EQ(back.model.checksum(), m.checksum());
  EXPECT_EQ(back.metadata.at("head"), "span");
  const auto in = padded_input();
  const auto a = forward_with_trace(m, in), b = forward_with_trace(back.model, in);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto va = a.layers[l].values(), vb = b.layers[l].values();
    ASSERT_TRUE(std::equal(va.begin(), va.end(), vb.begin()));
  }
  EXPECT_EQ(encode_checkpoint(back.model, back.metadata), bytes);
}

TEST(Checkpoint, FileRoundTrip) {
  const fs::path p = fs::temp_directory_path() / "layerscope_ckpt_test.lwck";
  Model m(small_config());
  save_checkpoint(p, m);
  EXPECT_EQ(load_checkpoint(p).model.checksum(), m.checksum());
  fs::remove(p);
  EXPECT_THROW(load_checkpoint(p), FormatError);
}

TEST(Checkpoint, TruncationAndBitFlipsAreRejected) {
  const auto bytes = encode_checkpoint(Model(small_config()));
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{10}, std::size_t{3}}) {
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, cut)), CorruptFileError) << cut;
  }
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  try {
    decode_checkpoint(flipped);
    FAIL();
  } catch (const CorruptFileError& e) {
    EXPECT_NE(std::string(e.what()).find("CRC"), std::string::npos);
  }
}

TEST(Checkpoint, MagicAndVersionChecks) {
  auto bytes = encode_checkpoint(Model(small_config()));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), CorruptFileError);
  write_u16(bytes, 4, 2);
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const CorruptFileError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("version 2"), std::string::npos);
    EXPECT_NE(msg.find("version 1"), std::string::npos);
  }
  // A trace is not a checkpoint and vice versa.
  Model m(small_config());
  const auto trace = encode_trace(forward_with_trace(m, padded_input()));
  EXPECT_THROW(decode_checkpoint(trace), CorruptFileError);
  EXPECT_THROW(decode_trace(encode_checkpoint(m)), CorruptFileError);
}

TEST(Trace, RoundTripWithinFloatPrecision) {
  Model m(small_config());
  const auto full = forward_with_trace(m, padded_input());
  const auto bytes = encode_trace(full);
  EXPECT_EQ(bytes.substr(0, 4), "LWT1");
  std::uint32_t header[3];
  std::memcpy(header, bytes.data() + 4, 12);
  EXPECT_EQ(header[0], 3u);  // N + 1
  EXPECT_EQ(header[1], 7u);  // pad rows dropped
  EXPECT_EQ(header[2], 8u);
  const auto back = decode_trace(bytes);
  const auto ref = full.without_padding();
  ASSERT_EQ(back.layers.size(), 3u);
  EXPECT_EQ(back.input, ref.input);
  double worst = 0.0;
  for (std::size_t l = 0; l < 3; ++l) {
    const auto a = ref.layers[l].values(), b = back.layers[l].values();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] != 0.0) worst = std::max(worst, std::abs(a[i] - b[i]) / std::abs(a[i]));
    }
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Trace, CorruptionIsRejected) {
  Model m(small_config());
  const auto bytes = encode_trace(forward_with_trace(m, padded_input()));
  EXPECT_THROW(decode_trace(bytes.substr(0, bytes.size() - 5)), CorruptFileError);
  auto flipped = bytes;
  flipped[20] ^= 1;
  EXPECT_THROW(decode_trace(flipped), CorruptFileError);
  EXPECT_THROW(decode_trace(""), CorruptFileError);
}

TEST(SamplesJsonl, RoundTripAndLineEndings) {
  GeneratorConfig g;
  g.seed = 3;
  const auto samples = generate(g, 20);
  std::string text;
  for (const auto& s : samples) text += sample_to_json_line(s) + "\r\n";
  std::istringstream crlf(text);
  const auto back = parse_samples_jsonl(crlf);
  EXPECT_TRUE(back.errors.empty());
  EXPECT_EQ(back.samples, samples);

  const fs::path p = fs::temp_directory_path() / "layerscope_samples_test.jsonl";
  write_samples_jsonl(p, samples);
  EXPECT_EQ(read_samples_jsonl(p).samples, samples);
  fs::remove(p);
}

TEST(SamplesJsonl, BadLinesAreReportedWithPositions) {
  GeneratorConfig g;
  const auto samples = generate(g, 2);
  std::string text = sample_to_json_line(samples[0]) + "\n";
  text += "{\"context\": \"caf\xff\"}\n";
  text += "{not json}\n";
  text += sample_to_json_line(samples[1]) + "\n";
  std::istringstream in(text);
  const auto r = parse_samples_jsonl(in);
  EXPECT_EQ(r.samples.size(), 2u);
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_EQ(r.errors[0], "line 2: invalid UTF-8 byte at offset 16");
  EXPECT_EQ(r.errors[1].rfind("line 3: ", 0), 0u);
}

TEST(Utf8, Validator) {
  EXPECT_FALSE(first_invalid_utf8("plain ascii").has_value());
  EXPECT_FALSE(first_invalid_utf8("caf\xc3\xa9 \xe2\x82\xac \xf0\x9f\x98\x80").has_value());
  EXPECT_EQ(first_invalid_utf8("ab\xc0\xafz"), 2u);   // overlong
  EXPECT_EQ(first_invalid_utf8("\xed\xa0\x80"), 0u);  // surrogate
  EXPECT_EQ(first_invalid_utf8("ok\xe2\x82"), 2u);    // truncated
  EXPECT_EQ(first_invalid_utf8("x\xe2(\xa1"), 2u);    // bad continuation
}
