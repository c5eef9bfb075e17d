#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "layerscope/encoder.hpp"
#include "layerscope/synthgen.hpp"

namespace layerscope {

// Checkpoint layout (little-endian):
//   "LWCK" | u16 version | u32 n | n bytes UTF-8 JSON {"model": {...}, "metadata": {...}}
//   | u32 tensor count | per tensor: u16 name length, name, u8 rank, u32 dims[rank], f64 payload
//   | u32 CRC32 of every preceding byte
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::map<std::string, std::string> metadata;
};

std::string encode_checkpoint(const Model& model, const std::map<std::string, std::string>& metadata = {});
// Throws CorruptFileError on bad magic, version, CRC or layout.
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::map<std::string, std::string>& metadata = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Trace layout (little-endian):
//   "LWT1" | u32 layers (N+1) | u32 seq_len | u32 d_model | u8 roles[seq_len]
//   | u32 token_ids[seq_len] | f32 layers x seq_len x d_model | u32 CRC32
// Padding is dropped before writing; segment ids are rebuilt from the first
// [SEP] on load.
std::string encode_trace(const HiddenStateTrace& trace);
HiddenStateTrace decode_trace(std::string_view bytes);
void dump_trace(const std::filesystem::path& path, const HiddenStateTrace& trace);
HiddenStateTrace load_trace(const std::filesystem::path& path);

// QA sample JSONL, one sample per line. Reading accepts LF and CRLF and
// reports bad lines as "line N: ..." without aborting.
struct SampleImport {
  std::vector<DeductionSample> samples;
  std::vector<std::string> errors;
};
std::string sample_to_json_line(const DeductionSample& sample);
SampleImport parse_samples_jsonl(std::istream& in);
void write_samples_jsonl(const std::filesystem::path& path, const std::vector<DeductionSample>& samples);
SampleImport read_samples_jsonl(const std::filesystem::path& path);  // FormatError if unreadable

std::string read_file_bytes(const std::filesystem::path& path);  // FormatError if unreadable
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace layerscope
