#pragma once

#include <string>
#include <utility>
#include <vector>

#include "layerscope/encoder.hpp"
#include "layerscope/probing.hpp"
#include "layerscope/synthgen.hpp"
#include "layerscope/tasks.hpp"
#include "layerscope/training.hpp"

namespace layerscope {

// Every setting the pipeline reads from a config file. Keys are prefixed by
// section: gen.*, model.*, train.*, probe.*; a bare `seed` sets all seeds.
struct PipelineConfig {
  GeneratorConfig generator;
  std::size_t n_samples = 10000;
  ModelConfig model;  // vocab_size and n_classes come from the lexicon
  TrainConfig train;
  HeadKind head = HeadKind::classification;
  ProbeConfig probe;
  ProbeSuiteConfig suite;

  void set_seed(std::uint64_t seed);
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// "key = value" lines; '#' starts a comment. FormatError names the line.
KeyValues parse_key_values(const std::string& text);
// ParameterError on unknown keys or unparsable values.
void apply_key_values(PipelineConfig& config, const KeyValues& values);
PipelineConfig load_pipeline_config(const std::string& text);

// Canonical "key = value" text for one section ("gen", "model", "train",
// "probe"); parsing it back reproduces the values exactly.
std::string section_text(const PipelineConfig& config, const std::string& section);
std::vector<std::string> config_keys(const std::string& section);

}  // namespace layerscope
