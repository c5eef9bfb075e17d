#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "layerscope/analysis.hpp"
#include "layerscope/probing.hpp"

namespace layerscope {

enum class MarkerShape { diamond, star, circle };

struct RoleStyle {
  MarkerShape shape;
  const char* color;
};

// answer: red diamond, question: orange star, supporting fact: dark cyan
// circle, everything else: gray circle.
RoleStyle role_style(RoleClass role);

struct ScatterOptions {
  std::string title;
  std::string description;  // written into <desc>, e.g. the seed
  bool color_by_sentence = false;
  bool show_clusters = false;
};

// Throws ParameterError on an empty projection.
std::string emit_layer_scatter(const Projection2D& projection, const ScatterOptions& options = {});

struct ProbeCurves {
  std::string svg;
  std::string csv;  // task,model_tag,layer,macro_f1,seed
};

// One panel per task, one line per model tag.
ProbeCurves emit_probe_curves(const std::vector<LayerProbeResult>& results, const std::string& description = {});

// Rows in the fixed order NEL, COREF, REL, QUES, SUP (absent tasks skipped).
std::string emit_phase_heatmap(const PhaseMatrix& matrix, const std::string& description = {});
// Fill for a normalized value in [0, 1]: white at 0, full blue at 1.
std::string phase_cell_color(double value);

// Self-contained HTML for everything found under `run_dir`. Missing
// artifacts are listed, never fatal.
std::string assemble_report(const std::filesystem::path& run_dir);

std::string xml_escape(const std::string& text);

}  // namespace layerscope
