#include "layerscope/viz.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <regex>

#include "layerscope/error.hpp"

using namespace layerscope;
namespace fs = std::filesystem;

namespace {

// Minimal well-formedness check: every element closes in order.
bool well_formed(const std::string& xml) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  while ((i = xml.find('<', i)) != std::string::npos) {
    const std::size_t end = xml.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = xml.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag.back() == '/') continue;
    if (tag[0] == '/') {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      continue;
    }
    stack.push_back(tag.substr(0, tag.find_first_of(" \n\t")));
  }
  return stack.empty();
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t i = s.find(needle); i != std::string::npos; i = s.find(needle, i + 1)) ++n;
  return n;
}

Projection2D sample_projection() {
  Projection2D p;
  const TokenRole roles[] = {TokenRole::special, TokenRole::question, TokenRole::question, TokenRole::context,
                             TokenRole::supporting_fact, TokenRole::answer};
  for (std::size_t i = 0; i < 6; ++i) {
    ProjectedPoint pt;
    pt.token_index = i;
    pt.token = i == 3 ? "a<b&c" : "t" + std::to_string(i);
    pt.role = roles[i];
    pt.sentence = i < 3 ? -1 : static_cast<int>(i - 3);
    pt.x = static_cast<double>(i);
    pt.y = static_cast<double>(i * i);
    pt.cluster = i % 2;
    p.points.push_back(pt);
  }
  return p;
}

LayerProbeResult curve(ProbeTask t, const std::string& tag, std::vector<double> scores) {
  LayerProbeResult r;
  r.task = t;
  r.model_tag = tag;
  r.scores = std::move(scores);
  r.chance = 0.3;
  r.seed = 9;
  return r;
}

}  // namespace

TEST(Scatter, RoleMarkersFollowTheConvention) {
  EXPECT_EQ(role_style(RoleClass::answer).shape, MarkerShape::diamond);
  EXPECT_STREQ(role_style(RoleClass::answer).color, "#d62728");
  EXPECT_EQ(role_style(RoleClass::question).shape, MarkerShape::star);
  EXPECT_STREQ(role_style(RoleClass::question).color, "#ff7f0e");
  EXPECT_EQ(role_style(RoleClass::supporting_fact).shape, MarkerShape::circle);
  EXPECT_STREQ(role_style(RoleClass::supporting_fact).color, "#008b8b");
  EXPECT_EQ(role_style(RoleClass::other).shape, MarkerShape::circle);
  EXPECT_STREQ(role_style(RoleClass::other).color, "#b0b0b0");
}

TEST(Scatter, SvgIsWellFormedAndCarriesEveryPoint) {
  const auto svg = emit_layer_scatter(sample_projection(), {"Layer 2", "seed=4", false, true});
  EXPECT_TRUE(well_formed(svg));
  EXPECT_NE(svg.find("viewBox=\"0 0 "), std::string::npos);
  EXPECT_NE(svg.find("<desc>seed=4</desc>"), std::string::npos);
  EXPECT_EQ(count(svg, "<title>"), 6u);
  EXPECT_NE(svg.find("a&lt;b&amp;c"), std::string::npos);
  // One answer diamond plus the legend entry.
  EXPECT_EQ(count(svg, "<g class=\"answer\"><title>t5"), 1u);
  EXPECT_EQ(count(svg, "class=\"cluster\""), 2u);
  std::regex answer_marker("<g class=\"answer\"><title>[^<]*</title><polygon points=\"[^\"]*\" fill=\"#d62728\"/>");
  EXPECT_TRUE(std::regex_search(svg, answer_marker));
  std::regex question_marker("<g class=\"question\"><title>[^<]*</title><polygon points=\"([^ ]+ ){9}[^ ]+\" fill=\"#ff7f0e\"/>");
  EXPECT_TRUE(std::regex_search(svg, question_marker));
  std::regex sup_marker("<g class=\"supporting-fact\"><title>[^<]*</title><circle [^>]*fill=\"#008b8b\"/>");
  EXPECT_TRUE(std::regex_search(svg, sup_marker));
}

TEST(Scatter, ByteDeterministicAndSentenceMode) {
  const auto p = sample_projection();
  EXPECT_EQ(emit_layer_scatter(p), emit_layer_scatter(p));
  ScatterOptions o;
  o.color_by_sentence = true;
  const auto svg = emit_layer_scatter(p, o);
  EXPECT_TRUE(well_formed(svg));
  EXPECT_NE(svg.find("sentence 2"), std::string::npos);
  EXPECT_EQ(count(svg, "<polygon"), 0u);
  EXPECT_THROW(emit_layer_scatter(Projection2D{}), ParameterError);
}

TEST(Scatter, DegenerateExtentStillRenders) {
  Projection2D p;
  p.points.resize(3);
  EXPECT_TRUE(well_formed(emit_layer_scatter(p)));
}

TEST(Curves, CsvRowsTicksAndLegend) {
  std::vector<LayerProbeResult> rs;
  for (ProbeTask t : {ProbeTask::nel, ProbeTask::sup}) {
    rs.push_back(curve(t, "fine-tuned", {0.1, 0.5, 0.7, 0.9, 0.8}));
    rs.push_back(curve(t, "untrained", {0.1, 0.2, 0.2, 0.3, 0.2}));
  }
  const auto c = emit_probe_curves(rs, "seed=9");
  EXPECT_EQ(count(c.csv, "\n"), 1u + 2 * 2 * 5);
  EXPECT_EQ(c.csv.substr(0, c.csv.find('\n')), "task,model_tag,layer,macro_f1,seed");
  EXPECT_NE(c.csv.find("SUP,untrained,4,0.200000,9"), std::string::npos);
  EXPECT_TRUE(well_formed(c.svg));
  EXPECT_EQ(count(c.svg, "class=\"xtick\""), 2u * 5);
  EXPECT_NE(c.svg.find("<title>NEL fine-tuned</title>"), std::string::npos);
  EXPECT_NE(c.svg.find("<title>SUP untrained</title>"), std::string::npos);
  EXPECT_NE(c.svg.find(">layer<"), std::string::npos);
  EXPECT_NE(c.svg.find(">macro-F1<"), std::string::npos);
  EXPECT_EQ(c.svg, emit_probe_curves(rs, "seed=9").svg);
}

TEST(Heatmap, SaturationAndRowOrder) {
  EXPECT_EQ(phase_cell_color(0.0), "#ffffff");
  EXPECT_EQ(phase_cell_color(1.0), "#08519c");
  EXPECT_EQ(phase_cell_color(0.5), "#84a8ce");
  PhaseMatrix m;
  m.tasks = {ProbeTask::sup, ProbeTask::ques, ProbeTask::rel, ProbeTask::coref, ProbeTask::nel};
  m.values = {{0, 0.5, 1}, {0.5, 0.5, 0.5}, {1, 0, 0}, {0, 1, 0}, {1, 0.2, 0}};
  const auto svg = emit_phase_heatmap(m);
  EXPECT_TRUE(well_formed(svg));
  std::vector<std::size_t> pos;
  for (const char* t : {">NEL<", ">COREF<", ">REL<", ">QUES<", ">SUP<"}) pos.push_back(svg.find(t));
  for (std::size_t i = 0; i + 1 < pos.size(); ++i) EXPECT_LT(pos[i], pos[i + 1]);
  EXPECT_NE(svg.find("fill=\"#08519c\" stroke=\"#ffffff\"><title>SUP layer 2"), std::string::npos);
  EXPECT_EQ(count(svg, "fill=\"#84a8ce\" stroke=\"#ffffff\"><title>QUES"), 3u);
}

TEST(Report, EmptyAndPartialRunDirectories) {
  const fs::path dir = fs::temp_directory_path() / "layerscope_viz_report";
  fs::remove_all(dir);
  fs::create_directories(dir / "model");
  EXPECT_NE(assemble_report(dir).find("No artifacts found"), std::string::npos);

  std::ofstream(dir / "model" / "train_config.txt") << "learning_rate = 0.0001\nbatch_size = 32\n";
  std::ofstream(dir / "probe_config.txt") << "hidden = 64\npatience = 3\n";
  std::ofstream(dir / "probes.csv") << "task,model_tag,layer,macro_f1,seed\nSUP,fine-tuned,0,0.5,1\n";
  std::ofstream(dir / "scatter_layer_10.svg") << "<?xml version=\"1.0\"?>\n<svg id=\"ten\"></svg>\n";
  std::ofstream(dir / "scatter_layer_2.svg") << "<svg id=\"two\"></svg>\n";
  const auto html = assemble_report(dir);
  EXPECT_NE(html.find("learning_rate = 0.0001"), std::string::npos);
  EXPECT_NE(html.find("patience = 3"), std::string::npos);
  EXPECT_NE(html.find("<li>probes.svg</li>"), std::string::npos);
  EXPECT_NE(html.find("<li>phases.svg</li>"), std::string::npos);
  EXPECT_EQ(html.find("<li>probes.csv</li>"), std::string::npos);
  EXPECT_LT(html.find("id=\"two\""), html.find("id=\"ten\""));
  EXPECT_EQ(html.find("<?xml"), std::string::npos);
  EXPECT_EQ(html.find("src=\"http"), std::string::npos);
  EXPECT_EQ(html, assemble_report(dir));
  fs::remove_all(dir);
}
