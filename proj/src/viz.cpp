#include "layerscope/viz.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "layerscope/error.hpp"

namespace layerscope {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
                                    "#bcbd22", "#17becf", "#aec7e8", "#98df8a", "#c5b0d5"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  return s == "-0.00" ? "0.00" : s;
}

std::string svg_open(double width, double height, const std::string& description) {
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(width) << "\" height=\""
     << fmt(height) << "\" viewBox=\"0 0 " << fmt(width) << ' ' << fmt(height) << "\" font-family=\"sans-serif\">\n";
  if (!description.empty()) os << "<desc>" << xml_escape(description) << "</desc>\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << fmt(width) << "\" height=\"" << fmt(height) << "\" fill=\"#ffffff\"/>\n";
  return os.str();
}

std::string marker(MarkerShape shape, double cx, double cy, double r, const std::string& color) {
  std::ostringstream os;
  switch (shape) {
    case MarkerShape::circle:
      os << "<circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\"" << fmt(r) << "\" fill=\"" << color
         << "\"/>";
      break;
    case MarkerShape::diamond:
      os << "<polygon points=\"" << fmt(cx) << ',' << fmt(cy - 1.4 * r) << ' ' << fmt(cx + 1.4 * r) << ',' << fmt(cy)
         << ' ' << fmt(cx) << ',' << fmt(cy + 1.4 * r) << ' ' << fmt(cx - 1.4 * r) << ',' << fmt(cy) << "\" fill=\""
         << color << "\"/>";
      break;
    case MarkerShape::star: {
      os << "<polygon points=\"";
      for (int i = 0; i < 10; ++i) {
        const double rad = (i % 2 == 0 ? 1.6 * r : 0.7 * r);
        const double a = -M_PI / 2 + i * M_PI / 5;
        if (i) os << ' ';
        os << fmt(cx + rad * std::cos(a)) << ',' << fmt(cy + rad * std::sin(a));
      }
      os << "\" fill=\"" << color << "\"/>";
      break;
    }
  }
  return os.str();
}

std::string text(double x, double y, const std::string& s, const char* anchor = "start", int size = 11,
                 const char* extra = "") {
  std::ostringstream os;
  os << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
     << '"' << extra << '>' << xml_escape(s) << "</text>\n";
  return os.str();
}

struct Bounds {
  double lo, hi;
};

Bounds padded(double lo, double hi) {
  if (!(hi - lo > 1e-12)) return {lo - 1.0, hi + 1.0};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

int draw_rank(RoleClass r) {
  switch (r) {
    case RoleClass::other: return 0;
    case RoleClass::supporting_fact: return 1;
    case RoleClass::question: return 2;
    case RoleClass::answer: return 3;
  }
  return 0;
}

}  // namespace

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

RoleStyle role_style(RoleClass role) {
  switch (role) {
    case RoleClass::answer: return {MarkerShape::diamond, "#d62728"};
    case RoleClass::question: return {MarkerShape::star, "#ff7f0e"};
    case RoleClass::supporting_fact: return {MarkerShape::circle, "#008b8b"};
    case RoleClass::other: return {MarkerShape::circle, "#b0b0b0"};
  }
  return {MarkerShape::circle, "#b0b0b0"};
}

// ---------------------------------------------------------------- scatter

std::string emit_layer_scatter(const Projection2D& projection, const ScatterOptions& options) {
  const auto& pts = projection.points;
  if (pts.empty()) throw ParameterError("emit_layer_scatter: empty projection");
  const double w = 560, h = 500, left = 40, top = 40, plot_w = 380, plot_h = 420;
  double xlo = pts[0].x, xhi = pts[0].x, ylo = pts[0].y, yhi = pts[0].y;
  for (const auto& p : pts) {
    xlo = std::min(xlo, p.x);
    xhi = std::max(xhi, p.x);
    ylo = std::min(ylo, p.y);
    yhi = std::max(yhi, p.y);
  }
  const Bounds bx = padded(xlo, xhi), by = padded(ylo, yhi);
  auto sx = [&](double x) { return left + (x - bx.lo) / (bx.hi - bx.lo) * plot_w; };
  auto sy = [&](double y) { return top + plot_h - (y - by.lo) / (by.hi - by.lo) * plot_h; };

  std::ostringstream os;
  os << svg_open(w, h, options.description);
  if (!options.title.empty()) os << text(left, 24, options.title, "start", 14);
  os << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(plot_w) << "\" height=\""
     << fmt(plot_h) << "\" fill=\"none\" stroke=\"#cccccc\"/>\n";

  if (options.show_clusters) {
    std::map<std::size_t, std::vector<const ProjectedPoint*>> members;
    for (const auto& p : pts) members[p.cluster].push_back(&p);
    for (const auto& [c, list] : members) {
      double mx = 0, my = 0;
      for (auto* p : list) {
        mx += sx(p->x);
        my += sy(p->y);
      }
      mx /= static_cast<double>(list.size());
      my /= static_cast<double>(list.size());
      double r = 0;
      for (auto* p : list) r = std::max(r, std::hypot(sx(p->x) - mx, sy(p->y) - my));
      const char* color = kPalette[c % kPaletteSize];
      os << "<circle cx=\"" << fmt(mx) << "\" cy=\"" << fmt(my) << "\" r=\"" << fmt(r + 8) << "\" fill=\"none\" stroke=\""
         << color << "\" stroke-dasharray=\"4 3\" class=\"cluster\"/>\n";
      os << text(mx, my - r - 11, "c" + std::to_string(c), "middle", 10, " fill=\"#555555\"");
    }
  }

  std::vector<std::size_t> order(pts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return draw_rank(role_class(pts[a].role)) < draw_rank(role_class(pts[b].role));
  });
  for (std::size_t i : order) {
    const auto& p = pts[i];
    const RoleClass rc = role_class(p.role);
    RoleStyle style = role_style(rc);
    std::string color = style.color;
    if (options.color_by_sentence) {
      style.shape = MarkerShape::circle;
      color = p.sentence < 0 ? "#b0b0b0" : kPalette[static_cast<std::size_t>(p.sentence) % kPaletteSize];
    }
    os << "<g class=\"" << to_string(rc) << "\"><title>" << xml_escape(p.token) << " [" << p.token_index << ", "
       << to_string(rc) << ", sentence " << p.sentence << ", cluster " << p.cluster << "]</title>"
       << marker(style.shape, sx(p.x), sy(p.y), 4.0, color) << "</g>\n";
  }

  // Legend.
  const double lx = left + plot_w + 20;
  double ly = top + 10;
  if (options.color_by_sentence) {
    std::set<int> sentences;
    for (const auto& p : pts) sentences.insert(p.sentence);
    for (int s : sentences) {
      const std::string color = s < 0 ? "#b0b0b0" : kPalette[static_cast<std::size_t>(s) % kPaletteSize];
      os << marker(MarkerShape::circle, lx + 5, ly - 4, 4.0, color) << '\n';
      os << text(lx + 16, ly, s < 0 ? "question / special" : "sentence " + std::to_string(s));
      ly += 18;
    }
  } else {
    for (RoleClass rc : {RoleClass::answer, RoleClass::question, RoleClass::supporting_fact, RoleClass::other}) {
      const auto style = role_style(rc);
      os << marker(style.shape, lx + 5, ly - 4, 4.0, style.color) << '\n';
      os << text(lx + 16, ly, to_string(rc));
      ly += 18;
    }
  }
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------- curves

ProbeCurves emit_probe_curves(const std::vector<LayerProbeResult>& results, const std::string& description) {
  ProbeCurves out;
  std::ostringstream csv;
  csv << "task,model_tag,layer,macro_f1,seed\n";
  char buf[32];
  for (const auto& r : results) {
    for (std::size_t l = 0; l < r.scores.size(); ++l) {
      std::snprintf(buf, sizeof buf, "%.6f", r.scores[l]);
      csv << to_string(r.task) << ',' << r.model_tag << ',' << l << ',' << buf << ',' << r.seed << '\n';
    }
  }
  out.csv = csv.str();

  std::vector<ProbeTask> tasks;
  std::vector<std::string> tags;
  for (ProbeTask t : all_probe_tasks()) {
    for (const auto& r : results)
      if (r.task == t) {
        tasks.push_back(t);
        break;
      }
  }
  for (const auto& r : results)
    if (std::find(tags.begin(), tags.end(), r.model_tag) == tags.end()) tags.push_back(r.model_tag);
  auto tag_color = [&](const std::string& tag) -> std::string {
    if (tag == "fine-tuned") return "#1f77b4";
    if (tag == "untrained") return "#7f7f7f";
    const auto i = static_cast<std::size_t>(std::find(tags.begin(), tags.end(), tag) - tags.begin());
    return kPalette[(i + 1) % kPaletteSize];
  };

  const double pw = 260, ph = 190, gap_x = 50, gap_y = 70, left = 50, top = 40;
  const std::size_t per_row = 3;
  const std::size_t rows = std::max<std::size_t>(1, (tasks.size() + per_row - 1) / per_row);
  const double width = left + per_row * (pw + gap_x);
  const double height = top + rows * (ph + gap_y) + 20 * static_cast<double>(tags.size());
  std::ostringstream os;
  os << svg_open(width, height, description);
  os << text(left, 22, "Probe macro-F1 per layer", "start", 14);

  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const double x0 = left + static_cast<double>(ti % per_row) * (pw + gap_x);
    const double y0 = top + static_cast<double>(ti / per_row) * (ph + gap_y);
    std::size_t n_layers = 0;
    for (const auto& r : results)
      if (r.task == tasks[ti]) n_layers = std::max(n_layers, r.scores.size());
    const double span = n_layers > 1 ? static_cast<double>(n_layers - 1) : 1.0;
    auto sx = [&](double l) { return x0 + l / span * pw; };
    auto sy = [&](double v) { return y0 + ph - v * ph; };
    os << "<g class=\"panel\">\n";
    os << text(x0 + pw / 2, y0 - 8, to_string(tasks[ti]), "middle", 12);
    os << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
       << "\" fill=\"none\" stroke=\"#999999\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double v = k * 0.25;
      os << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(sy(v)) << "\" x2=\"" << fmt(x0 + pw) << "\" y2=\""
         << fmt(sy(v)) << "\" stroke=\"#eeeeee\"/>\n";
      os << text(x0 - 4, sy(v) + 4, fmt(v), "end", 9);
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
      os << "<line class=\"xtick\" x1=\"" << fmt(sx(double(l))) << "\" y1=\"" << fmt(y0 + ph) << "\" x2=\""
         << fmt(sx(double(l))) << "\" y2=\"" << fmt(y0 + ph + 4) << "\" stroke=\"#333333\"/>\n";
      os << text(sx(double(l)), y0 + ph + 15, std::to_string(l), "middle", 9);
    }
    os << text(x0 + pw / 2, y0 + ph + 30, "layer", "middle", 10);
    os << text(x0 - 34, y0 + ph / 2, "macro-F1", "middle", 10,
               (" transform=\"rotate(-90 " + fmt(x0 - 34) + ' ' + fmt(y0 + ph / 2) + ")\"").c_str());
    for (const auto& r : results) {
      if (r.task != tasks[ti]) continue;
      const std::string color = tag_color(r.model_tag);
      os << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(sy(r.chance)) << "\" x2=\"" << fmt(x0 + pw) << "\" y2=\""
         << fmt(sy(r.chance)) << "\" stroke=\"" << color << "\" stroke-dasharray=\"2 3\" stroke-width=\"0.8\"/>\n";
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\"";
      if (r.model_tag == "untrained") os << " stroke-dasharray=\"6 3\"";
      os << " points=\"";
      for (std::size_t l = 0; l < r.scores.size(); ++l) {
        if (l) os << ' ';
        os << fmt(sx(double(l))) << ',' << fmt(sy(r.scores[l]));
      }
      os << "\"><title>" << xml_escape(to_string(r.task) + " " + r.model_tag) << "</title></polyline>\n";
    }
    os << "</g>\n";
  }
  double ly = top + static_cast<double>(rows) * (ph + gap_y) - 20;
  for (const auto& tag : tags) {
    const std::string color = tag_color(tag);
    os << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(left + 24) << "\" y2=\""
       << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"1.8\"/>\n";
    os << text(left + 30, ly, tag + " (dotted: " + tag + " chance)");
    ly += 20;
  }
  os << "</svg>\n";
  out.svg = os.str();
  return out;
}

// ---------------------------------------------------------------- heatmap

std::string phase_cell_color(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  const int base[3] = {0x08, 0x51, 0x9c};
  char buf[8];
  int c[3];
  for (int i = 0; i < 3; ++i) c[i] = static_cast<int>(std::lround(255.0 + v * (base[i] - 255.0)));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

std::string emit_phase_heatmap(const PhaseMatrix& matrix, const std::string& description) {
  std::vector<std::size_t> rows;
  for (ProbeTask t : all_probe_tasks()) {
    for (std::size_t i = 0; i < matrix.tasks.size(); ++i)
      if (matrix.tasks[i] == t) rows.push_back(i);
  }
  std::size_t n_cols = 0;
  for (const auto& r : matrix.values) n_cols = std::max(n_cols, r.size());
  const double cell_w = 54, cell_h = 30, left = 70, top = 50;
  const double width = left + static_cast<double>(n_cols) * cell_w + 20;
  const double height = top + static_cast<double>(rows.size()) * cell_h + 40;
  std::ostringstream os;
  os << svg_open(width, height, description);
  os << text(left, 20, "Per-task normalized probe score by layer", "start", 13);
  for (std::size_t c = 0; c < n_cols; ++c) {
    os << text(left + (static_cast<double>(c) + 0.5) * cell_w, top - 8, std::to_string(c), "middle", 10);
  }
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const std::size_t r = rows[ri];
    const double y = top + static_cast<double>(ri) * cell_h;
    os << text(left - 8, y + cell_h / 2 + 4, to_string(matrix.tasks[r]), "end", 11);
    for (std::size_t c = 0; c < matrix.values[r].size(); ++c) {
      const double v = matrix.values[r][c];
      const double x = left + static_cast<double>(c) * cell_w;
      os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(cell_w) << "\" height=\""
         << fmt(cell_h) << "\" fill=\"" << phase_cell_color(v) << "\" stroke=\"#ffffff\"><title>"
         << to_string(matrix.tasks[r]) << " layer " << c << ": " << fmt(v) << "</title></rect>\n";
      os << text(x + cell_w / 2, y + cell_h / 2 + 4, fmt(v), "middle", 9,
                 v > 0.55 ? " fill=\"#ffffff\"" : " fill=\"#222222\"");
    }
  }
  os << text(left + static_cast<double>(n_cols) * cell_w / 2, top + static_cast<double>(rows.size()) * cell_h + 24,
             "layer", "middle", 10);
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------- report

namespace {

// Orders "a2" before "a10".
bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      const auto na = std::stoull(a.substr(i, ie - i)), nb = std::stoull(b.substr(j, je - j));
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_xml_declaration(const std::string& svg) {
  if (svg.rfind("<?xml", 0) == 0) {
    const auto end = svg.find("?>");
    if (end != std::string::npos) return svg.substr(svg.find_first_not_of("\r\n", end + 2));
  }
  return svg;
}

std::string csv_table(const std::string& csv, std::size_t max_rows) {
  std::istringstream in(csv);
  std::string line;
  std::ostringstream os;
  os << "<table>\n";
  std::size_t row = 0, total = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++total;
    if (row > max_rows) continue;
    const char* cell = row == 0 ? "th" : "td";
    os << "<tr>";
    std::istringstream cells(line);
    std::string c;
    while (std::getline(cells, c, ',')) os << '<' << cell << '>' << xml_escape(c) << "</" << cell << '>';
    os << "</tr>\n";
    ++row;
  }
  os << "</table>\n";
  if (total > max_rows + 1) {
    os << "<p class=\"note\">" << (total - max_rows - 1) << " more rows in the file.</p>\n";
  }
  return os.str();
}

}  // namespace

std::string assemble_report(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  std::error_code ec;
  if (fs::is_directory(run_dir, ec)) {
    for (auto it = fs::recursive_directory_iterator(run_dir, ec); it != fs::recursive_directory_iterator();
         it.increment(ec)) {
      if (ec) break;
      if (!it->is_regular_file()) continue;
      const std::string rel = fs::relative(it->path(), run_dir).generic_string();
      if (rel == "report.html") continue;
      files.push_back(rel);
    }
  }
  std::sort(files.begin(), files.end(), natural_less);
  auto ends_with = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  auto base = [](const std::string& rel) { return fs::path(rel).filename().string(); };

  std::vector<std::string> configs, csvs, svgs, notes;
  for (const auto& f : files) {
    const std::string name = base(f);
    if (ends_with(name, ".svg")) {
      svgs.push_back(f);
    } else if (ends_with(name, ".csv")) {
      csvs.push_back(f);
    } else if (ends_with(name, "config.txt") || ends_with(name, ".cfg")) {
      configs.push_back(f);
    } else if (ends_with(name, ".txt") || ends_with(name, ".log")) {
      notes.push_back(f);
    }
  }
  std::vector<std::string> missing;
  for (const char* need : {"probes.csv", "probes.svg", "phases.svg"}) {
    if (std::none_of(files.begin(), files.end(), [&](const std::string& f) { return base(f) == need; }))
      missing.push_back(need);
  }
  if (std::none_of(files.begin(), files.end(),
                   [&](const std::string& f) { return base(f).rfind("scatter_layer_", 0) == 0; })) {
    missing.push_back("scatter_layer_<n>.svg");
  }

  std::ostringstream os;
  os << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>layerscope report: "
     << xml_escape(run_dir.filename().string()) << "</title>\n"
     << "<style>\nbody{font-family:sans-serif;margin:2em;color:#222}\n"
        "table{border-collapse:collapse;font-size:12px;margin-bottom:1em}\n"
        "td,th{border:1px solid #ccc;padding:2px 6px;text-align:right}\n"
        "pre{background:#f6f6f6;padding:8px;font-size:12px}\n.note{color:#777}\n"
        ".figure{display:inline-block;margin:0 1em 1em 0;vertical-align:top}\n</style>\n</head>\n<body>\n";
  os << "<h1>Run " << xml_escape(run_dir.filename().string()) << "</h1>\n";
  if (files.empty()) {
    os << "<p class=\"notice\">No artifacts found in this run directory.</p>\n</body>\n</html>\n";
    return os.str();
  }
  if (!missing.empty()) {
    os << "<h2>Missing artifacts</h2>\n<ul>\n";
    for (const auto& m : missing) os << "<li>" << xml_escape(m) << "</li>\n";
    os << "</ul>\n";
  }
  if (!configs.empty()) {
    os << "<h2>Configuration</h2>\n";
    for (const auto& f : configs) {
      os << "<h3>" << xml_escape(f) << "</h3>\n<pre>" << xml_escape(read_file(run_dir / f)) << "</pre>\n";
    }
  }
  if (!notes.empty()) {
    os << "<h2>Notes</h2>\n";
    for (const auto& f : notes) {
      os << "<h3>" << xml_escape(f) << "</h3>\n<pre>" << xml_escape(read_file(run_dir / f)) << "</pre>\n";
    }
  }
  if (!csvs.empty()) {
    os << "<h2>Metrics</h2>\n";
    for (const auto& f : csvs) os << "<h3>" << xml_escape(f) << "</h3>\n" << csv_table(read_file(run_dir / f), 60);
  }
  if (!svgs.empty()) {
    os << "<h2>Figures</h2>\n";
    for (const auto& f : svgs) {
      os << "<div class=\"figure\"><h3>" << xml_escape(f) << "</h3>\n"
         << strip_xml_declaration(read_file(run_dir / f)) << "</div>\n";
    }
  }
  os << "</body>\n</html>\n";
  return os.str();
}

}  // namespace layerscope
