#include "ssdlab/harness/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "ssdlab/data/coco.hpp"
#include "ssdlab/data/scene.hpp"

namespace ssdlab::harness {

namespace {

double parse_number(const std::string& text, std::size_t line, const char* column) {
  double v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw std::runtime_error("metrics csv line " + std::to_string(line) + ": bad " + column + " '" + text + "'");
  }
  return v;
}

std::uint64_t parse_integer(const std::string& text, std::size_t line, const char* column) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw std::runtime_error("metrics csv line " + std::to_string(line) + ": bad " + column + " '" + text + "'");
  }
  return v;
}

std::string per_class_json(const std::vector<std::optional<double>>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += values[i] ? format_number(*values[i]) : "null";
  }
  return out + "]";
}

std::vector<std::optional<double>> parse_per_class(const std::string& text, std::size_t line) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') {
    throw std::runtime_error("metrics csv line " + std::to_string(line) + ": per_class_json must be a JSON array");
  }
  std::vector<std::optional<double>> out;
  const std::string body = text.substr(1, text.size() - 2);
  if (body.empty()) return out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "null") out.emplace_back();
    else out.emplace_back(parse_number(item, line, "per-class AP"));
  }
  return out;
}

// Splits one CSV line, honouring double-quoted fields (no embedded quotes).
std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current += ch;
    }
  }
  if (quoted) throw std::runtime_error("metrics csv line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(current));
  return fields;
}

std::string percent_label(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Rows of one (mode, fraction) group, ordered by seed so aggregation is order independent.
using GroupKey = std::pair<std::string, double>;

std::map<GroupKey, std::vector<const MetricsRow*>> group_rows(std::span<const MetricsRow> rows) {
  std::map<GroupKey, std::vector<const MetricsRow*>> groups;
  for (const auto& r : rows) groups[{r.mode, r.fraction}].push_back(&r);
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(), [](const MetricsRow* a, const MetricsRow* b) {
      return std::tie(a->seed, a->iteration) < std::tie(b->seed, b->iteration);
    });
  }
  return groups;
}

// Supervised first, then semi, then anything else alphabetically.
int mode_rank(const std::string& mode) {
  if (mode == "supervised") return 0;
  if (mode == "semi") return 1;
  return 2;
}

std::vector<std::string> ordered_modes(std::span<const SummaryCell> cells) {
  std::vector<std::string> modes;
  for (const auto& c : cells) {
    if (std::find(modes.begin(), modes.end(), c.mode) == modes.end()) modes.push_back(c.mode);
  }
  std::sort(modes.begin(), modes.end(), [](const std::string& a, const std::string& b) {
    return std::make_pair(mode_rank(a), a) < std::make_pair(mode_rank(b), b);
  });
  return modes;
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string format_number(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string write_metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += r.mode + "," + format_number(r.fraction) + "," + std::to_string(r.seed) + "," + std::to_string(r.iteration) + "," +
           format_number(r.map_5095) + "," + format_number(r.map_50) + ",\"" + per_class_json(r.per_class) + "\"," +
           format_number(r.seconds) + "\n";
  }
  return out;
}

std::vector<MetricsRow> read_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error("metrics csv: header must be exactly '" + std::string(kCsvHeader) + "'");
  }
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line, line_no);
    if (f.size() != 8) {
      throw std::runtime_error("metrics csv line " + std::to_string(line_no) + ": expected 8 fields, got " +
                               std::to_string(f.size()));
    }
    MetricsRow r;
    r.mode = f[0];
    r.fraction = parse_number(f[1], line_no, "fraction");
    r.seed = parse_integer(f[2], line_no, "seed");
    r.iteration = parse_integer(f[3], line_no, "iteration");
    r.map_5095 = parse_number(f[4], line_no, "map_5095");
    r.map_50 = parse_number(f[5], line_no, "map_50");
    r.per_class = parse_per_class(f[6], line_no);
    r.seconds = parse_number(f[7], line_no, "seconds");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_mean_std(double mean, double stdev) { return fixed2(mean) + " ± " + fixed2(stdev); }

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0;
  double total = 0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double sample_stdev(std::span<const double> values) {
  if (values.size() < 2) return 0;
  const double m = mean_of(values);
  double ss = 0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::vector<SummaryCell> summarize(std::span<const MetricsRow> rows) {
  std::vector<SummaryCell> cells;
  for (const auto& [key, members] : group_rows(rows)) {
    std::vector<double> a, b;
    for (const auto* r : members) {
      a.push_back(r->map_5095);
      b.push_back(r->map_50);
    }
    SummaryCell cell;
    cell.mode = key.first;
    cell.fraction = key.second;
    cell.runs = members.size();
    cell.mean_5095 = mean_of(a);
    cell.stdev_5095 = sample_stdev(a);
    cell.mean_50 = mean_of(b);
    cell.stdev_50 = sample_stdev(b);
    cells.push_back(cell);
  }
  std::stable_sort(cells.begin(), cells.end(), [](const SummaryCell& x, const SummaryCell& y) {
    return std::make_tuple(mode_rank(x.mode), x.mode, x.fraction) < std::make_tuple(mode_rank(y.mode), y.mode, y.fraction);
  });
  return cells;
}

PerClassTable per_class_table(std::span<const MetricsRow> rows, const std::vector<std::string>& class_names) {
  PerClassTable table;
  table.class_names = class_names;
  const auto groups = group_rows(rows);
  std::vector<GroupKey> keys;
  for (const auto& [key, members] : groups) keys.push_back(key);
  std::stable_sort(keys.begin(), keys.end(), [](const GroupKey& x, const GroupKey& y) {
    return std::make_tuple(mode_rank(x.first), x.first, x.second) < std::make_tuple(mode_rank(y.first), y.first, y.second);
  });
  table.cells.assign(class_names.size(), std::vector<std::optional<double>>(keys.size()));
  for (std::size_t col = 0; col < keys.size(); ++col) {
    table.columns.push_back(keys[col].first + " " + percent_label(keys[col].second) + "%");
    const auto& members = groups.at(keys[col]);
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      std::vector<double> values;
      for (const auto* r : members) {
        if (c < r->per_class.size() && r->per_class[c]) values.push_back(*r->per_class[c]);
      }
      if (!values.empty()) table.cells[c][col] = mean_of(values);
    }
  }
  return table;
}

std::string render_summary_markdown(std::span<const SummaryCell> cells) {
  std::vector<double> fractions;
  for (const auto& c : cells) fractions.push_back(c.fraction);
  std::sort(fractions.begin(), fractions.end());
  fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

  std::string out;
  for (const auto& [title, pick] :
       {std::pair{"mAP@[0.5:0.95]", 0}, std::pair{"mAP@0.5", 1}}) {
    out += std::string("### ") + title + " (mean ± sample stdev over seeds)\n\n| Method |";
    for (double f : fractions) out += " " + percent_label(f) + "% |";
    out += "\n|---|";
    for (std::size_t i = 0; i < fractions.size(); ++i) out += "---|";
    out += "\n";
    for (const auto& mode : ordered_modes(cells)) {
      out += "| " + mode + " |";
      for (double f : fractions) {
        const auto it = std::find_if(cells.begin(), cells.end(),
                                     [&](const SummaryCell& c) { return c.mode == mode && c.fraction == f; });
        if (it == cells.end()) out += " – |";
        else out += " " + (pick == 0 ? format_mean_std(it->mean_5095, it->stdev_5095) : format_mean_std(it->mean_50, it->stdev_50)) + " |";
      }
      out += "\n";
    }
    out += "\n";
  }
  return out;
}

std::string render_summary_csv(std::span<const SummaryCell> cells) {
  std::string out = "mode,fraction,runs,mean_map_5095,stdev_map_5095,mean_map_50,stdev_map_50\n";
  for (const auto& c : cells) {
    out += c.mode + "," + format_number(c.fraction) + "," + std::to_string(c.runs) + "," + fixed2(c.mean_5095) + "," +
           fixed2(c.stdev_5095) + "," + fixed2(c.mean_50) + "," + fixed2(c.stdev_50) + "\n";
  }
  return out;
}

std::string render_per_class_markdown(const PerClassTable& table) {
  std::string out = "### Per-class AP@[0.5:0.95] (mean over seeds)\n\n| Class |";
  for (const auto& col : table.columns) out += " " + col + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < table.columns.size(); ++i) out += "---|";
  out += "\n";
  for (std::size_t c = 0; c < table.class_names.size(); ++c) {
    out += "| " + table.class_names[c] + " |";
    for (const auto& cell : table.cells[c]) out += " " + (cell ? fixed2(*cell) : std::string("–")) + " |";
    out += "\n";
  }
  return out;
}

std::string render_curve_svg(const std::string& title, std::span<const MetricsRow> trajectory) {
  constexpr double width = 480, height = 300, left = 50, right = 20, top = 30, bottom = 40;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  std::size_t max_iter = 1;
  double max_map = 10;
  for (const auto& r : trajectory) {
    max_iter = std::max(max_iter, r.iteration);
    max_map = std::max({max_map, r.map_5095, r.map_50});
  }
  max_map = std::min(100.0, std::ceil(max_map / 10.0) * 10.0);
  auto px = [&](double it) { return left + plot_w * it / static_cast<double>(max_iter); };
  auto py = [&](double m) { return top + plot_h * (1.0 - m / max_map); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(title) << "</text>\n";
  // Axes with five horizontal grid lines.
  for (int k = 0; k <= 5; ++k) {
    const double m = max_map * k / 5.0, y = py(m);
    svg << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fixed2(m) << "</text>\n";
  }
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 8 << "\" text-anchor=\"middle\">iteration (max "
      << max_iter << ")</text>\n";
  const std::pair<const char*, const char*> series[] = {{"mAP@[.5:.95]", "#1f77b4"}, {"mAP@.5", "#d62728"}};
  for (std::size_t s = 0; s < 2; ++s) {
    svg << "<polyline fill=\"none\" stroke=\"" << series[s].second << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
      const double m = s == 0 ? trajectory[i].map_5095 : trajectory[i].map_50;
      svg << (i ? " " : "") << px(static_cast<double>(trajectory[i].iteration)) << "," << py(m);
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << left + 10 << "\" y=\"" << top + 14 + 14 * s << "\" fill=\"" << series[s].second << "\">"
        << xml_escape(series[s].first) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string run_name(const std::string& mode, double fraction, std::uint64_t seed) {
  return mode + "_f" + percent_label(fraction) + "_s" + std::to_string(seed);
}

void emit_report(const std::filesystem::path& dir, std::span<const MetricsRow> test_rows,
                 std::span<const MetricsRow> curve_rows, std::vector<std::string> class_names) {
  if (test_rows.empty()) throw std::invalid_argument("emit_report: no rows");
  if (class_names.empty()) {
    std::size_t classes = 0;
    for (const auto& r : test_rows) classes = std::max(classes, r.per_class.size());
    const auto& families = data::shape_family_names();
    for (std::size_t c = 0; c < classes; ++c) {
      class_names.push_back(c < families.size() ? families[c] : "class_" + std::to_string(c));
    }
  }
  std::filesystem::create_directories(dir);
  const auto cells = summarize(test_rows);
  data::write_text_file(dir / "summary.md", render_summary_markdown(cells));
  data::write_text_file(dir / "summary.csv", render_summary_csv(cells));
  data::write_text_file(dir / "per_class.md", render_per_class_markdown(per_class_table(test_rows, class_names)));

  std::map<std::tuple<std::string, double, std::uint64_t>, std::vector<MetricsRow>> runs;
  for (const auto& r : curve_rows) runs[{r.mode, r.fraction, r.seed}].push_back(r);
  if (!runs.empty()) std::filesystem::create_directories(dir / "curves");
  for (auto& [key, rows] : runs) {
    std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) { return a.iteration < b.iteration; });
    const auto name = run_name(std::get<0>(key), std::get<1>(key), std::get<2>(key));
    data::write_text_file(dir / "curves" / (name + ".svg"), render_curve_svg(name + " (validation)", rows));
  }
}

}  // namespace ssdlab::harness
