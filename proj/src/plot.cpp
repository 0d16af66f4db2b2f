#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "config.hpp"
#include "geolearn/error.hpp"

namespace geolearn::cli {

PlotSpec parse_plot_spec(const std::string& spec) {
  std::string text = spec;
  if (std::filesystem::is_regular_file(spec)) {
    std::ifstream in(spec);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(ConfigError::Kind::Parse, "plot spec line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!doc.IsMap()) throw ConfigError(ConfigError::Kind::Parse, "plot spec must be a mapping or an existing file");
  Section s(doc, "plot");
  PlotSpec p;
  const auto kind = s.get<std::string>("kind", "line");
  if (kind == "line") p.kind = PlotKind::Line;
  else if (kind == "heatmap") p.kind = PlotKind::Heatmap;
  else s.fail("kind", "'" + kind + "' is not one of {line, heatmap}");
  p.x = s.need<std::string>("x");
  if (s.has("y") && s.is_scalar("y")) p.y = {s.need<std::string>("y")};
  else p.y = s.need<std::vector<std::string>>("y");
  if (p.y.empty()) s.fail("y", "names no column");
  if (p.kind == PlotKind::Heatmap) {
    p.value = s.need<std::string>("value");
    if (p.y.size() != 1) s.fail("y", "must name one column for a heatmap");
  }
  p.log_x = s.get("log_x", false);
  p.log_y = s.get("log_y", false);
  p.title = s.get<std::string>("title", "");
  p.x_label = s.get<std::string>("x_label", p.x);
  p.y_label = s.get<std::string>("y_label", p.kind == PlotKind::Line && p.y.size() > 1 ? std::string() : p.y.front());
  if (s.has("output")) p.output = s.need<std::string>("output");
  s.finish();
  return p;
}

namespace {

constexpr double kWidth = 720, kHeight = 480;
constexpr double kLeft = 80, kRight = 160, kTop = 40, kBottom = 60;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;
  double px_lo = 0.0, px_hi = 1.0;

  double map(double v) const {
    const double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
    return px_lo + t * (px_hi - px_lo);
  }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      const int a = static_cast<int>(std::ceil(lo - 1e-9)), b = static_cast<int>(std::floor(hi + 1e-9));
      const int stride = std::max(1, (b - a + 1) / 8 + 1);
      for (int k = a; k <= b; k += stride) out.push_back(std::pow(10.0, k));
      return out;
    }
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) out.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
    return out;
  }
};

Axis make_axis(const std::vector<double>& values, bool log, double px_lo, double px_hi, const std::string& name) {
  Axis a;
  a.log = log;
  a.px_lo = px_lo;
  a.px_hi = px_hi;
  bool any = false;
  double lo = 0.0, hi = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || (log && v <= 0.0)) continue;
    const double t = log ? std::log10(v) : v;
    lo = any ? std::min(lo, t) : t;
    hi = any ? std::max(hi, t) : t;
    any = true;
  }
  require(any, ErrorCode::EmptyData, "column '" + name + "' has no plottable values");
  if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
    lo -= 0.5;
    hi += 0.5;
  }
  a.lo = lo;
  a.hi = hi;
  return a;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  const double f = t * 4.0;
  const int k = std::min(3, static_cast<int>(f));
  const double u = f - k;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(stops[k][0] + u * (stops[k + 1][0] - stops[k][0])),
                static_cast<int>(stops[k][1] + u * (stops[k + 1][1] - stops[k][1])),
                static_cast<int>(stops[k][2] + u * (stops[k + 1][2] - stops[k][2])));
  return buf;
}

void frame(std::ostringstream& svg, const Axis& ax, const Axis& ay, const PlotSpec& spec) {
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
      << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ax.ticks()) {
    const double x = ax.map(t);
    svg << "<line x1=\"" << x << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << x << "\" y2=\"" << kHeight - kBottom + 5
        << "\" stroke=\"black\"/>\n<text x=\"" << x << "\" y=\"" << kHeight - kBottom + 18
        << "\" font-size=\"11\" text-anchor=\"middle\">" << num(t) << "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double y = ay.map(t);
    svg << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4
        << "\" font-size=\"11\" text-anchor=\"end\">" << num(t) << "</text>\n";
  }
  const double cx = kLeft + 0.5 * (kWidth - kLeft - kRight);
  const double cy = kTop + 0.5 * (kHeight - kTop - kBottom);
  svg << "<text x=\"" << cx << "\" y=\"" << kHeight - 15 << "\" font-size=\"13\" text-anchor=\"middle\">"
      << escape(spec.x_label) << (spec.log_x ? " (log)" : "") << "</text>\n";
  svg << "<text x=\"20\" y=\"" << cy << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 20 " << cy
      << ")\">" << escape(spec.y_label) << (spec.log_y ? " (log)" : "") << "</text>\n";
  if (!spec.title.empty())
    svg << "<text x=\"" << cx << "\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">" << escape(spec.title) << "</text>\n";
}

std::string line_plot(const CsvData& data, const PlotSpec& spec) {
  const auto xs = data.column(spec.x);
  std::vector<std::vector<double>> ys;
  std::vector<double> all;
  for (const auto& name : spec.y) {
    ys.push_back(data.column(name));
    all.insert(all.end(), ys.back().begin(), ys.back().end());
  }
  const Axis ax = make_axis(xs, spec.log_x, kLeft, kWidth - kRight, spec.x);
  const Axis ay = make_axis(all, spec.log_y, kHeight - kBottom, kTop, spec.y.front());
  std::ostringstream svg;
  frame(svg, ax, ay, spec);
  for (std::size_t s = 0; s < ys.size(); ++s) {
    const char* colour = kPalette[s % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double x = xs[i], y = ys[s][i];
      if (!std::isfinite(x) || !std::isfinite(y) || (spec.log_x && x <= 0.0) || (spec.log_y && y <= 0.0)) continue;
      svg << ax.map(x) << ',' << ay.map(y) << ' ';
    }
    svg << "\"/>\n";
    const double ly = kTop + 15.0 + 18.0 * static_cast<double>(s);
    svg << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - kRight + 30 << "\" y2=\""
        << ly << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n<text x=\"" << kWidth - kRight + 35 << "\" y=\""
        << ly + 4 << "\" font-size=\"11\">" << escape(spec.y[s]) << "</text>\n";
  }
  return svg.str();
}

/// Each row of constant y is drawn as adjacent cells whose edges sit halfway
/// between neighbouring x values, so rows may use different x grids.
std::string heatmap(const CsvData& data, const PlotSpec& spec) {
  const auto xs = data.column(spec.x);
  const auto ys = data.column(spec.y.front());
  const auto raw = data.text_column(spec.value);
  require(!xs.empty(), ErrorCode::EmptyData, "CSV has a header but no rows");

  bool numeric = true;
  std::vector<double> values;
  try {
    values = data.column(spec.value);
  } catch (const Error&) {
    numeric = false;
  }
  std::map<std::string, std::string> categories;
  double vmin = 0.0, vmax = 1.0;
  if (numeric) {
    bool any = false;
    for (double v : values)
      if (std::isfinite(v)) {
        vmin = any ? std::min(vmin, v) : v;
        vmax = any ? std::max(vmax, v) : v;
        any = true;
      }
    if (vmax <= vmin) vmax = vmin + 1.0;
  } else {
    for (const auto& r : raw) categories.emplace(r, "");
    std::size_t k = 0;
    for (auto& [name, colour] : categories) colour = kPalette[k++ % std::size(kPalette)];
  }

  const Axis ax = make_axis(xs, spec.log_x, kLeft, kWidth - kRight, spec.x);
  const Axis ay = make_axis(ys, spec.log_y, kHeight - kBottom, kTop, spec.y.front());
  std::map<double, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (std::isfinite(xs[i]) && std::isfinite(ys[i]) && !(spec.log_x && xs[i] <= 0.0) && !(spec.log_y && ys[i] <= 0.0))
      rows[ys[i]].push_back(i);
  std::vector<double> row_keys;
  for (const auto& [y, idx] : rows) row_keys.push_back(ay.map(y));

  std::ostringstream svg;
  std::size_t r = 0;
  for (auto& [y, idx] : rows) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    const double py = row_keys[r];
    const double above = r + 1 < row_keys.size() ? 0.5 * (row_keys[r + 1] + py) : std::max(kTop, py - 10.0);
    const double below = r > 0 ? 0.5 * (row_keys[r - 1] + py) : std::min(kHeight - kBottom, py + 10.0);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double px = ax.map(xs[idx[k]]);
      const double left = k > 0 ? 0.5 * (ax.map(xs[idx[k - 1]]) + px) : px;
      const double right = k + 1 < idx.size() ? 0.5 * (ax.map(xs[idx[k + 1]]) + px) : px;
      const std::string fill = numeric ? ramp((values[idx[k]] - vmin) / (vmax - vmin)) : categories[raw[idx[k]]];
      svg << "<rect x=\"" << left << "\" y=\"" << std::min(above, below) << "\" width=\"" << std::max(0.5, right - left)
          << "\" height=\"" << std::abs(below - above) << "\" fill=\"" << fill << "\" stroke=\"none\"/>\n";
    }
    ++r;
  }
  frame(svg, ax, ay, spec);
  if (numeric) {
    for (int k = 0; k <= 4; ++k) {
      const double t = k / 4.0;
      const double ly = kTop + 15.0 + 18.0 * k;
      svg << "<rect x=\"" << kWidth - kRight + 10 << "\" y=\"" << ly - 6 << "\" width=\"20\" height=\"12\" fill=\"" << ramp(t)
          << "\"/>\n<text x=\"" << kWidth - kRight + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">"
          << num(vmin + t * (vmax - vmin)) << "</text>\n";
    }
  } else {
    int k = 0;
    for (const auto& [name, colour] : categories) {
      const double ly = kTop + 15.0 + 18.0 * k++;
      svg << "<rect x=\"" << kWidth - kRight + 10 << "\" y=\"" << ly - 6 << "\" width=\"20\" height=\"12\" fill=\"" << colour
          << "\"/>\n<text x=\"" << kWidth - kRight + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << escape(name)
          << "</text>\n";
    }
  }
  return svg.str();
}

}  // namespace

std::string render_svg(const CsvData& data, const PlotSpec& spec) {
  for (const auto& name : spec.y) data.column(name);
  data.column(spec.x);
  if (spec.kind == PlotKind::Heatmap) data.text_column(spec.value);
  require(!data.rows.empty(), ErrorCode::EmptyData, "CSV has a header but no rows");
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" viewBox=\"0 0 "
      << kWidth << ' ' << kHeight << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << (spec.kind == PlotKind::Line ? line_plot(data, spec) : heatmap(data, spec));
  svg << "</svg>\n";
  return svg.str();
}

std::filesystem::path emit_plot(const std::filesystem::path& csv, const PlotSpec& spec) {
  const CsvData data = read_csv(csv);
  auto out = spec.output.value_or(std::filesystem::path(csv).replace_extension(".svg"));
  atomic_write(out, render_svg(data, spec));
  return out;
}

}  // namespace geolearn::cli
