#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>

#include "xspace/attribution.hpp"
#include "xspace/error.hpp"
#include "xspace/space.hpp"

namespace xspace {

struct PlotOptions {
  // Maps difference-space score i onto time step i in the top panel.
  bool overlay_difference = true;
  double width = 800.0;
  double panel_height = 160.0;
};

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

// Symmetric diverging scale: -1 blue, 0 white, +1 red.
inline std::string heat_color(double v) {
  v = std::clamp(v, -1.0, 1.0);
  const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(v))));
  char buf[8];
  if (v >= 0.0) {
    std::snprintf(buf, sizeof buf, "#ff%02x%02x", fade, fade);
  } else {
    std::snprintf(buf, sizeof buf, "#%02x%02xff", fade, fade);
  }
  return buf;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Scores laid out on the time axis, or empty when the space has no
// per-time-step reading (frequency, time_frequency).
inline Vec time_aligned_scores(const Space& space, std::span<const double> scores, const PlotOptions& opt) {
  const std::size_t n = space.input_len();
  switch (space.kind()) {
    case SpaceKind::time:
    case SpaceKind::min_zero: return Vec(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(n));
    case SpaceKind::difference:
      return opt.overlay_difference ? Vec(scores.begin(), scores.end()) : Vec{};
    case SpaceKind::decomposition: {
      Vec out(n, 0.0);
      for (std::size_t k = 0; k < scores.size() / n; ++k)
        for (std::size_t t = 0; t < n; ++t) out[t] += scores[k * n + t];
      return out;
    }
    default: return {};
  }
}

inline void heat_strip(std::ostream& svg, std::span<const double> scores, double scale, double x0, double y0,
                       double width, double height, const std::vector<std::string>* labels) {
  const double cell = width / static_cast<double>(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    svg << "<rect x=\"" << num(x0 + cell * static_cast<double>(i)) << "\" y=\"" << num(y0) << "\" width=\""
        << num(cell + 0.01) << "\" height=\"" << num(height) << "\" fill=\""
        << heat_color(scale > 0.0 ? scores[i] / scale : 0.0) << "\">";
    if (labels != nullptr) svg << "<title>" << xml_escape((*labels)[i]) << "</title>";
    svg << "</rect>\n";
  }
}

}  // namespace detail

/// Writes an SVG with the series as a polyline over a signed heat strip and,
/// for non-time spaces, a second panel with one cell per coordinate.
inline std::string attribution_svg(std::span<const double> x, const Space& space, const Attribution& a,
                                   const PlotOptions& opt = {}) {
  require_length(x.size(), space.input_len(), "attribution plot series");
  require_length(a.scores.size(), space.dim(), "attribution plot scores");
  const bool second = space.kind() != SpaceKind::time;
  const double margin = 30.0, w = opt.width, h = opt.panel_height;
  const double inner = w - 2.0 * margin;
  const double total_h = margin + h + (second ? margin + h : 0.0) + margin;
  const double scale = detail::max_abs(a.scores);

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::num(w) << "\" height=\""
      << detail::num(total_h) << "\" viewBox=\"0 0 " << detail::num(w) << ' ' << detail::num(total_h) << "\">\n"
      << "<text x=\"" << detail::num(margin) << "\" y=\"20\" font-size=\"12\">"
      << detail::xml_escape(a.space_id + " / " + std::string(to_string(a.method)) + " / class " +
                            std::to_string(a.target_class))
      << "</text>\n";

  const Vec strip = detail::time_aligned_scores(space, a.scores, opt);
  if (!strip.empty()) {
    const double strip_scale = space.kind() == SpaceKind::decomposition ? detail::max_abs(strip) : scale;
    detail::heat_strip(svg, strip, strip_scale, margin, margin, inner, h, nullptr);
  } else {
    svg << "<rect x=\"" << detail::num(margin) << "\" y=\"" << detail::num(margin) << "\" width=\""
        << detail::num(inner) << "\" height=\"" << detail::num(h) << "\" fill=\"#ffffff\" stroke=\"#cccccc\"/>\n";
  }
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double span = *hi > *lo ? *hi - *lo : 1.0;
  svg << "<polyline fill=\"none\" stroke=\"#000000\" stroke-width=\"1.5\" points=\"";
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double px = margin + inner * (static_cast<double>(t) + 0.5) / static_cast<double>(x.size());
    const double py = margin + h - 4.0 - (h - 8.0) * (x[t] - *lo) / span;
    svg << (t ? " " : "") << detail::num(px) << ',' << detail::num(py);
  }
  svg << "\"/>\n";

  if (second) {
    const auto labels = space.bin_labels();
    const double y0 = margin + h + margin;
    detail::heat_strip(svg, a.scores, scale, margin, y0, inner, h, &labels);
    const std::size_t ticks = std::min<std::size_t>(labels.size(), 8);
    for (std::size_t k = 0; k < ticks; ++k) {
      const std::size_t i = k * (labels.size() - 1) / std::max<std::size_t>(ticks - 1, 1);
      const double px = margin + inner * (static_cast<double>(i) + 0.5) / static_cast<double>(labels.size());
      svg << "<text x=\"" << detail::num(px) << "\" y=\"" << detail::num(y0 + h + 14.0)
          << "\" font-size=\"9\" text-anchor=\"middle\">" << detail::xml_escape(labels[i]) << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void emit_attribution_plot(std::span<const double> x, const Space& space, const Attribution& a,
                                  const std::string& path, const PlotOptions& opt = {}) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path);
  out << attribution_svg(x, space, a, opt);
  require(static_cast<bool>(out), Errc::io_error, "failed writing " + path);
}

}  // namespace xspace
