#pragma once

// Named, typed plot series with JSON, CSV and fixed-layout SVG output.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "survcheck/error.hpp"

namespace survcheck {

enum class SeriesKind { step, interval, band, points };

inline const char* to_string(SeriesKind k) {
  switch (k) {
    case SeriesKind::step: return "step";
    case SeriesKind::interval: return "interval";
    case SeriesKind::band: return "band";
    case SeriesKind::points: return "points";
  }
  return "?";
}

// Data keys by kind:
//   step     x, y
//   band     x, lower, upper
//   interval x, observed, median, inner_lo, inner_hi, outer_lo, outer_hi, ...
//   points   x, y[, size]
struct PlotSeries {
  std::string name;
  SeriesKind kind = SeriesKind::step;
  std::map<std::string, std::vector<double>> data;
  std::string role = "observed";  // observed | predictive | imputed | reference
  std::string hint_color = "#000000";

  const std::vector<double>& at(const std::string& key) const {
    auto it = data.find(key);
    require(it != data.end(), "series", "series '" + name + "' has no '" + key + "' data");
    return it->second;
  }
};

struct PlotBundle {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  nlohmann::json metadata = nlohmann::json::object();
};

inline void to_json(nlohmann::json& j, const PlotSeries& s) {
  nlohmann::json data = nlohmann::json::object();
  for (const auto& [k, v] : s.data) {
    nlohmann::json arr = nlohmann::json::array();
    for (double x : v) arr.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
    data[k] = std::move(arr);
  }
  j = {{"name", s.name},
       {"kind", to_string(s.kind)},
       {"data", data},
       {"metadata", {{"role", s.role}, {"hint_color", s.hint_color}}}};
}

inline void to_json(nlohmann::json& j, const PlotBundle& b) {
  j = {{"title", b.title},
       {"x_label", b.x_label},
       {"y_label", b.y_label},
       {"series", b.series},
       {"metadata", b.metadata}};
}

// Tidy CSV: one line per (series, key, index).
inline void write_csv(std::ostream& out, const PlotBundle& b) {
  out << "series,kind,role,key,index,value\n";
  for (const auto& s : b.series)
    for (const auto& [k, v] : s.data)
      for (std::size_t i = 0; i < v.size(); ++i)
        out << s.name << ',' << to_string(s.kind) << ',' << s.role << ',' << k << ',' << i << ','
            << v[i] << '\n';
}

namespace detail {

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double W = 640, H = 400, L = 60, R = 20, T = 36, B = 48;
  double sx(double x) const { return L + (x - x0) / (x1 - x0) * (W - L - R); }
  double sy(double y) const { return H - B - (y - y0) / (y1 - y0) * (H - T - B); }
};

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline std::string escape_xml(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

}  // namespace detail

inline std::string render_svg(const PlotBundle& b) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto grow_x = [&](double v) { if (std::isfinite(v)) { x0 = std::min(x0, v); x1 = std::max(x1, v); } };
  auto grow_y = [&](double v) { if (std::isfinite(v)) { y0 = std::min(y0, v); y1 = std::max(y1, v); } };
  for (const auto& s : b.series)
    for (const auto& [k, v] : s.data) {
      if (k == "size") continue;
      for (double x : v) {
        if (k == "x") grow_x(x);
        else grow_y(x);
      }
    }
  if (!(x1 > x0)) { x0 = std::isfinite(x0) ? x0 - 1 : 0; x1 = x0 + 2; }
  if (!(y1 > y0)) { y0 = std::isfinite(y0) ? y0 - 1 : 0; y1 = y0 + 2; }
  const detail::Frame f{x0, x1, y0, y1};
  using detail::fmt;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.W << "\" height=\"" << f.H
    << "\" viewBox=\"0 0 " << f.W << ' ' << f.H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << f.W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << detail::escape_xml(b.title) << "</text>\n";
  // axes
  o << "<line x1=\"" << f.L << "\" y1=\"" << f.H - f.B << "\" x2=\"" << f.W - f.R << "\" y2=\""
    << f.H - f.B << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << f.L << "\" y1=\"" << f.T << "\" x2=\"" << f.L << "\" y2=\"" << f.H - f.B
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << fmt(f.sx(xv)) << "\" y=\"" << f.H - f.B + 16
      << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(xv) << "</text>\n"
      << "<text x=\"" << f.L - 6 << "\" y=\"" << fmt(f.sy(yv) + 3)
      << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(yv) << "</text>\n";
  }
  o << "<text x=\"" << f.W / 2 << "\" y=\"" << f.H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << detail::escape_xml(b.x_label) << "</text>\n"
    << "<text x=\"14\" y=\"" << f.H / 2 << "\" transform=\"rotate(-90 14 " << f.H / 2
    << ")\" text-anchor=\"middle\" font-size=\"12\">" << detail::escape_xml(b.y_label) << "</text>\n";

  for (const auto& s : b.series) {
    const auto& col = s.hint_color;
    switch (s.kind) {
      case SeriesKind::step: {
        const auto& x = s.at("x");
        const auto& y = s.at("y");
        if (x.empty()) break;
        o << "<path fill=\"none\" stroke=\"" << col << "\" stroke-width=\""
          << (s.role == "observed" ? 2.0 : 0.6) << "\" stroke-opacity=\""
          << (s.role == "observed" ? 1.0 : 0.4) << "\" d=\"M" << fmt(f.sx(x[0])) << ','
          << fmt(f.sy(y[0]));
        for (std::size_t i = 1; i < x.size(); ++i)
          o << " H" << fmt(f.sx(x[i])) << " V" << fmt(f.sy(y[i]));
        o << "\"/>\n";
        break;
      }
      case SeriesKind::band: {
        const auto& x = s.at("x");
        const auto& lo = s.at("lower");
        const auto& hi = s.at("upper");
        if (x.empty()) break;
        o << "<path fill=\"" << col << "\" fill-opacity=\"0.25\" stroke=\"none\" d=\"M";
        for (std::size_t i = 0; i < x.size(); ++i)
          o << (i ? " L" : "") << fmt(f.sx(x[i])) << ',' << fmt(f.sy(hi[i]));
        for (std::size_t i = x.size(); i-- > 0;) o << " L" << fmt(f.sx(x[i])) << ',' << fmt(f.sy(lo[i]));
        o << " Z\"/>\n";
        break;
      }
      case SeriesKind::interval: {
        const auto& x = s.at("x");
        const auto& med = s.at("median");
        const auto& ilo = s.at("inner_lo");
        const auto& ihi = s.at("inner_hi");
        const auto& olo = s.at("outer_lo");
        const auto& ohi = s.at("outer_hi");
        const auto& obs = s.at("observed");
        auto imp = s.data.find("imputed");
        for (std::size_t i = 0; i < x.size(); ++i) {
          const auto px = fmt(f.sx(x[i]));
          o << "<line x1=\"" << px << "\" x2=\"" << px << "\" y1=\"" << fmt(f.sy(olo[i])) << "\" y2=\""
            << fmt(f.sy(ohi[i])) << "\" stroke=\"" << col << "\" stroke-width=\"1\"/>"
            << "<line x1=\"" << px << "\" x2=\"" << px << "\" y1=\"" << fmt(f.sy(ilo[i])) << "\" y2=\""
            << fmt(f.sy(ihi[i])) << "\" stroke=\"" << col << "\" stroke-width=\"3\"/>"
            << "<circle cx=\"" << px << "\" cy=\"" << fmt(f.sy(med[i])) << "\" r=\"2.5\" fill=\"" << col
            << "\"/>";
          const bool is_imp = imp != s.data.end() && imp->second[i] != 0.0;
          o << "<circle cx=\"" << px << "\" cy=\"" << fmt(f.sy(obs[i])) << "\" r=\"2.5\" fill=\""
            << (is_imp ? "#d62728" : "black") << "\"/>\n";
        }
        break;
      }
      case SeriesKind::points: {
        const auto& x = s.at("x");
        const auto& y = s.at("y");
        auto sz = s.data.find("size");
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double r = sz != s.data.end() ? 1.0 + 4.0 * sz->second[i] : 2.0;
          o << "<circle cx=\"" << fmt(f.sx(x[i])) << "\" cy=\"" << fmt(f.sy(y[i])) << "\" r=\"" << fmt(r)
            << "\" fill=\"" << col << "\" fill-opacity=\"0.7\"/>\n";
        }
        break;
      }
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace survcheck
