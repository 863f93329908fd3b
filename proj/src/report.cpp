#include "corv/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Core>
#include <boost/version.hpp>

#include "corv/errors.hpp"

#ifndef CORV_VERSION
#define CORV_VERSION "dev"
#endif

namespace corv {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string format_number(std::uint64_t x) { return std::to_string(x); }

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvWriter::add_row(std::vector<std::string> fields) {
  if (fields.size() != header_.size())
    throw ConfigError("csv row has " + std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header_.size()));
  rows_.push_back(std::move(fields));
}

std::string CsvWriter::escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string CsvWriter::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += escape(fields[i]);
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void CsvWriter::write(const std::filesystem::path& path) const { write_text(path, str()); }

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

constexpr double kW = 640.0;
constexpr double kH = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                               "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
  return std::string(buf, res.ptr);
}

std::string tick(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 3);
  return std::string(buf, res.ptr);
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
  double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

std::string open_svg(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kW) +
                  "\" height=\"" + fmt(kH) + "\" viewBox=\"0 0 " + fmt(kW) + " " + fmt(kH) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(kW / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       xml_escape(title) + "</text>\n";
  return s;
}

std::string axes(const Frame& f, const std::string& xl, const std::string& yl, bool logx,
                 bool logy) {
  std::string s;
  s += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" +
       fmt(kW - kLeft - kRight) + "\" height=\"" + fmt(kH - kTop - kBottom) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += "<text x=\"" + fmt(f.px(xv)) + "\" y=\"" + fmt(kH - kBottom + 16) +
         "\" text-anchor=\"middle\">" + tick(logx ? std::pow(10.0, xv) : xv) + "</text>\n";
    s += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(f.py(yv) + 4) +
         "\" text-anchor=\"end\">" + tick(logy ? std::pow(10.0, yv) : yv) + "</text>\n";
  }
  s += "<text x=\"" + fmt(kLeft + (kW - kLeft - kRight) / 2) + "\" y=\"" + fmt(kH - 10) +
       "\" text-anchor=\"middle\">" + xml_escape(xl) + "</text>\n";
  s += "<text x=\"16\" y=\"" + fmt(kTop + (kH - kTop - kBottom) / 2) +
       "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fmt(kTop + (kH - kTop - kBottom) / 2) + ")\">" + xml_escape(yl) + "</text>\n";
  return s;
}

std::string lines_svg(const std::string& title, const std::string& xl, const std::string& yl,
                      const std::vector<PlotSeries>& series, bool log) {
  auto tx = [log](double v) { return log ? std::log10(v) : v; };
  auto ok = [log](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!log || (x > 0 && y > 0));
  };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (ok(s.x[i], s.y[i])) {
        x0 = std::min(x0, tx(s.x[i]));
        x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, tx(s.y[i]));
        y1 = std::max(y1, tx(s.y[i]));
      }
  if (!std::isfinite(x0)) { x0 = 0; x1 = 1; y0 = 0; y1 = 1; }
  if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
  if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }
  const double pad = 0.05 * (y1 - y0);
  const Frame f{x0, x1, y0 - pad, y1 + pad};

  std::string out = open_svg(title) + axes(f, xl, yl, log, log);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % 8];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (ok(s.x[i], s.y[i])) pts += fmt(f.px(tx(s.x[i]))) + "," + fmt(f.py(tx(s.y[i]))) + " ";
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = kTop + 14.0 + 18.0 * static_cast<double>(k);
    out += "<line x1=\"" + fmt(kW - kRight + 10) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
           fmt(kW - kRight + 30) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + fmt(kW - kRight + 34) + "\" y=\"" + fmt(ly) + "\">" +
           xml_escape(s.label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace

std::string svg_loglog(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<PlotSeries>& series) {
  return lines_svg(title, x_label, y_label, series, true);
}

std::string svg_lines(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<PlotSeries>& series) {
  return lines_svg(title, x_label, y_label, series, false);
}

std::string svg_histogram(const std::string& title, const std::vector<double>& edges,
                          const std::vector<double>& empirical, const std::vector<double>& exact) {
  if (edges.size() < 2 || empirical.size() + 1 != edges.size() || exact.size() != empirical.size())
    throw ConfigError("svg_histogram: inconsistent bin arrays");
  double top = 0.0;
  for (std::size_t i = 0; i < empirical.size(); ++i) {
    if (std::isfinite(empirical[i])) top = std::max(top, empirical[i]);
    if (std::isfinite(exact[i])) top = std::max(top, exact[i]);
  }
  if (!(top > 0.0)) top = 1.0;
  const Frame f{edges.front(), edges.back(), 0.0, top * 1.05};
  std::string out = open_svg(title) + axes(f, "theta", "bin mass", false, false);
  for (std::size_t i = 0; i < empirical.size(); ++i) {
    const double x = f.px(edges[i]);
    const double w = f.px(edges[i + 1]) - x;
    const double y = f.py(empirical[i]);
    out += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(std::max(w, 0.0)) +
           "\" height=\"" + fmt(f.py(0.0) - y) + "\" fill=\"#9ecae1\" stroke=\"#3182bd\"/>\n";
  }
  std::string pts;
  for (std::size_t i = 0; i < exact.size(); ++i)
    pts += fmt(f.px(0.5 * (edges[i] + edges[i + 1]))) + "," + fmt(f.py(exact[i])) + " ";
  out += "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"" + pts +
         "\"/>\n";
  out += "<text x=\"" + fmt(kW - kRight + 10) + "\" y=\"" + fmt(kTop + 14) +
         "\" fill=\"#3182bd\">samples</text>\n";
  out += "<text x=\"" + fmt(kW - kRight + 10) + "\" y=\"" + fmt(kTop + 32) +
         "\" fill=\"#d62728\">exact</text>\n";
  out += "</svg>\n";
  return out;
}

void write_text(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[v & 0xf];
    v >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

void write_manifest(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& entries) {
  std::string out;
  for (const auto& [k, v] : entries) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ConfigError("manifest entry '" + k + "' contains '=' or a newline");
    out += k + "=" + v + "\n";
  }
  write_text(path, out);
}

std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("manifest line without '='", n);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::map<std::string, std::string> build_info() {
  std::map<std::string, std::string> out;
  out["version"] = CORV_VERSION;
  out["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                         std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION);
  out["boost_version"] = std::to_string(BOOST_VERSION / 100000) + "." +
                         std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                         std::to_string(BOOST_VERSION % 100);
#if defined(__clang__)
  out["compiler"] = "clang " __clang_version__;
#elif defined(__GNUC__)
  out["compiler"] = "gcc " __VERSION__;
#else
  out["compiler"] = "unknown";
#endif
  return out;
}

}  // namespace corv
