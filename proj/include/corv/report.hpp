#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace corv {

/// Shortest round-trip decimal form ("nan", "inf", "-inf" for non-finite).
std::string format_number(double x);
std::string format_number(std::uint64_t x);

/// RFC 4180 CSV with LF line endings. Fields are quoted only when needed.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void add_row(std::vector<std::string> fields);
  std::size_t n_rows() const noexcept { return rows_.size(); }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

  static std::string escape(std::string_view field);

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Minimal CSV reader for files produced by CsvWriter (quoted fields allowed).
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Log-log line plot; non-positive or non-finite points are skipped.
std::string svg_loglog(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<PlotSeries>& series);

/// Histogram bars (empirical mass per bin) with the exact bin masses drawn as a line.
std::string svg_histogram(const std::string& title, const std::vector<double>& edges,
                          const std::vector<double>& empirical, const std::vector<double>& exact);

/// Plain line plot on linear axes.
std::string svg_lines(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<PlotSeries>& series);

void write_text(const std::filesystem::path& path, std::string_view content);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

/// key=value lines in key order.
void write_manifest(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& entries);
std::map<std::string, std::string> read_manifest(const std::filesystem::path& path);

/// Library/toolchain versions for manifests.
std::map<std::string, std::string> build_info();

}  // namespace corv
