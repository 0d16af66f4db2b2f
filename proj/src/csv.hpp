#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace geolearn::cli {

/// Shortest decimal form that parses back to the same double.
std::string format_number(double v);
std::string format_number(std::int64_t v);
inline std::string format_number(int v) { return format_number(static_cast<std::int64_t>(v)); }
inline std::string format_number(std::size_t v) { return format_number(static_cast<std::int64_t>(v)); }

/// Writes `content` to a temporary sibling and renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }

  void add(std::vector<std::string> row);
  std::string str() const;
  void save(const std::filesystem::path& path) const { atomic_write(path, str()); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Numeric column; throws MissingColumn when the header lacks `name`.
  std::vector<double> column(const std::string& name) const;
  std::vector<std::string> text_column(const std::string& name) const;
  bool has(const std::string& name) const;
};

/// Throws EmptyData for a file without a header row.
CsvData read_csv(const std::filesystem::path& path);
CsvData parse_csv(const std::string& text);

}  // namespace geolearn::cli
