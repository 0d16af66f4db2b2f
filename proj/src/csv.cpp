#include "csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "geolearn/error.hpp"

namespace geolearn::cli {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

std::string format_number(std::int64_t v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::DomainError, "cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    require(static_cast<bool>(out), ErrorCode::DomainError, "failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string quoted(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::size_t index_of(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  require(it != header.end(), ErrorCode::MissingColumn, "column '" + name + "' is not in the CSV header");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add(std::vector<std::string> row) {
  require(row.size() == header_.size(), ErrorCode::DimensionMismatch,
          "CSV row has " + std::to_string(row.size()) + " fields, header has " + std::to_string(header_.size()));
  rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += quoted(fields[i]);
    }
    out += "\r\n";
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

CsvData parse_csv(const std::string& text) {
  CsvData data;
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      in_quotes = any = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
      }
      field.clear();
      record.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (any || !field.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  require(!records.empty(), ErrorCode::EmptyData, "CSV has no header row");
  data.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    require(records[r].size() == data.header.size(), ErrorCode::DimensionMismatch,
            "CSV record " + std::to_string(r) + " has the wrong number of fields");
    data.rows.push_back(std::move(records[r]));
  }
  return data;
}

CsvData read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::EmptyData, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

bool CsvData::has(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

std::vector<std::string> CsvData::text_column(const std::string& name) const {
  const std::size_t k = index_of(header, name);
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[k]);
  return out;
}

std::vector<double> CsvData::column(const std::string& name) const {
  const std::size_t k = index_of(header, name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    const std::string& f = r[k];
    double v = 0.0;
    if (f == "nan") v = std::nan("");
    else if (f == "inf") v = HUGE_VAL;
    else if (f == "-inf") v = -HUGE_VAL;
    else {
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      require(res.ec == std::errc() && res.ptr == f.data() + f.size(), ErrorCode::DomainError,
              "column '" + name + "' holds non-numeric value '" + f + "'");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace geolearn::cli
