#include "purelab/csv.hpp"

#include <algorithm>
#include <charconv>
#include <system_error>

#include "purelab/common.hpp"

namespace purelab {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string fmt_int(std::int64_t v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path, const std::string& config_hash,
                     const std::vector<std::string>& columns)
    : path_(path), out_(path, std::ios::binary), ncols_(columns.size()) {
  if (!out_) throw config_error("cannot open for writing: " + path);
  out_ << "# config=" << config_hash << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out_ << ',';
    out_ << columns[i];
  }
  out_ << '\n';
}

CsvWriter::~CsvWriter() { close(); }

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  if (fields.size() != ncols_)
    throw contract_violation("csv row arity mismatch in " + path_);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

void CsvWriter::close() {
  if (out_.is_open()) {
    out_.flush();
    out_.close();
  }
}

int CsvTable::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1
                             : static_cast<int>(it - columns.begin());
}

double CsvTable::number(std::size_t row, int col) const {
  const std::string& s = rows[row][static_cast<std::size_t>(col)];
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw config_error("non-numeric csv field: " + s);
  return v;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open csv: " + path);
  CsvTable t;
  std::string line;
  std::int64_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# config=";
      if (line.rfind(tag, 0) == 0) t.config_hash = line.substr(tag.size());
      continue;
    }
    if (!have_header) {
      t.columns = split_fields(line);
      have_header = true;
      continue;
    }
    auto fields = split_fields(line);
    if (fields.size() != t.columns.size())
      throw config_error(path + ":" + fmt_int(lineno) +
                         ": row arity does not match header");
    t.rows.push_back(std::move(fields));
  }
  if (!have_header)
    throw config_error(path + ": missing csv header line");
  return t;
}

void emit_long_form(const CsvTable& src, const std::string& x_column,
                    const std::vector<std::string>& skip,
                    const std::string& out_path) {
  const int xcol = src.column(x_column);
  if (xcol < 0)
    throw config_error("long-form reshape: missing x column " + x_column);
  auto skipped = [&](const std::string& name) {
    return name == x_column ||
           std::find(skip.begin(), skip.end(), name) != skip.end();
  };
  CsvWriter w(out_path, src.config_hash, {"series", "x", "y"});
  for (std::size_t r = 0; r < src.rows.size(); ++r) {
    const std::string& x = src.rows[r][static_cast<std::size_t>(xcol)];
    for (std::size_t c = 0; c < src.columns.size(); ++c) {
      if (skipped(src.columns[c])) continue;
      w.write_row({src.columns[c], x, src.rows[r][c]});
    }
  }
}

}  // namespace purelab
