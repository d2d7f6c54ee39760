#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace purelab {

// Locale-independent decimal with 17 significant digits (lossless for
// doubles), used for every numeric field the artifact writes.
std::string fmt_double(double v);
std::string fmt_int(std::int64_t v);

// Comma-separated values; line 1 is a `# config=<hash>` comment, line 2 the
// column header, fields carry no trailing delimiter.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& config_hash,
            const std::vector<std::string>& columns);
  ~CsvWriter();

  void write_row(const std::vector<std::string>& fields);
  void close();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t ncols_;
};

struct CsvTable {
  std::string config_hash;  // empty when the comment line is absent
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;
  double number(std::size_t row, int col) const;
};

// Errors name the file and 1-based line.
CsvTable read_csv(const std::string& path);

// Wide-to-long reshape: one (series, x, y) row per kept column per source
// row, keyed by x_column. Columns in `skip` (plus x_column) are dropped.
// The reshape is lossless over the kept columns.
void emit_long_form(const CsvTable& src, const std::string& x_column,
                    const std::vector<std::string>& skip,
                    const std::string& out_path);

}  // namespace purelab
