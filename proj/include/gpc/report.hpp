#pragma once

#include <string>
#include <vector>

namespace gpc {

// Rows = strategy variants, columns = tasks, cells = dev accuracy (percent).
// Also reusable as a plain stats table via the formatting switches.
struct ReportTable {
  std::string corner = "strategy";  // heading over the row-label column
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<double>> cells;
  std::vector<std::vector<bool>> valid;  // optional; empty means all cells valid
  bool percent_format = true;            // one decimal place
  bool mark_max = true;                  // '*' on each column's maximum

  void validate() const;  // ragged rows -> DataError
};

// True for every valid cell equal to its column's maximum (no-op mask when
// mark_max is off).
std::vector<std::vector<bool>> column_max_mask(const ReportTable& table);

std::string render_text_table(const ReportTable& table);
std::string render_csv_table(const ReportTable& table);

}  // namespace gpc
