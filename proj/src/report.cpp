#include "gpc/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "gpc/errors.hpp"

namespace gpc {
namespace {

std::string format_cell(const ReportTable& table, std::size_t r, std::size_t c) {
  if (!table.valid.empty() && !table.valid[r][c]) return "-";
  std::ostringstream out;
  if (table.percent_format)
    out << std::fixed << std::setprecision(1) << table.cells[r][c];
  else
    out << table.cells[r][c];
  return out.str();
}

bool cell_valid(const ReportTable& table, std::size_t r, std::size_t c) {
  return table.valid.empty() || table.valid[r][c];
}

}  // namespace

void ReportTable::validate() const {
  if (cells.size() != row_labels.size())
    throw DataError("report table has " + std::to_string(cells.size()) + " cell rows for " +
                    std::to_string(row_labels.size()) + " row labels");
  for (const auto& row : cells)
    if (row.size() != col_labels.size())
      throw DataError("ragged report table: a row has " + std::to_string(row.size()) +
                      " cells for " + std::to_string(col_labels.size()) + " columns");
  if (!valid.empty()) {
    if (valid.size() != cells.size()) throw DataError("report table validity mask is ragged");
    for (const auto& row : valid)
      if (row.size() != col_labels.size()) throw DataError("report table validity mask is ragged");
  }
}

std::vector<std::vector<bool>> column_max_mask(const ReportTable& table) {
  table.validate();
  std::vector<std::vector<bool>> mask(table.cells.size(),
                                      std::vector<bool>(table.col_labels.size(), false));
  if (!table.mark_max) return mask;
  for (std::size_t c = 0; c < table.col_labels.size(); ++c) {
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t r = 0; r < table.cells.size(); ++r)
      if (cell_valid(table, r, c)) {
        best = std::max(best, table.cells[r][c]);
        any = true;
      }
    if (!any) continue;
    for (std::size_t r = 0; r < table.cells.size(); ++r)
      if (cell_valid(table, r, c) && table.cells[r][c] == best) mask[r][c] = true;
  }
  return mask;
}

std::string render_text_table(const ReportTable& table) {
  table.validate();
  auto mask = column_max_mask(table);

  std::size_t label_width = table.corner.size();
  for (const auto& l : table.row_labels) label_width = std::max(label_width, l.size());

  std::vector<std::vector<std::string>> rendered(table.cells.size());
  std::vector<std::size_t> col_width(table.col_labels.size());
  for (std::size_t c = 0; c < table.col_labels.size(); ++c)
    col_width[c] = table.col_labels[c].size();
  for (std::size_t r = 0; r < table.cells.size(); ++r)
    for (std::size_t c = 0; c < table.col_labels.size(); ++c) {
      std::string cell = format_cell(table, r, c);
      if (mask[r][c]) cell = "*" + cell;
      col_width[c] = std::max(col_width[c], cell.size());
      rendered[r].push_back(std::move(cell));
    }

  std::ostringstream out;
  auto pad = [](const std::string& s, std::size_t w) {
    return std::string(w - s.size(), ' ') + s;
  };
  out << table.corner << std::string(label_width - table.corner.size(), ' ');
  for (std::size_t c = 0; c < table.col_labels.size(); ++c)
    out << " | " << pad(table.col_labels[c], col_width[c]);
  out << '\n';
  out << std::string(label_width, '-');
  for (std::size_t c = 0; c < table.col_labels.size(); ++c)
    out << "-+-" << std::string(col_width[c], '-');
  out << '\n';
  for (std::size_t r = 0; r < table.cells.size(); ++r) {
    out << table.row_labels[r] << std::string(label_width - table.row_labels[r].size(), ' ');
    for (std::size_t c = 0; c < table.col_labels.size(); ++c)
      out << " | " << pad(rendered[r][c], col_width[c]);
    out << '\n';
  }
  return out.str();
}

std::string render_csv_table(const ReportTable& table) {
  table.validate();
  std::ostringstream out;
  out << table.corner;
  for (const auto& c : table.col_labels) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < table.cells.size(); ++r) {
    out << table.row_labels[r];
    for (std::size_t c = 0; c < table.col_labels.size(); ++c) {
      out << ',';
      if (cell_valid(table, r, c)) out << format_cell(table, r, c);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace gpc
