#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace adf::io {

// RFC-4180 style CSV: quoted fields may contain commas, newlines and doubled
// quotes. Rows are returned as string vectors; the caller interprets headers.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // Reads one record. Returns false on clean EOF. Throws on a field that
  // opens a quote and never closes it.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    if (!peek_ok()) return false;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in_.get()) != EOF) {
      any = true;
      const char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          if (in_.peek() == '"') {
            field.push_back('"');
            in_.get();
          } else {
            in_quotes = false;
          }
        } else {
          field.push_back(ch);
        }
      } else if (ch == '"') {
        in_quotes = true;
      } else if (ch == ',') {
        fields.push_back(field);
        field.clear();
      } else if (ch == '\r') {
        if (in_.peek() == '\n') in_.get();
        fields.push_back(field);
        ++row_;
        return true;
      } else if (ch == '\n') {
        fields.push_back(field);
        ++row_;
        return true;
      } else {
        field.push_back(ch);
      }
    }
    if (in_quotes) throw std::runtime_error("csv: unterminated quote at row " + std::to_string(row_ + 1));
    if (!any) return false;
    fields.push_back(field);
    ++row_;
    return true;
  }

  // 1-based index of the last row returned.
  std::size_t row() const { return row_; }

 private:
  bool peek_ok() { return in_.peek() != EOF; }
  std::istream& in_;
  std::size_t row_ = 0;
};

inline std::string csv_escape(const std::string& s) {
  bool need = false;
  for (char c : s)
    if (c == ',' || c == '"' || c == '\n' || c == '\r') {
      need = true;
      break;
    }
  if (!need) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_escape(fields[i]);
  }
  out << '\n';
}

}  // namespace adf::io
