#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>

#include "walkability/errors.hpp"

namespace walkability::csv {

using Row = std::vector<std::string>;

/// Minimal RFC 4180 reader: comma separated, double-quote escaping, quoted
/// fields may span lines. Tracks the physical line each record started on.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Reads the next record; returns false at end of input.
  bool next(Row& row) {
    row.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    record_line_ = line_ + 1;
    int c;
    while ((c = in_.get()) != EOF) {
      any = true;
      char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          if (in_.peek() == '"') {
            field.push_back('"');
            in_.get();
          } else {
            in_quotes = false;
          }
        } else {
          if (ch == '\n') ++line_;
          field.push_back(ch);
        }
        continue;
      }
      if (ch == '"') {
        in_quotes = true;
      } else if (ch == ',') {
        row.push_back(std::move(field));
        field.clear();
      } else if (ch == '\n') {
        ++line_;
        break;
      } else if (ch != '\r') {
        field.push_back(ch);
      }
    }
    if (!any) return false;
    row.push_back(std::move(field));
    // Skip the UTF-8 byte order mark on the very first record.
    if (record_line_ == 1 && !row.empty() && row[0].rfind("\xEF\xBB\xBF", 0) == 0) row[0].erase(0, 3);
    return true;
  }

  std::size_t record_line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::size_t record_line_ = 0;
};

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Case-insensitive column lookup over a header row.
class Header {
 public:
  Header() = default;
  explicit Header(const Row& names) {
    for (std::size_t i = 0; i < names.size(); ++i) index_.emplace(lower(trim(names[i])), i);
  }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(lower(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require(std::string_view name, std::string_view file_kind) const {
    auto i = find(name);
    if (!i) throw FormatError(std::string(file_kind) + ": missing header column '" + std::string(name) + "'");
    return *i;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> to_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.put(',');
    out << escape(fields[i]);
  }
  out.put('\n');
}

/// Shortest decimal form that parses back to the same double.
inline std::string exact(double v) { return fmt::format("{}", v); }

/// Fixed two decimals, the rounding used in every report table.
inline std::string fixed2(double v) { return fmt::format("{:.2f}", v); }

}  // namespace walkability::csv
