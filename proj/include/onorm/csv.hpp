#pragma once

// Minimal CSV emission: fixed header, unquoted fields, LF line endings.
// Doubles use the shortest round-trip representation.

#include <charconv>
#include <concepts>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace onorm {

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::string_view header) : out_(out) { out_ << header << '\n'; }

  template <typename... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((write_sep(first), write(fields)), ...);
    out_ << '\n';
  }

 private:
  void write_sep(bool& first) {
    if (!first) out_ << ',';
    first = false;
  }

  template <std::floating_point T>
  void write(T v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, static_cast<double>(v));
    out_.write(buf, r.ptr - buf);
  }

  template <std::integral T>
  void write(T v) {
    out_ << v;
  }

  void write(std::string_view s) {
    if (s.find_first_of(",\"\n\r") != std::string_view::npos) {
      throw std::invalid_argument("CsvWriter: field needs quoting: " + std::string(s));
    }
    out_ << s;
  }
  void write(const std::string& s) { write(std::string_view(s)); }
  void write(const char* s) { write(std::string_view(s)); }

  std::ostream& out_;
};

}  // namespace onorm
