#include "mcps/csv.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

#include "mcps/errors.hpp"

namespace mcps::csv {

std::string format(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw InputError("csv: cannot format value");
  return std::string(buf, end);
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& f : fields) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    while (!f.empty() && f.front() == ' ') f.erase(f.begin());
  }
  return fields;
}

double parse_double(std::string_view field) {
  if (field == "nan") return std::nan("");
  if (field == "inf") return INFINITY;
  if (field == "-inf") return -INFINITY;
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw InputError("csv: not a number: '" + std::string(field) + "'");
  }
  return value;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << fields[i];
  }
  out << '\n';
}

}  // namespace mcps::csv
