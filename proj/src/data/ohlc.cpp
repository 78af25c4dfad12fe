#include "msrnn/data/ohlc.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "msrnn/error.hpp"

namespace msrnn::data {

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> to_double(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Date parse_date(const std::string& text) {
  const std::string s = trim(text);
  int y = 0;
  unsigned mo = 0;
  unsigned d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') {
    throw ParseError("invalid date '" + s + "', expected YYYY-MM-DD");
  }
  auto digits = [&](std::size_t from, std::size_t len, auto& out) {
    auto [ptr, ec] = std::from_chars(s.data() + from, s.data() + from + len, out);
    return ec == std::errc() && ptr == s.data() + from + len;
  };
  if (!digits(0, 4, y) || !digits(5, 2, mo) || !digits(8, 2, d)) {
    throw ParseError("invalid date '" + s + "', expected YYYY-MM-DD");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw ParseError("invalid calendar date '" + s + "'");
  return std::chrono::sys_days(ymd);
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd(d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

void validate_bar(const OhlcBar& b) {
  for (double p : {b.open, b.high, b.low, b.close}) {
    if (!std::isfinite(p)) throw ValidationError("non-finite price");
    if (p <= 0.0) throw ValidationError("non-positive price " + std::to_string(p));
  }
  if (b.low > std::min(b.open, b.close)) throw ValidationError("low above min(open, close)");
  if (b.high < std::max(b.open, b.close)) throw ValidationError("high below max(open, close)");
}

std::vector<OhlcBar> read_ohlc_csv(std::istream& in, const ColumnMapping& columns) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!blank(line)) break;
  }
  if (line_no == 0 || blank(line)) throw ParseError("empty CSV, expected a header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split_fields(line);
  auto find = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (lower(header[i]) == lower(name)) return i;
    }
    throw ParseError("missing column '" + name + "' in header", line_no);
  };
  const std::size_t ci[5] = {find(columns.timestamp), find(columns.open), find(columns.high),
                             find(columns.low), find(columns.close)};
  const std::size_t need = *std::max_element(std::begin(ci), std::end(ci)) + 1;

  std::vector<std::pair<OhlcBar, std::size_t>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    const auto f = split_fields(line);
    if (f.size() < need) {
      throw ParseError("expected at least " + std::to_string(need) + " fields, got " +
                           std::to_string(f.size()),
                       line_no);
    }
    OhlcBar bar;
    try {
      bar.timestamp = parse_date(f[ci[0]]);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    double* dst[4] = {&bar.open, &bar.high, &bar.low, &bar.close};
    for (int k = 0; k < 4; ++k) {
      const auto v = to_double(f[ci[k + 1]]);
      if (!v) throw ParseError("not a number: '" + f[ci[k + 1]] + "'", line_no);
      *dst[k] = *v;
    }
    try {
      validate_bar(bar);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    rows.emplace_back(bar, line_no);
  }

  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first.timestamp < b.first.timestamp; });
  std::vector<OhlcBar> bars;
  bars.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].first.timestamp == rows[i - 1].first.timestamp) {
      throw ValidationError("line " + std::to_string(rows[i].second) + ": duplicate date " +
                            format_date(rows[i].first.timestamp) + " (also on line " +
                            std::to_string(rows[i - 1].second) + ")");
    }
    bars.push_back(rows[i].first);
  }
  return bars;
}

std::vector<OhlcBar> load_ohlc_csv(const std::filesystem::path& path, const ColumnMapping& columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file " + path.string());
  return read_ohlc_csv(in, columns);
}

void write_ohlc_csv(std::ostream& out, const std::vector<OhlcBar>& bars) {
  out << "timestamp,open,high,low,close\n";
  char buf[160];
  for (const auto& b : bars) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g\n", format_date(b.timestamp).c_str(),
                  b.open, b.high, b.low, b.close);
    out << buf;
  }
}

}  // namespace msrnn::data
