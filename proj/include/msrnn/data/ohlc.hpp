#pragma once

#include <chrono>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

namespace msrnn::data {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD. Throws ParseError on anything else.
Date parse_date(const std::string& text);
std::string format_date(Date d);

struct OhlcBar {
  Date timestamp;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
};

/// Throws ValidationError when prices are non-positive or not finite, or the
/// range does not contain open and close.
void validate_bar(const OhlcBar& bar);

/// Header names for each field; matched case-insensitively.
struct ColumnMapping {
  std::string timestamp = "timestamp";
  std::string open = "open";
  std::string high = "high";
  std::string low = "low";
  std::string close = "close";
};

/// Reads a daily OHLC CSV. Extra columns are ignored; blank lines are
/// skipped. Bars come back sorted by date; duplicate dates are rejected.
std::vector<OhlcBar> read_ohlc_csv(std::istream& in, const ColumnMapping& columns = {});
std::vector<OhlcBar> load_ohlc_csv(const std::filesystem::path& path,
                                   const ColumnMapping& columns = {});

void write_ohlc_csv(std::ostream& out, const std::vector<OhlcBar>& bars);

}  // namespace msrnn::data
