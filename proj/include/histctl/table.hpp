#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace histctl {

// Locale-independent, platform-stable rendering of a double ("%.12g";
// NaN renders as "NA").
std::string format_number(double v);
std::string format_fixed(double v, int decimals);

// Minimal RFC-4180 writer. When `banner` is non-empty it is emitted as a
// leading "# ..." comment line (used for the config hash).
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header,
            const std::string& banner = "");
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

std::string csv_escape(const std::string& cell);
// Splits one CSV line (no embedded newlines).
std::vector<std::string> csv_split(const std::string& line);

}  // namespace histctl
