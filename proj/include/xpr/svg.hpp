#pragma once

#include <string>
#include <utility>
#include <vector>

// Minimal standalone SVG line charts for the diagnostic time series.
// Output is a pure function of the inputs: same data, same bytes.

namespace xpr::svg {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y); NaNs skipped
};

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series,
                      const std::string& header_comment);

}  // namespace xpr::svg
