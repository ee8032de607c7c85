#pragma once

#include <string>
#include <vector>

namespace rift {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series);

// Scatter with one color per integer label.
void write_scatter_chart(const std::string& path, const std::string& title,
                         const std::vector<double>& x, const std::vector<double>& y,
                         const std::vector<int>& labels);

}  // namespace rift
