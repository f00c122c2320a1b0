#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace meg::expcli {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Figure {
  std::string id;  // file stem
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Rows `figure,series,x,y`; non-finite values are written as inf/nan.
std::string figure_csv(const Figure& figure);

/// Self-contained SVG line chart. Non-finite points are skipped.
std::string figure_svg(const Figure& figure);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace meg::expcli
