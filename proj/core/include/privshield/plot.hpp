#pragma once

#include <string>
#include <vector>

#include "privshield/common.hpp"

namespace privshield {

// Small deterministic SVG chart writer for the report and sweep drivers.
// Output contains no timestamps, so identical data gives identical files.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string xlabel, std::string ylabel,
          int width = 720, int height = 520);

  void add_line(std::vector<real> xs, std::vector<real> ys, std::string label,
                std::string color);
  void add_scatter(std::vector<real> xs, std::vector<real> ys, std::string label,
                   std::string color);

  void write(const std::string& path) const;

 private:
  struct Series {
    bool line = false;
    std::vector<real> xs, ys;
    std::string label, color;
  };

  std::string title_, xlabel_, ylabel_;
  int width_, height_;
  std::vector<Series> series_;
};

}  // namespace privshield
