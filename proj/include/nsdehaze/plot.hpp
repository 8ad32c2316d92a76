#ifndef NSDEHAZE_PLOT_HPP
#define NSDEHAZE_PLOT_HPP

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "nsdehaze/image.hpp"

namespace nsd::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::array<double, 3> color{0.1, 0.3, 0.8};
};

/// Rasterizes line series with axes, grid and numeric tick labels.
imaging::Image line_plot(const std::vector<Series>& series, int width = 640, int height = 400);
void save_line_plot(const std::vector<Series>& series, const std::filesystem::path& path, int width = 640,
                    int height = 400);

/// A distinct color for series i.
std::array<double, 3> palette(std::size_t i);

}  // namespace nsd::plot

#endif  // NSDEHAZE_PLOT_HPP
