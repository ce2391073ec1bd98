#pragma once

#include <stdexcept>
#include <string>

namespace cfl {

struct PlotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PlotLayout {
  kPosition,    // 6 panels: x/y/z vs reference, velocities, error norm, inputs
  kTrajectory,  // 4 panels: xy path + reference, z vs t, error norm, inputs
};

/// Renders a trajectory CSV (the fixed 25-column schema) to
/// <out_prefix>.ppm (binary P6 raster) and <out_prefix>.txt (the plotted
/// series as text, for tolerance-free diffing). Deterministic. Throws
/// PlotError on schema mismatch or an empty CSV.
void plot_trajectory_csv(const std::string& csv_path, PlotLayout layout,
                         const std::string& out_prefix);

}  // namespace cfl
