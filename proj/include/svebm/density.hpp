#pragma once

// Density panels for 2D point models: KDE grids over the data, reconstructions
// x ~ p(x|z), z ~ q(z|x), prior-decoded samples, and the two latent sets.

#include <string>
#include <vector>

#include "svebm/data_synth.hpp"
#include "svebm/langevin.hpp"
#include "svebm/model.hpp"

namespace svebm {

struct DensityPanel {
  std::string name;
  GridSpec grid;
  double bandwidth = 0.0;
  Matrix points;   // samples behind the panel
  Matrix density;  // kde_grid(points, bandwidth, grid)
};

struct PanelOptions {
  std::size_t sample_count = 2000;
  std::size_t grid_size = 100;
  double margin = 0.5;
};

/// Square grid covering every point with the given margin.
GridSpec bounding_grid(const std::vector<const Matrix*>& sets, std::size_t size, double margin);

DensityPanel make_panel(const std::string& name, const Matrix& points, const GridSpec& grid);

/// Panels true_x, posterior_x, prior_x, posterior_z, prior_z (latent panels
/// need a 2D latent space and are skipped otherwise).
std::vector<DensityPanel> density_panels(const Model& model, const ChainPool& pool, const LangevinConfig& cfg,
                                         const Matrix& data, const PanelOptions& opt, Rng& rng);

}  // namespace svebm
