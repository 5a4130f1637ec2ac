#include "svebm/density.hpp"

#include <algorithm>
#include <cmath>

#include "svebm/errors.hpp"

namespace svebm {

namespace {

Matrix observations_to_points(const std::vector<Observation>& obs) {
  Matrix out(obs.size(), 2);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& p = std::get<PointExample>(obs[i]);
    out(i, 0) = p.coords[0];
    out(i, 1) = p.coords[1];
  }
  return out;
}

}  // namespace

GridSpec bounding_grid(const std::vector<const Matrix*>& sets, std::size_t size, double margin) {
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const Matrix* m : sets) {
    for (double v : m->flat()) {
      if (!std::isfinite(v)) continue;
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  }
  if (!any) lo = -1.0, hi = 1.0;
  GridSpec g;
  g.x_min = g.y_min = lo - margin;
  g.x_max = g.y_max = hi + margin;
  g.nx = g.ny = size;
  return g;
}

DensityPanel make_panel(const std::string& name, const Matrix& points, const GridSpec& grid) {
  DensityPanel p;
  p.name = name;
  p.grid = grid;
  p.points = points;
  p.bandwidth = scott_bandwidth(points);
  p.density = kde_grid(points, p.bandwidth, grid);
  return p;
}

std::vector<DensityPanel> density_panels(const Model& model, const ChainPool& pool, const LangevinConfig& cfg,
                                         const Matrix& data, const PanelOptions& opt, Rng& rng) {
  if (model.config.modality != Modality::Points || model.config.data_dim != 2)
    throw ConfigError("density panels need a model of 2D points");
  if (data.rows() < 2 || data.cols() != 2) throw DataError("density panels need at least two 2D data points");

  const std::size_t n_post = std::min(opt.sample_count, data.rows());
  std::vector<Example> xs;
  for (std::size_t i = 0; i < n_post; ++i) xs.push_back({PointExample{{data(i, 0), data(i, 1)}}, std::nullopt});
  const EncodeResult enc = model.encoder.forward(xs);
  Matrix z_post = enc.mean;
  for (std::size_t i = 0; i < z_post.size(); ++i)
    z_post.data()[i] += std::exp(0.5 * enc.logvar.data()[i]) * rng.normal();
  SampleOptions so;
  const Matrix x_post = observations_to_points(model.decoder.sample(z_post, so, rng));

  const Matrix z_prior = draw_prior_samples(pool, model.prior, cfg, opt.sample_count, rng);
  const Matrix x_prior = observations_to_points(model.decoder.sample(z_prior, so, rng));

  const GridSpec xgrid = bounding_grid({&data}, opt.grid_size, opt.margin);
  std::vector<DensityPanel> panels;
  panels.push_back(make_panel("true_x", data, xgrid));
  panels.push_back(make_panel("posterior_x", x_post, xgrid));
  panels.push_back(make_panel("prior_x", x_prior, xgrid));
  if (model.config.latent_dim == 2) {
    const GridSpec zgrid = bounding_grid({&z_post, &z_prior}, opt.grid_size, opt.margin);
    panels.push_back(make_panel("posterior_z", z_post, zgrid));
    panels.push_back(make_panel("prior_z", z_prior, zgrid));
  }
  return panels;
}

}  // namespace svebm
