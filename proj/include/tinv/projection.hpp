#pragma once

#include <vector>

#include "tinv/geometry.hpp"
#include "tinv/grid.hpp"
#include "tinv/transfer.hpp"

namespace tinv {

// Particle-carried tissue intensities rendered at the deformed cell centroids:
// P2G at the deformed node positions, then G2P at the centroids.
struct TissueProjection {
    CellGeometry geom;
    P2GResult grid;
    std::vector<double> cells;  // [num_cells][3]
};

inline TissueProjection tissue_at_cells(const GridSpec& spec, const double* intensities,
                                        const double* pos, int timestep = 0) {
    TissueProjection proj;
    proj.geom = cell_geometry(spec, pos, timestep, /*strict=*/false);
    proj.grid = particles_to_grid(spec, intensities, 3, pos, spec.num_nodes());
    proj.cells.assign(static_cast<size_t>(spec.num_cells()) * 3, 0.0);
    grid_to_particles(spec, proj.grid.values.data(), 3, proj.geom.centroids.data(),
                      spec.num_cells(), proj.cells.data());
    return proj;
}

inline void tissue_at_cells_backward(const GridSpec& spec, const double* intensities,
                                     const double* pos, const TissueProjection& proj,
                                     const double* d_cells, double* d_pos) {
    const int nc = spec.num_cells();
    const int nn = spec.num_nodes();
    std::vector<double> d_grid(static_cast<size_t>(nn) * 3, 0.0);
    std::vector<double> d_centroids(static_cast<size_t>(nc) * spec.ndim, 0.0);
    grid_to_particles_backward(spec, proj.grid.values.data(), 3, proj.geom.centroids.data(),
                               nc, d_cells, d_grid.data(), d_centroids.data());
    particles_to_grid_backward(spec, intensities, 3, pos, nn, proj.grid, d_grid.data(),
                               nullptr, d_pos);
    cell_geometry_backward(spec, pos, nullptr, d_centroids.data(), nullptr, d_pos);
}

} // namespace tinv
