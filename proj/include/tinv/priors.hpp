#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "tinv/projection.hpp"

namespace tinv {

inline constexpr double kGaussAmplitude = 0.5;  // D1
inline constexpr double kGaussWidth = 0.02;     // D2

// sum_i (c^0_i - D1 exp(-|x_i - x0|^2 / D2))^2 with x_i the deformed t=0 cell
// centers. Reverse-mode accumulation into c^0, the t=0 positions and x0.
inline double gaussian_seed_loss(const GridSpec& spec, const double* c0, const double* p0,
                                 const double* x0, double gscale = 0.0,
                                 double* d_c0 = nullptr, double* d_p0 = nullptr,
                                 double* d_x0 = nullptr) {
    const int d = spec.ndim;
    const int nc = spec.num_cells();
    CellGeometry geom = cell_geometry(spec, p0, 0, /*strict=*/false);
    std::vector<double> d_centroids;
    if (gscale != 0.0 && d_p0) d_centroids.assign(static_cast<size_t>(nc) * d, 0.0);
    double loss = 0.0;
    for (int i = 0; i < nc; ++i) {
        double dist2 = 0.0;
        for (int a = 0; a < d; ++a) {
            const double dx = geom.centroids[i * d + a] - x0[a];
            dist2 += dx * dx;
        }
        const double target = kGaussAmplitude * std::exp(-dist2 / kGaussWidth);
        const double diff = c0[i] - target;
        loss += diff * diff;
        if (gscale != 0.0) {
            const double g = gscale * 2.0 * diff;
            if (d_c0) d_c0[i] += g;
            // d(target)/d(x_i) = target * (-2 (x_i - x0) / D2)
            for (int a = 0; a < d; ++a) {
                const double dx = geom.centroids[i * d + a] - x0[a];
                const double dt_dx = target * (-2.0 * dx / kGaussWidth);
                if (d_p0) d_centroids[i * d + a] += -g * dt_dx;
                if (d_x0) d_x0[a] += -g * (-dt_dx);
            }
        }
    }
    if (gscale != 0.0 && d_p0)
        cell_geometry_backward(spec, p0, nullptr, d_centroids.data(), nullptr, d_p0);
    return loss;
}

namespace detail {

// average-pool a cell field by `factor` per axis; throws if not divisible
inline std::vector<double> pool_cells(const GridSpec& spec, const double* field, int factor,
                                      std::array<int, 3>& pooled_shape) {
    const int d = spec.ndim;
    for (int a = 0; a < d; ++a) {
        if (spec.shape[a] % factor != 0)
            throw AxisNotEven("grid axis not divisible by pooling factor");
        pooled_shape[a] = spec.shape[a] / factor;
    }
    int np = 1;
    for (int a = 0; a < d; ++a) np *= pooled_shape[a];
    std::vector<double> pooled(np, 0.0);
    const double inv_block = 1.0 / std::pow(factor, d);
    const int nc = spec.num_cells();
    for (int i = 0; i < nc; ++i) {
        auto ci = spec.cell_multi(i);
        int lin = 0;
        for (int a = 0; a < d; ++a) lin = lin * pooled_shape[a] + ci[a] / factor;
        pooled[lin] += field[i] * inv_block;
    }
    return pooled;
}

inline void pool_cells_backward(const GridSpec& spec, int factor,
                                const std::array<int, 3>& pooled_shape,
                                const double* d_pooled, double* d_field) {
    const int d = spec.ndim;
    const double inv_block = 1.0 / std::pow(factor, d);
    const int nc = spec.num_cells();
    for (int i = 0; i < nc; ++i) {
        auto ci = spec.cell_multi(i);
        int lin = 0;
        for (int a = 0; a < d; ++a) lin = lin * pooled_shape[a] + ci[a] / factor;
        d_field[i] += d_pooled[lin] * inv_block;
    }
}

} // namespace detail

// Mean absolute mirror asymmetry of one pooled cell field about the mid-plane
// of `axis`. d_pooled may be null.
inline double mirror_asymmetry(const std::array<int, 3>& shape, int ndim, int axis,
                               const double* field, double gscale = 0.0,
                               double* d_field = nullptr) {
    if (shape[axis] % 2 != 0) throw AxisNotEven("mirror axis length is odd");
    int total = 1;
    for (int a = 0; a < ndim; ++a) total *= shape[a];
    const int half_count = total / 2;
    double acc = 0.0;
    std::array<int, 3> idx{};
    for (int lin = 0; lin < total; ++lin) {
        int rem = lin;
        for (int a = ndim - 1; a >= 0; --a) {
            idx[a] = rem % shape[a];
            rem /= shape[a];
        }
        if (idx[axis] >= shape[axis] / 2) continue;
        auto mirrored = idx;
        mirrored[axis] = shape[axis] - 1 - idx[axis];
        int mlin = 0;
        for (int a = 0; a < ndim; ++a) mlin = mlin * shape[a] + mirrored[a];
        const double diff = field[lin] - field[mlin];
        acc += std::abs(diff);
        if (gscale != 0.0 && d_field) {
            const double s = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
            const double g = gscale * s / half_count;
            d_field[lin] += g;
            d_field[mlin] -= g;
        }
    }
    return acc / half_count;
}

// Multi-scale hemispheric symmetry loss of cell-rendered tissue fractions:
// 3 tissues x pooling scales {1, 2, 4}, mean absolute mirrored difference.
// d_tissue_cells accumulates [num_cells][3].
inline double symmetry_loss_cells(const GridSpec& spec, const double* tissue_cells,
                                  int mirror_axis, double gscale = 0.0,
                                  double* d_tissue_cells = nullptr) {
    const int nc = spec.num_cells();
    double loss = 0.0;
    std::vector<double> comp(nc), d_comp, d_pooled;
    for (int k = 0; k < 3; ++k) {
        for (int i = 0; i < nc; ++i) comp[i] = tissue_cells[i * 3 + k];
        if (gscale != 0.0 && d_tissue_cells) d_comp.assign(nc, 0.0);
        for (int kappa = 0; kappa <= 2; ++kappa) {
            const int factor = 1 << kappa;
            std::array<int, 3> pshape{};
            std::vector<double> pooled = detail::pool_cells(spec, comp.data(), factor, pshape);
            if (gscale != 0.0 && d_tissue_cells) {
                d_pooled.assign(pooled.size(), 0.0);
                loss += mirror_asymmetry(pshape, spec.ndim, mirror_axis, pooled.data(),
                                         gscale, d_pooled.data());
                detail::pool_cells_backward(spec, factor, pshape, d_pooled.data(),
                                            d_comp.data());
            } else {
                loss += mirror_asymmetry(pshape, spec.ndim, mirror_axis, pooled.data());
            }
        }
        if (gscale != 0.0 && d_tissue_cells)
            for (int i = 0; i < nc; ++i) d_tissue_cells[i * 3 + k] += d_comp[i];
    }
    return loss;
}

// Public op: symmetry of the t=0 anatomy carried by the particle mesh.
inline double symmetry_loss(const GridSpec& spec, const TissueField& tissue,
                            const ParticleMesh& mesh, int mirror_axis = 0) {
    TissueProjection proj = tissue_at_cells(spec, tissue.intensities.data(), mesh.slice(0), 0);
    return symmetry_loss_cells(spec, proj.cells.data(), mirror_axis);
}

} // namespace tinv
