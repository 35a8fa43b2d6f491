#pragma once

#include <cmath>
#include <vector>

#include "tinv/elasticity.hpp"
#include "tinv/geometry.hpp"
#include "tinv/grid.hpp"
#include "tinv/transfer.hpp"

namespace tinv {

// D_i = D_gm * (R * m_WM + m_GM), zero below the diffusive-fraction threshold.
inline void effective_diffusivity(const double* tissue_cells, int num_cells, double d_gm,
                                  double ratio, double threshold, double* out) {
    for (int i = 0; i < num_cells; ++i) {
        const double m_wm = tissue_cells[i * 3 + 0];
        const double m_gm = tissue_cells[i * 3 + 1];
        out[i] = (m_wm + m_gm < threshold) ? 0.0 : d_gm * (ratio * m_wm + m_gm);
    }
}

inline double harmonic_mean(double a, double b) {
    const double s = a + b;
    return s > 0.0 ? 2.0 * a * b / s : 0.0;
}

// Finite-volume diffusion operator over deformed cells; neighbor set fixed
// from the reference lattice, fluxes antisymmetric per interior face.
inline void diffusion_operator(const GridSpec& spec, const double* c, const double* D,
                               const CellGeometry& geom, double* out) {
    const int d = spec.ndim;
    const int nc = spec.num_cells();
    for (int i = 0; i < nc; ++i) out[i] = 0.0;
    for (int i = 0; i < nc; ++i) {
        auto idx = spec.cell_multi(i);
        for (int a = 0; a < d; ++a) {
            if (idx[a] + 1 > spec.shape[a] - 1) continue;  // boundary face: no flux
            const int j = i + spec.cell_stride(a);
            const double harm = harmonic_mean(D[i], D[j]);
            if (harm == 0.0) continue;
            double dist2 = 0.0;
            for (int b = 0; b < d; ++b) {
                const double dx = geom.centroids[j * d + b] - geom.centroids[i * d + b];
                dist2 += dx * dx;
            }
            const double dist = std::sqrt(dist2);
            const double t = geom.face_areas[i * d + a] * harm * (c[j] - c[i]) / dist;
            out[i] += t;
            out[j] -= t;
        }
    }
}

// S_i = |Omega_i| rho c_i (1 - c_i)
inline void reaction_operator(const double* c, int num_cells, double rho,
                              const CellGeometry& geom, double* out) {
    for (int i = 0; i < num_cells; ++i)
        out[i] = geom.volumes[i] * rho * c[i] * (1.0 - c[i]);
}

struct GrowthWorkspace {
    std::vector<double> tissue_cells, D, resid;
    std::vector<double> d_V, d_centroids, d_A, d_D, d_tissue_cells;
};

// One implicit-Euler slice of the tumor residual (operators at timestep n),
// with reverse-mode accumulation into the cell densities, node positions and
// dynamics parameters. Tissue fractions at cells come from projecting the
// particle-carried intensities through the grid at the deformed centroids.
inline double growth_slice(const GridSpec& spec, const double* c_n, const double* c_nm1,
                           const double* pn, const double* intensities,
                           const DynamicsParams& params, const PhysicsConfig& cfg,
                           int timestep, GrowthWorkspace& ws, double gscale = 0.0,
                           double* d_c_n = nullptr, double* d_c_nm1 = nullptr,
                           double* d_pn = nullptr, double* d_dgm = nullptr,
                           double* d_ratio = nullptr, double* d_rho = nullptr,
                           std::vector<double>* residual_out = nullptr) {
    const int d = spec.ndim;
    const int nc = spec.num_cells();
    const int nn = spec.num_nodes();
    const double dt = spec.dt();
    const bool backward = gscale != 0.0;

    CellGeometry geom = cell_geometry(spec, pn, timestep, /*strict=*/false);
    P2GResult tproj = particles_to_grid(spec, intensities, 3, pn, nn);
    ws.tissue_cells.assign(static_cast<size_t>(nc) * 3, 0.0);
    grid_to_particles(spec, tproj.values.data(), 3, geom.centroids.data(), nc,
                      ws.tissue_cells.data());
    ws.D.assign(nc, 0.0);
    effective_diffusivity(ws.tissue_cells.data(), nc, params.d_gm, params.ratio,
                          cfg.diffusive_threshold, ws.D.data());

    // residual: (V_i/dt)(c^n - c^{n-1}) - D[c] - S[c]
    ws.resid.assign(nc, 0.0);
    for (int i = 0; i < nc; ++i) {
        ws.resid[i] = geom.volumes[i] / dt * (c_n[i] - c_nm1[i]) -
                      geom.volumes[i] * params.rho * c_n[i] * (1.0 - c_n[i]);
    }
    // subtract diffusion fluxes
    for (int i = 0; i < nc; ++i) {
        auto idx = spec.cell_multi(i);
        for (int a = 0; a < d; ++a) {
            if (idx[a] + 1 > spec.shape[a] - 1) continue;
            const int j = i + spec.cell_stride(a);
            const double harm = harmonic_mean(ws.D[i], ws.D[j]);
            if (harm == 0.0) continue;
            double dist2 = 0.0;
            for (int b = 0; b < d; ++b) {
                const double dx = geom.centroids[j * d + b] - geom.centroids[i * d + b];
                dist2 += dx * dx;
            }
            const double dist = std::sqrt(dist2);
            const double t = geom.face_areas[i * d + a] * harm * (c_n[j] - c_n[i]) / dist;
            ws.resid[i] -= t;
            ws.resid[j] += t;
        }
    }
    double loss = 0.0;
    for (int i = 0; i < nc; ++i) loss += ws.resid[i] * ws.resid[i];
    if (residual_out) *residual_out = ws.resid;
    if (!backward) return loss;

    ws.d_V.assign(nc, 0.0);
    ws.d_centroids.assign(static_cast<size_t>(nc) * d, 0.0);
    ws.d_A.assign(static_cast<size_t>(nc) * d, 0.0);
    ws.d_D.assign(nc, 0.0);

    for (int i = 0; i < nc; ++i) {
        const double gr = gscale * 2.0 * ws.resid[i];
        if (gr == 0.0) continue;
        const double V = geom.volumes[i];
        if (d_c_n) d_c_n[i] += gr * (V / dt - V * params.rho * (1.0 - 2.0 * c_n[i]));
        if (d_c_nm1) d_c_nm1[i] -= gr * V / dt;
        ws.d_V[i] += gr * ((c_n[i] - c_nm1[i]) / dt - params.rho * c_n[i] * (1.0 - c_n[i]));
        if (d_rho) *d_rho -= gr * V * c_n[i] * (1.0 - c_n[i]);
    }
    // flux backward: dL/dt_f = -g_i + g_j with g = 2*gscale*resid
    for (int i = 0; i < nc; ++i) {
        auto idx = spec.cell_multi(i);
        for (int a = 0; a < d; ++a) {
            if (idx[a] + 1 > spec.shape[a] - 1) continue;
            const int j = i + spec.cell_stride(a);
            const double harm = harmonic_mean(ws.D[i], ws.D[j]);
            if (harm == 0.0) continue;
            double diffv[3];
            double dist2 = 0.0;
            for (int b = 0; b < d; ++b) {
                diffv[b] = geom.centroids[j * d + b] - geom.centroids[i * d + b];
                dist2 += diffv[b] * diffv[b];
            }
            const double dist = std::sqrt(dist2);
            const double A = geom.face_areas[i * d + a];
            const double dc = c_n[j] - c_n[i];
            const double t = A * harm * dc / dist;
            const double d_t =
                gscale * 2.0 * (ws.resid[j] - ws.resid[i]);  // resid_i -= t, resid_j += t
            if (d_t == 0.0) continue;
            ws.d_A[i * d + a] += d_t * harm * dc / dist;
            const double d_harm = d_t * A * dc / dist;
            const double s = ws.D[i] + ws.D[j];
            ws.d_D[i] += d_harm * 2.0 * ws.D[j] * ws.D[j] / (s * s);
            ws.d_D[j] += d_harm * 2.0 * ws.D[i] * ws.D[i] / (s * s);
            if (d_c_n) {
                d_c_n[j] += d_t * A * harm / dist;
                d_c_n[i] -= d_t * A * harm / dist;
            }
            const double d_dist = -t / dist * d_t;
            for (int b = 0; b < d; ++b) {
                ws.d_centroids[j * d + b] += d_dist * diffv[b] / dist;
                ws.d_centroids[i * d + b] -= d_dist * diffv[b] / dist;
            }
        }
    }
    // diffusivity backward into tissue fractions and dynamics parameters
    ws.d_tissue_cells.assign(static_cast<size_t>(nc) * 3, 0.0);
    for (int i = 0; i < nc; ++i) {
        const double g = ws.d_D[i];
        if (g == 0.0) continue;
        const double m_wm = ws.tissue_cells[i * 3 + 0];
        const double m_gm = ws.tissue_cells[i * 3 + 1];
        if (m_wm + m_gm < cfg.diffusive_threshold) continue;
        if (d_dgm) *d_dgm += g * (params.ratio * m_wm + m_gm);
        if (d_ratio) *d_ratio += g * params.d_gm * m_wm;
        ws.d_tissue_cells[i * 3 + 0] += g * params.d_gm * params.ratio;
        ws.d_tissue_cells[i * 3 + 1] += g * params.d_gm;
    }
    if (d_pn) {
        std::vector<double> d_tissue_grid(static_cast<size_t>(nn) * 3, 0.0);
        grid_to_particles_backward(spec, tproj.values.data(), 3, geom.centroids.data(), nc,
                                   ws.d_tissue_cells.data(), d_tissue_grid.data(),
                                   ws.d_centroids.data());
        particles_to_grid_backward(spec, intensities, 3, pn, nn, tproj,
                                   d_tissue_grid.data(), nullptr, d_pn);
        cell_geometry_backward(spec, pn, ws.d_V.data(), ws.d_centroids.data(), ws.d_A.data(),
                               d_pn);
    }
    return loss;
}

// Public forward-only tumor residual over all timesteps n = 1..N_t.
inline double tumor_residual(const GridSpec& spec, const TumorField& tumor,
                             const ParticleMesh& mesh, const TissueField& tissue,
                             const DynamicsParams& params, const PhysicsConfig& cfg,
                             std::vector<double>* residual_out = nullptr) {
    GrowthWorkspace ws;
    double loss = 0.0;
    if (residual_out)
        residual_out->assign(static_cast<size_t>(spec.nt) * spec.num_cells(), 0.0);
    for (int n = 1; n <= spec.nt; ++n) {
        std::vector<double> slice_res;
        loss += growth_slice(spec, tumor.slice(n), tumor.slice(n - 1), mesh.slice(n),
                             tissue.intensities.data(), params, cfg, n, ws, 0.0, nullptr,
                             nullptr, nullptr, nullptr, nullptr, nullptr,
                             residual_out ? &slice_res : nullptr);
        if (residual_out)
            std::copy(slice_res.begin(), slice_res.end(),
                      residual_out->begin() + static_cast<size_t>(n - 1) * spec.num_cells());
    }
    return loss;
}

} // namespace tinv
