#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "tinv/imaging.hpp"
#include "tinv/loss.hpp"
#include "tinv/priors.hpp"

namespace tinv {

struct SimulateOptions {
    int steps = 100;          // internal operator-split steps over t in [0,1]
    double t_end = 1.0;       // continue past 1 for synthetic progression
    double elast_tol = 1e-6;
    int elast_max_iters = 500;
    double elast_damping = 0.4;
};

struct SimulateResult {
    TumorField tumor;          // recorded slices at t = n/N_t
    ParticleMesh mesh;
    TissueField tissue;        // node-carried intensities
    std::vector<double> c_end; // density at t_end (equals final slice if t_end = 1)
    bool elasticity_converged = true;
};

namespace detail {

// one damped locally-preconditioned fixed-point sweep toward div(sigma) +
// gamma grad(c) = 0; returns the max residual magnitude before the sweep.
inline double elasticity_relax_sweep(const GridSpec& spec, const double* p0, double* pn,
                                     const double* c_cells, const double* intensities,
                                     const std::array<LamePair, 4>& lame, double gamma,
                                     const PhysicsConfig& cfg, ElasticityWorkspace& ws,
                                     double damping) {
    const int d = spec.ndim;
    const int nn = spec.num_nodes();
    std::vector<double> resid;
    elasticity_slice(spec, p0, pn, c_cells, intensities, lame, gamma, cfg, 0, ws, 0.0,
                     nullptr, nullptr, nullptr, nullptr, &resid);
    double rmax = 0.0;
    for (double r : resid) rmax = std::max(rmax, std::abs(r));
    double hmin = 1.0;
    for (int a = 0; a < d; ++a) hmin = std::min(hmin, spec.spacing(a));
    for (int j = 0; j < nn; ++j) {
        if (!node_interior(spec, j)) continue;
        // stability of the damped sweep is governed by the stiffest material
        // in the difference stencil, not the local one
        double stiff = ws.lambda_n[j] + 2.0 * ws.mu_n[j];
        for (int a = 0; a < d; ++a) {
            const int s = spec.node_stride(a);
            stiff = std::max(stiff, ws.lambda_n[j + s] + 2.0 * ws.mu_n[j + s]);
            stiff = std::max(stiff, ws.lambda_n[j - s] + 2.0 * ws.mu_n[j - s]);
        }
        const double alpha = damping * hmin * hmin / (4.0 * d * std::max(stiff, 1e-6));
        for (int i = 0; i < d; ++i) pn[j * d + i] += alpha * resid[j * d + i];
    }
    return rmax;
}

} // namespace detail

// Operator-split forward solver (reaction -> diffusion -> quasi-static
// elasticity per internal step). The density is carried by the deforming
// cells; the exact logistic update keeps c in [0,1]; explicit diffusion is
// substepped to its stability limit; tissue intensities ride on the nodes.
inline SimulateResult simulate(const GridSpec& spec, const DynamicsParams& params,
                               const std::vector<std::array<double, 3>>& seeds,
                               const std::vector<double>& tissue_init_cells,
                               const SimulateOptions& opts = {},
                               const PhysicsConfig& cfg = {},
                               const MaterialTable& materials = {}) {
    spec.validate();
    const int d = spec.ndim;
    const int nc = spec.num_cells();
    const int nn = spec.num_nodes();
    int steps = std::max(opts.steps, spec.nt);
    if (steps % spec.nt != 0) steps += spec.nt - steps % spec.nt;
    const int per_slice = steps / spec.nt;
    const double dtau = 1.0 / steps;
    const int extra_steps =
        opts.t_end > 1.0 ? static_cast<int>(std::llround((opts.t_end - 1.0) * steps)) : 0;

    SimulateResult out;
    out.mesh = make_uniform_mesh(spec);
    out.tumor.num_cells = nc;
    out.tumor.values.assign(static_cast<size_t>(spec.nt + 1) * nc, 0.0);
    out.tissue.num_particles = nn;
    out.tissue.intensities.assign(static_cast<size_t>(nn) * 3, 0.0);
    for (int j = 0; j < nn; ++j) {
        auto idx = spec.node_multi(j);
        double x[3];
        for (int a = 0; a < d; ++a) x[a] = idx[a] * spec.spacing(a);
        sample_cell_field(spec, tissue_init_cells.data(), 3, x,
                          out.tissue.intensities.data() + j * 3);
    }
    const auto lame = nondimensional_lame(materials, cfg.ref_modulus);

    // initial density: superposed Gaussian seeds at the undeformed centroids
    std::vector<double> c(nc, 0.0);
    for (int i = 0; i < nc; ++i) {
        auto ci = spec.cell_multi(i);
        double acc = 0.0;
        for (const auto& x0 : seeds) {
            double dist2 = 0.0;
            for (int a = 0; a < d; ++a) {
                const double dx = (ci[a] + 0.5) * spec.spacing(a) - x0[a];
                dist2 += dx * dx;
            }
            acc += kGaussAmplitude * std::exp(-dist2 / kGaussWidth);
        }
        c[i] = std::min(acc, 0.99);
    }

    std::vector<double> pos(out.mesh.slice(0), out.mesh.slice(0) + static_cast<size_t>(nn) * d);
    const std::vector<double> p0 = pos;
    std::copy(c.begin(), c.end(), out.tumor.slice(0));

    ElasticityWorkspace ews;
    std::vector<double> tissue_cells, D, flux_acc(nc);
    const bool moving = params.gamma > 0.0;
    CellGeometry geom = cell_geometry(spec, pos.data(), 0, /*strict=*/true);
    TissueProjection proj = tissue_at_cells(spec, out.tissue.intensities.data(), pos.data());
    D.assign(nc, 0.0);
    effective_diffusivity(proj.cells.data(), nc, params.d_gm, params.ratio,
                          cfg.diffusive_threshold, D.data());

    const double exp_rho = std::exp(params.rho * dtau);
    for (int s = 1; s <= steps + extra_steps; ++s) {
        // 1. reaction: exact logistic solution over dtau
        if (params.rho != 0.0)
            for (int i = 0; i < nc; ++i)
                c[i] = c[i] * exp_rho / (1.0 + c[i] * (exp_rho - 1.0));

        // 2. diffusion: explicit FV update, substepped to the stability limit
        if (moving) {
            geom = cell_geometry(spec, pos.data(), s, /*strict=*/true);
            proj = tissue_at_cells(spec, out.tissue.intensities.data(), pos.data());
            effective_diffusivity(proj.cells.data(), nc, params.d_gm, params.ratio,
                                  cfg.diffusive_threshold, D.data());
        }
        double dmax = 0.0;
        for (double v : D) dmax = std::max(dmax, v);
        if (dmax > 0.0) {
            double hmin = 1.0;
            for (int a = 0; a < d; ++a) hmin = std::min(hmin, spec.spacing(a));
            const double dt_stable = 0.9 * hmin * hmin / (2.0 * d * dmax);
            const int nsub = std::max(1, static_cast<int>(std::ceil(dtau / dt_stable)));
            const double dt_sub = dtau / nsub;
            for (int sub = 0; sub < nsub; ++sub) {
                diffusion_operator(spec, c.data(), D.data(), geom, flux_acc.data());
                for (int i = 0; i < nc; ++i) c[i] += dt_sub * flux_acc[i] / geom.volumes[i];
            }
        }

        // 3. quasi-static elasticity: damped fixed point on the node positions
        if (moving) {
            int it = 0;
            double rmax = 0.0;
            for (; it < opts.elast_max_iters; ++it) {
                rmax = detail::elasticity_relax_sweep(spec, p0.data(), pos.data(), c.data(),
                                                      out.tissue.intensities.data(), lame,
                                                      params.gamma, cfg, ews,
                                                      opts.elast_damping);
                if (rmax < opts.elast_tol) break;
            }
            if (rmax >= opts.elast_tol) out.elasticity_converged = false;
            check_guard_band(pos.data(), nn, d, s);
        }

        if (s <= steps && s % per_slice == 0) {
            const int n = s / per_slice;
            std::copy(c.begin(), c.end(), out.tumor.slice(n));
            std::copy(pos.begin(), pos.end(), out.mesh.slice(n));
        }
    }
    out.c_end = c;
    return out;
}

// Smoothstep radial profile: 1 inside the ellipse, 0 outside, smooth shoulder.
namespace detail {
inline double blob_profile(double e, double width = 0.15) {
    const double t = std::min(std::max((1.0 - e) / width, 0.0), 1.0);
    return t * t * (3.0 - 2.0 * t);
}
} // namespace detail

// Built-in anatomy: two WM blobs mirror-symmetric about the axis-0 midplane,
// each wrapped in a GM shell, in a CSF background. Returns [num_cells][3].
inline std::vector<double> anatomy_phantom(const GridSpec& spec) {
    const int d = spec.ndim;
    const int nc = spec.num_cells();
    const double ax[3] = {0.26, 0.36, 0.36};
    const double centers[2][3] = {{0.3, 0.5, 0.5}, {0.7, 0.5, 0.5}};
    std::vector<double> tissue(static_cast<size_t>(nc) * 3, 0.0);
    for (int i = 0; i < nc; ++i) {
        auto ci = spec.cell_multi(i);
        double x[3];
        for (int a = 0; a < d; ++a) x[a] = (ci[a] + 0.5) * spec.spacing(a);
        double inner = 0.0, outer = 0.0;
        for (const auto& cen : centers) {
            double e_in = 0.0, e_out = 0.0;
            for (int a = 0; a < d; ++a) {
                const double dx = x[a] - cen[a];
                e_in += (dx / ax[a]) * (dx / ax[a]);
                e_out += (dx / (1.35 * ax[a])) * (dx / (1.35 * ax[a]));
            }
            inner = std::max(inner, detail::blob_profile(std::sqrt(e_in)));
            outer = std::max(outer, detail::blob_profile(std::sqrt(e_out)));
        }
        tissue[i * 3 + 0] = 0.85 * inner;                       // WM
        tissue[i * 3 + 1] = 0.85 * std::max(0.0, outer - inner); // GM
        tissue[i * 3 + 2] = 0.9 * (1.0 - outer) + 0.05;          // CSF
    }
    return tissue;
}

// Sampling ranges in the published units: diffusivity mm^2/day, proliferation
// 1/day, centers/offsets mm; converted to domain units when a case is drawn.
struct ParamSampleRanges {
    Range d_w{0.035, 0.2};
    Range rho{0.035, 0.2};
    Range ratio{10.0, 30.0};
    Range gamma{0.0, 1.5};
    Range theta_necro{0.70, 0.85};
    Range theta_up{0.45, 0.60};
    Range theta_down{0.15, 0.35};
    Range center{57.6 / kMmPerDomain, 96.0 / kMmPerDomain};  // [0.3, 0.5]
    double multifocal_offset = 9.6 / kMmPerDomain;           // +-0.05
    double mm_per_domain = kMmPerDomain;
    double horizon_days = kGrowthHorizonDays;
};

struct CohortCase {
    DynamicsParams params;
    ImagingParams imaging;
    std::vector<std::array<double, 3>> seeds;
    SimulateResult truth;
    PatientCase obs;
    std::vector<unsigned char> recurrence_mask;  // progression at t_end
};

// Samples physical and imaging parameters from their published ranges, simulates, renders observations, and continues
// the simulation past t=1 to produce a synthetic progression mask.
inline CohortCase generate_case(const GridSpec& spec, unsigned long long seed,
                                const ParamSampleRanges& ranges, int focal_count,
                                const std::vector<double>& tissue_init_cells,
                                const SimulateOptions& opts_in = {},
                                const PhysicsConfig& cfg = {},
                                const MaterialTable& materials = {}) {
    if (focal_count != 1 && focal_count != 3)
        throw ConfigError("focal count must be 1 or 3");
    const int d = spec.ndim;
    std::mt19937_64 rng(seed);
    auto uni = [&](const Range& r) {
        return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    };
    CohortCase cc;
    const double d_w =
        diffusivity_to_domain(uni(ranges.d_w), ranges.mm_per_domain, ranges.horizon_days);
    cc.params.rho = rate_to_domain(uni(ranges.rho), ranges.horizon_days);
    cc.params.ratio = uni(ranges.ratio);
    cc.params.d_gm = d_w / cc.params.ratio;
    cc.params.gamma = uni(ranges.gamma);
    cc.imaging.theta_necro = uni(ranges.theta_necro);
    cc.imaging.theta_up = uni(ranges.theta_up);
    cc.imaging.theta_down = uni(ranges.theta_down);
    std::array<double, 3> x0{0.5, 0.5, 0.5};
    for (int a = 0; a < d; ++a) x0[a] = uni(ranges.center);
    cc.seeds.push_back(x0);
    for (int k = 1; k < focal_count; ++k) {
        auto xk = x0;
        for (int a = 0; a < d; ++a)
            xk[a] += uni(Range{-ranges.multifocal_offset, ranges.multifocal_offset});
        cc.seeds.push_back(xk);
    }

    SimulateOptions opts = opts_in;
    opts.t_end = std::max(opts.t_end, 1.5);  // progression horizon
    cc.truth = simulate(spec, cc.params, cc.seeds, tissue_init_cells, opts, cfg, materials);

    const int nc = spec.num_cells();
    TissueProjection proj = tissue_at_cells(spec, cc.truth.tissue.intensities.data(),
                                            cc.truth.mesh.slice(spec.nt), spec.nt);
    const unsigned long long pet_seed = rng();
    cc.obs = render_observations(cc.truth.tumor.slice(spec.nt), proj.cells.data(), nc,
                                 cc.imaging, pet_seed);
    cc.recurrence_mask.assign(nc, 0);
    for (int i = 0; i < nc; ++i)
        cc.recurrence_mask[i] = cc.truth.c_end[i] >= cc.imaging.theta_down ? 1 : 0;
    return cc;
}

inline std::vector<CohortCase> generate_cohort(const GridSpec& spec, int n_cases,
                                               unsigned long long seed,
                                               const ParamSampleRanges& ranges = {},
                                               int focal_count = 1,
                                               const SimulateOptions& opts = {},
                                               const PhysicsConfig& cfg = {},
                                               const MaterialTable& materials = {}) {
    const std::vector<double> tissue = anatomy_phantom(spec);
    std::vector<CohortCase> out;
    out.reserve(n_cases);
    for (int k = 0; k < n_cases; ++k)
        out.push_back(generate_case(spec, seed + 1000003ULL * static_cast<unsigned long long>(k),
                                    ranges, focal_count, tissue, opts, cfg, materials));
    return out;
}

} // namespace tinv
