#pragma once

#include <cmath>
#include <numbers>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "tinv/loss.hpp"

namespace tinv {

struct FitOptions {
    double lr = 2e-2;
    int iters = 500;          // per level
    unsigned long long seed = 0;
    int levels = 2;           // coarsest-to-finest, factor-2 refinement
    int log_every = 50;
    double param_lr_scale = 1.0;  // extra step multiplier for the physics latents
};

struct OptimState {
    std::vector<double> latents;
    std::vector<double> m1, m2;  // Adam moments
    long long step = 0;
    unsigned long long seed = 0;
};

// One Adam update in place; zero gradient leaves the parameters unchanged.
inline void adam_step(OptimState& st, const std::vector<double>& grad, double lr,
                      const std::vector<double>* lr_scale = nullptr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
    if (st.m1.size() != st.latents.size()) st.m1.assign(st.latents.size(), 0.0);
    if (st.m2.size() != st.latents.size()) st.m2.assign(st.latents.size(), 0.0);
    ++st.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
    for (size_t i = 0; i < st.latents.size(); ++i) {
        const double g = grad[i];
        st.m1[i] = beta1 * st.m1[i] + (1.0 - beta1) * g;
        st.m2[i] = beta2 * st.m2[i] + (1.0 - beta2) * g * g;
        const double s = lr_scale ? (*lr_scale)[i] : 1.0;
        if (g != 0.0 || st.m1[i] != 0.0 || st.m2[i] != 0.0)
            st.latents[i] -= lr * s * (st.m1[i] / bc1) / (std::sqrt(st.m2[i] / bc2) + eps);
    }
}

// Adam's step magnitude is ~lr per latent. The elasticity residual varies on
// the scale h^2/E per unit displacement (two difference stencils and the
// blended stiffness), so displacement steps larger than that oscillate and
// blow the residual up; their per-coordinate step is shrunk accordingly.
inline std::vector<double> step_scales(const Model& m, double param_scale = 1.0) {
    double hmin = 1.0;
    for (int a = 0; a < m.spec.ndim; ++a) hmin = std::min(hmin, m.spec.spacing(a));
    double stiff = 1.0;
    for (const auto& lp : m.lame) stiff = std::max(stiff, lp.lambda + 2.0 * lp.mu);
    std::vector<double> scale(m.state_size(), 1.0);
    const double disp = hmin * hmin / stiff;
    for (size_t i = m.disp_offset(); i < m.param_offset(); ++i) scale[i] = disp;
    for (size_t i = m.param_offset(); i < m.state_size(); ++i) scale[i] = param_scale;
    return scale;
}

// Initial state: near-zero tumor density with a bump at the core centroid,
// uniform mesh, parameters at bound midpoints, x0 at the core centroid
// (domain center when the core is empty), seeded 1e-3 latent jitter.
inline OptimState init_state(const Model& m, unsigned long long seed) {
    const GridSpec& spec = m.spec;
    const int d = spec.ndim, nc = spec.num_cells();
    OptimState st;
    st.seed = seed;
    st.latents.assign(m.state_size(), 0.0);

    std::array<double, 3> centroid{0.5, 0.5, 0.5};
    int n_core = 0;
    std::array<double, 3> acc{};
    for (int i = 0; i < nc; ++i) {
        if (!m.obs.core_mask[i]) continue;
        auto ci = spec.cell_multi(i);
        for (int a = 0; a < d; ++a) acc[a] += (ci[a] + 0.5) * spec.spacing(a);
        ++n_core;
    }
    if (n_core > 0)
        for (int a = 0; a < d; ++a) centroid[a] = acc[a] / n_core;

    // Tumor trajectory: the seed-prior Gaussian bump at the core centroid,
    // evolved in closed form by the logistic reaction. This lies inside the
    // valley of states that satisfy both the seed prior and the growth
    // residual, which gradient descent is too slow to reach from a flat start
    // through N_t coupled slices. The total growth factor is chosen so the
    // final footprint matches the observed lesion extent: pushing the edema
    // band past saturation at the start parks those cells on the flat tail of
    // the imaging sigmoids, where no data gradient can pull them back.
    int n_region = 0;
    for (int i = 0; i < nc; ++i)
        if (m.obs.core_mask[i] || m.obs.edema_mask[i]) ++n_region;
    double vbar = 1.0;
    for (int a = 0; a < d; ++a) vbar *= spec.spacing(a);
    const double lesion_vol = std::max(n_region * vbar, 1e-4);
    const double r_obs = d == 2 ? std::sqrt(lesion_vol / std::numbers::pi)
                                : std::cbrt(3.0 * lesion_vol / (4.0 * std::numbers::pi));
    // growth factor that puts the theta_down front of the evolved Gaussian at
    // the observed lesion radius: solve g e / (1 + g (e - 1)) = theta
    const double g_edge = kGaussAmplitude * std::exp(-r_obs * r_obs / kGaussWidth);
    const double theta = 0.5 * (m.bounds.theta_down.lo + m.bounds.theta_down.hi);
    double e_total = theta * (1.0 - g_edge) / std::max(g_edge * (1.0 - theta), 1e-300);
    e_total = std::min(std::max(e_total, 1.0), 1e12);
    const double log_e = std::log(e_total);
    for (int n = 0; n <= spec.nt; ++n) {
        const double e = std::exp(log_e * n / spec.nt);
        for (int i = 0; i < nc; ++i) {
            auto ci = spec.cell_multi(i);
            double dist2 = 0.0;
            for (int a = 0; a < d; ++a) {
                const double dx = (ci[a] + 0.5) * spec.spacing(a) - centroid[a];
                dist2 += dx * dx;
            }
            const double g = kGaussAmplitude * std::exp(-dist2 / kGaussWidth);
            double c = g * e / (1.0 + g * (e - 1.0));
            // keep the tail smoothly decaying: a flat floor would erase the
            // density ranking that the equal-volume plan reads off the tail
            c = std::min(std::max(c, 1e-5), 0.99);
            st.latents[static_cast<size_t>(n) * nc + i] = std::log(c / (1.0 - c));
        }
    }

    double* th = st.latents.data() + m.param_offset();
    th[0] = latent_for(m.bounds.d_w, 0.5 * (m.bounds.d_w.lo + m.bounds.d_w.hi));
    th[1] = latent_for(m.bounds.ratio, 0.5 * (m.bounds.ratio.lo + m.bounds.ratio.hi));
    th[2] = latent_for(m.bounds.rho, 0.5 * (m.bounds.rho.lo + m.bounds.rho.hi));
    th[3] = latent_for(m.bounds.gamma, 0.5 * (m.bounds.gamma.lo + m.bounds.gamma.hi));
    for (int a = 0; a < d; ++a)
        th[4 + a] = latent_for(Range{0.0, 1.0}, centroid[a]);
    th[4 + d] = latent_for(m.bounds.theta_up, 0.5 * (m.bounds.theta_up.lo + m.bounds.theta_up.hi));
    th[4 + d + 1] =
        latent_for(m.bounds.theta_down, 0.5 * (m.bounds.theta_down.lo + m.bounds.theta_down.hi));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 1e-3);
    for (double& v : st.latents) v += jitter(rng);
    return st;
}

// Average-pool a case by factor 2 per axis onto the coarser grid.
inline PatientCase coarsen_case(const GridSpec& fine, const GridSpec& coarse,
                                const PatientCase& obs) {
    const int d = fine.ndim;
    const int ncf = fine.num_cells(), ncc = coarse.num_cells();
    PatientCase out;
    out.tissue_obs.assign(static_cast<size_t>(ncc) * 3, 0.0);
    out.core_mask.assign(ncc, 0);
    out.edema_mask.assign(ncc, 0);
    out.pet_map.assign(ncc, 0.0);
    out.provenance = obs.provenance;
    std::vector<double> core_frac(ncc, 0.0), edema_frac(ncc, 0.0), pet_cnt(ncc, 0.0);
    const double inv_block = 1.0 / (1 << d);
    for (int i = 0; i < ncf; ++i) {
        auto ci = fine.cell_multi(i);
        std::array<int, 3> cc{};
        for (int a = 0; a < d; ++a) cc[a] = ci[a] / 2;
        const int j = coarse.cell_index(cc);
        for (int k = 0; k < 3; ++k)
            out.tissue_obs[j * 3 + k] += obs.tissue_obs[i * 3 + k] * inv_block;
        core_frac[j] += obs.core_mask[i] * inv_block;
        edema_frac[j] += obs.edema_mask[i] * inv_block;
        if (obs.core_mask[i] || obs.edema_mask[i]) {
            out.pet_map[j] += obs.pet_map[i];
            pet_cnt[j] += 1.0;
        }
    }
    for (int j = 0; j < ncc; ++j) {
        out.core_mask[j] = core_frac[j] >= 0.5 ? 1 : 0;
        if (!out.core_mask[j]) out.edema_mask[j] = edema_frac[j] >= 0.5 ? 1 : 0;
        out.pet_map[j] = pet_cnt[j] > 0.0 ? out.pet_map[j] / pet_cnt[j] : 0.0;
    }
    return out;
}

// Multilinear sample of a node-centered field (constant beyond the lattice).
inline void sample_node_field(const GridSpec& spec, const double* field, int ncomp,
                              const double* x, double* out) {
    const int d = spec.ndim;
    std::array<int, 3> base{};
    double f[3];
    for (int a = 0; a < d; ++a) {
        const double u = x[a] / spec.spacing(a);
        double uc = std::min(std::max(u, 0.0), static_cast<double>(spec.shape[a]));
        int k = std::min(static_cast<int>(uc), spec.shape[a] - 1);
        base[a] = k;
        f[a] = uc - k;
    }
    for (int c = 0; c < ncomp; ++c) out[c] = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
        std::array<int, 3> ni{};
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            const int bit = (corner >> (d - 1 - a)) & 1;
            ni[a] = base[a] + bit;
            w *= bit ? f[a] : 1.0 - f[a];
        }
        const int lin = spec.node_index(ni);
        for (int c = 0; c < ncomp; ++c) out[c] += w * field[lin * ncomp + c];
    }
}

// Half-weighted Jacobi pass over interior nodes. The central-difference
// stencils of the PDE residuals are blind to the odd-even (checkerboard) node
// mode, so a coarse-level optimum can carry it invisibly; this smoother
// annihilates exactly that mode before the field is interpolated to a finer
// grid, where it would otherwise appear as a large spurious gradient.
inline void smooth_node_field(const GridSpec& spec, double* field, int ncomp) {
    const int nn = spec.num_nodes();
    std::vector<double> src(field, field + static_cast<size_t>(nn) * ncomp);
    for (int j = 0; j < nn; ++j) {
        if (!node_interior(spec, j)) continue;
        for (int c = 0; c < ncomp; ++c) {
            double nb = 0.0;
            for (int a = 0; a < spec.ndim; ++a) {
                const int s = spec.node_stride(a);
                nb += src[(j + s) * ncomp + c] + src[(j - s) * ncomp + c];
            }
            field[j * ncomp + c] = 0.5 * src[j * ncomp + c] + 0.5 * nb / (2 * spec.ndim);
        }
    }
}

// Transfer a converged coarse state to the next finer grid: tumor latents by
// multilinear interpolation between cell centers, displacements smoothed and
// multilinearly interpolated on the node lattice, parameter latents copied.
inline OptimState prolong_state(const Model& coarse, const OptimState& cst,
                                const Model& fine) {
    const GridSpec& cs = coarse.spec;
    const GridSpec& fs = fine.spec;
    const int d = fs.ndim;
    OptimState st;
    st.seed = cst.seed;
    st.latents.assign(fine.state_size(), 0.0);
    const int ncf = fs.num_cells(), nnf = fs.num_nodes();
    const int ncc = cs.num_cells(), nnc = cs.num_nodes();
    for (int n = 0; n <= fs.nt; ++n) {
        const double* zc = cst.latents.data() + static_cast<size_t>(n) * ncc;
        double* zf = st.latents.data() + static_cast<size_t>(n) * ncf;
        for (int i = 0; i < ncf; ++i) {
            auto ci = fs.cell_multi(i);
            double x[3];
            for (int a = 0; a < d; ++a) x[a] = (ci[a] + 0.5) * fs.spacing(a);
            sample_cell_field(cs, zc, 1, x, zf + i);
        }
        const double* dc = cst.latents.data() + coarse.disp_offset() +
                           static_cast<size_t>(n) * nnc * d;
        std::vector<double> dc_smooth(dc, dc + static_cast<size_t>(nnc) * d);
        smooth_node_field(cs, dc_smooth.data(), d);
        double* df = st.latents.data() + fine.disp_offset() + static_cast<size_t>(n) * nnf * d;
        for (int j = 0; j < nnf; ++j) {
            if (!node_interior(fs, j)) continue;
            auto ni = fs.node_multi(j);
            double x[3];
            for (int a = 0; a < d; ++a) x[a] = ni[a] * fs.spacing(a);
            sample_node_field(cs, dc_smooth.data(), d, x, df + j * d);
        }
    }
    for (int k = 0; k < fine.param_count(); ++k)
        st.latents[fine.param_offset() + k] = cst.latents[coarse.param_offset() + k];
    return st;
}

inline double min_cell_volume(const Model& m, const std::vector<double>& latents) {
    Unpacked u = unpack_state(m, latents);
    double vmin = std::numeric_limits<double>::infinity();
    for (int n = 0; n <= m.spec.nt; ++n) {
        CellGeometry g = cell_geometry(
            m.spec, u.pos.data() + static_cast<size_t>(n) * m.spec.num_nodes() * m.spec.ndim,
            n, /*strict=*/false);
        for (double v : g.volumes) vmin = std::min(vmin, v);
    }
    return vmin;
}

using LossCallback = std::function<void(const LossReport&)>;

// Adam loop on one grid level with step halving when a step would collapse a
// cell below 1e-6 volume, and Diverged after 10 consecutive non-finite losses.
inline void fit_level(const Model& m, OptimState& st, const FitOptions& opts,
                      std::vector<LossReport>& history, int iter_base = 0,
                      const LossCallback& cb = {}) {
    std::vector<double> grad, backup;
    const std::vector<double> scales = step_scales(m, opts.param_lr_scale);
    int bad_streak = 0;
    for (int it = 0; it < opts.iters; ++it) {
        LossReport rep;
        bool ok = true;
        try {
            rep = total_loss(m, st.latents, &grad);
            ok = std::isfinite(rep.total);
        } catch (const NumericError&) {
            // non-finite gradient or a state outside the admissible band
            ok = false;
        }
        if (!ok) {
            if (++bad_streak >= 10) throw Diverged("total loss non-finite for 10 steps");
            if (!backup.empty()) {
                // retreat halfway toward the last good state
                for (size_t i = 0; i < st.latents.size(); ++i)
                    st.latents[i] = 0.5 * (st.latents[i] + backup[i]);
            }
            continue;
        }
        bad_streak = 0;
        rep.iter = iter_base + it;
        if (it % opts.log_every == 0 || it == opts.iters - 1) {
            history.push_back(rep);
            if (cb) cb(rep);
        }
        backup = st.latents;
        adam_step(st, grad, opts.lr, &scales);
        if (min_cell_volume(m, st.latents) < 1e-6) {
            // halve the step once, then accept (the barrier takes over)
            for (size_t i = 0; i < st.latents.size(); ++i)
                st.latents[i] = 0.5 * (st.latents[i] + backup[i]);
        }
    }
}

struct FitResult {
    Model model;  // finest-level model
    OptimState state;
    std::vector<LossReport> history;
};

// Coarse-to-fine fit: factor-2 level hierarchy ending at `spec`, sequential
// Adam per level with state prolongation at each transition.
inline FitResult fit(const GridSpec& spec, const PatientCase& obs, const FitOptions& opts,
                     const MaterialTable& materials = {}, const PhysicsConfig& phys = {},
                     const ParamBounds& bounds = {}, const LossWeights& weights = {},
                     const LossCallback& cb = {}) {
    spec.validate();
    if (opts.levels < 1) throw ConfigError("levels must be >= 1");
    std::vector<GridSpec> specs(opts.levels);
    specs[opts.levels - 1] = spec;
    for (int l = opts.levels - 2; l >= 0; --l) {
        specs[l] = specs[l + 1];
        for (int a = 0; a < spec.ndim; ++a) {
            if (specs[l + 1].shape[a] % 2 != 0)
                throw ConfigError("grid shape not divisible by 2 per level");
            specs[l].shape[a] = specs[l + 1].shape[a] / 2;
        }
        if (specs[l].shape[0] % 4 != 0 || specs[l].shape[0] < 4)
            throw ConfigError("coarsest grid shape must be divisible by 4");
    }
    std::vector<PatientCase> cases(opts.levels);
    cases[opts.levels - 1] = obs;
    for (int l = opts.levels - 2; l >= 0; --l)
        cases[l] = coarsen_case(specs[l + 1], specs[l], cases[l + 1]);

    FitResult out;
    Model prev_model;
    OptimState st;
    for (int l = 0; l < opts.levels; ++l) {
        Model m = make_model(specs[l], cases[l], materials, phys, bounds, weights);
        if (l == 0)
            st = init_state(m, opts.seed);
        else
            st = prolong_state(prev_model, st, m);
        st.m1.clear();
        st.m2.clear();
        st.step = 0;
        fit_level(m, st, opts, out.history, l * opts.iters, cb);
        prev_model = std::move(m);
    }
    out.model = std::move(prev_model);
    out.state = std::move(st);
    return out;
}

} // namespace tinv
