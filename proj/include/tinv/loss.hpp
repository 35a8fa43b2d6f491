#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "tinv/elasticity.hpp"
#include "tinv/growth.hpp"
#include "tinv/imaging.hpp"
#include "tinv/priors.hpp"
#include "tinv/projection.hpp"

namespace tinv {

struct Range {
    double lo = 0.0, hi = 1.0;
};

inline double squash(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double bounded_value(const Range& r, double z) {
    return r.lo + (r.hi - r.lo) * squash(z);
}
inline double bounded_deriv(const Range& r, double z) {
    const double s = squash(z);
    return (r.hi - r.lo) * s * (1.0 - s);
}
inline double latent_for(const Range& r, double v) {
    double p = (v - r.lo) / (r.hi - r.lo);
    p = std::min(std::max(p, 1e-9), 1.0 - 1e-9);
    return std::log(p / (1.0 - p));
}

// Optimization ranges in domain units. D_w and rho come from the published
// mm^2/day / 1/day ranges (0.035..0.2 each) rescaled by the growth horizon
// and domain extent; the remaining ranges are dimensionless.
struct ParamBounds {
    Range d_w{diffusivity_to_domain(0.035), diffusivity_to_domain(0.2)};
    Range rho{rate_to_domain(0.035), rate_to_domain(0.2)};
    Range ratio{10.0, 30.0};
    Range gamma{0.0, 1.5};
    Range theta_up{0.45, 0.60};
    Range theta_down{0.15, 0.35};
    Range theta_necro{0.70, 0.85};
};

// Eq. 10 weights in paper order: growth, elasticity, seed, symmetry, core,
// edema, metabolic map, tissues. Applied after per-term normalization.
struct LossWeights {
    std::array<double, 8> alpha{1.0, 0.1, 0.05, 0.05, 10.0, 10.0, 5.0, 1.0};
};

inline const char* loss_term_name(int k) {
    static const char* names[8] = {"tumor_growth_pde", "tissue_elasticity_pde",
                                   "gaussian_seed",    "healthy_anatomy",
                                   "core",             "edema",
                                   "metabolic_map",    "tissues"};
    return names[k];
}

struct LossReport {
    std::array<double, 8> raw{};
    std::array<double, 8> weighted{};
    double total = 0.0;
    int iter = 0;
    double wall_time = 0.0;
};

// Fixed problem data for one grid level. The learnable state is a flat vector:
// [tumor latents | node displacements (boundary entries inert) | parameter
// latents (D_w, R, rho, gamma, x0, theta_up, theta_down)].
struct Model {
    GridSpec spec;
    PhysicsConfig phys;
    ParamBounds bounds;
    LossWeights weights;
    int mirror_axis = 0;
    std::array<LamePair, 4> lame;
    std::vector<double> intensities;  // per node, fixed during optimization
    std::vector<double> uniform_pos;  // reference lattice
    PatientCase obs;
    std::vector<unsigned char> region_mask;  // core | edema

    size_t z_count() const {
        return static_cast<size_t>(spec.nt + 1) * spec.num_cells();
    }
    size_t disp_count() const {
        return static_cast<size_t>(spec.nt + 1) * spec.num_nodes() * spec.ndim;
    }
    int param_count() const { return 4 + spec.ndim + 2; }
    size_t disp_offset() const { return z_count(); }
    size_t param_offset() const { return z_count() + disp_count(); }
    size_t state_size() const { return param_offset() + param_count(); }
};

// Samples a cell-centered field at an arbitrary point with multilinear
// interpolation between cell centers (constant extrapolation at the edges).
inline void sample_cell_field(const GridSpec& spec, const double* field, int ncomp,
                              const double* x, double* out) {
    const int d = spec.ndim;
    std::array<int, 3> base{};
    double f[3];
    for (int a = 0; a < d; ++a) {
        const double u = x[a] / spec.spacing(a) - 0.5;
        double uc = std::min(std::max(u, 0.0), static_cast<double>(spec.shape[a] - 1));
        int k = std::min(static_cast<int>(uc), spec.shape[a] - 2);
        k = std::max(k, 0);
        base[a] = k;
        f[a] = uc - k;
    }
    for (int c = 0; c < ncomp; ++c) out[c] = 0.0;
    const int ncorner = 1 << d;
    for (int corner = 0; corner < ncorner; ++corner) {
        std::array<int, 3> ci{};
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            const int bit = (corner >> (d - 1 - a)) & 1;
            ci[a] = base[a] + bit;
            w *= bit ? f[a] : 1.0 - f[a];
        }
        const int lin = spec.cell_index(ci);
        for (int c = 0; c < ncomp; ++c) out[c] += w * field[lin * ncomp + c];
    }
}

inline Model make_model(const GridSpec& spec, const PatientCase& obs,
                        const MaterialTable& materials = {}, const PhysicsConfig& phys = {},
                        const ParamBounds& bounds = {}, const LossWeights& weights = {}) {
    spec.validate();
    Model m;
    m.spec = spec;
    m.phys = phys;
    m.bounds = bounds;
    m.weights = weights;
    m.lame = nondimensional_lame(materials, phys.ref_modulus);
    m.obs = obs;
    const int nn = spec.num_nodes();
    m.uniform_pos.resize(static_cast<size_t>(nn) * spec.ndim);
    for (int j = 0; j < nn; ++j) {
        auto idx = spec.node_multi(j);
        for (int a = 0; a < spec.ndim; ++a)
            m.uniform_pos[j * spec.ndim + a] = idx[a] * spec.spacing(a);
    }
    // fixed particle intensities reproduce the observed t=1 tissues
    m.intensities.assign(static_cast<size_t>(nn) * 3, 0.0);
    for (int j = 0; j < nn; ++j)
        sample_cell_field(spec, obs.tissue_obs.data(), 3, m.uniform_pos.data() + j * spec.ndim,
                          m.intensities.data() + j * 3);
    m.region_mask.assign(spec.num_cells(), 0);
    for (int i = 0; i < spec.num_cells(); ++i)
        m.region_mask[i] = obs.core_mask[i] || obs.edema_mask[i];
    return m;
}

struct Unpacked {
    std::vector<double> c;    // (nt+1) x num_cells
    std::vector<double> pos;  // (nt+1) x num_nodes x ndim
    DynamicsParams dyn;
    std::array<double, 3> x0{};
    ImagingParams img;
};

inline bool node_interior(const GridSpec& spec, int j) {
    auto idx = spec.node_multi(j);
    for (int a = 0; a < spec.ndim; ++a)
        if (idx[a] == 0 || idx[a] == spec.shape[a]) return false;
    return true;
}

inline Unpacked unpack_state(const Model& m, const std::vector<double>& latents) {
    const GridSpec& spec = m.spec;
    const int d = spec.ndim, nn = spec.num_nodes();
    Unpacked u;
    u.c.resize(m.z_count());
    for (size_t i = 0; i < u.c.size(); ++i) u.c[i] = squash(latents[i]);
    u.pos.assign(m.disp_count(), 0.0);
    const double* disp = latents.data() + m.disp_offset();
    for (int n = 0; n <= spec.nt; ++n) {
        double* p = u.pos.data() + static_cast<size_t>(n) * nn * d;
        const double* dn = disp + static_cast<size_t>(n) * nn * d;
        for (int j = 0; j < nn; ++j) {
            const bool interior = node_interior(spec, j);
            for (int a = 0; a < d; ++a)
                p[j * d + a] = m.uniform_pos[j * d + a] + (interior ? dn[j * d + a] : 0.0);
        }
    }
    const double* th = latents.data() + m.param_offset();
    const double d_w = bounded_value(m.bounds.d_w, th[0]);
    u.dyn.ratio = bounded_value(m.bounds.ratio, th[1]);
    u.dyn.d_gm = d_w / u.dyn.ratio;
    u.dyn.rho = bounded_value(m.bounds.rho, th[2]);
    u.dyn.gamma = bounded_value(m.bounds.gamma, th[3]);
    for (int a = 0; a < d; ++a) u.x0[a] = squash(th[4 + a]);
    u.img.theta_up = bounded_value(m.bounds.theta_up, th[4 + d]);
    u.img.theta_down = bounded_value(m.bounds.theta_down, th[4 + d + 1]);
    return u;
}

// Evaluates the eight-term combined loss; when `grad` is non-null it is filled
// with the exact reverse-mode derivative with respect to every latent.
inline LossReport total_loss(const Model& m, const std::vector<double>& latents,
                             std::vector<double>* grad = nullptr) {
    const auto t_start = std::chrono::steady_clock::now();
    const GridSpec& spec = m.spec;
    const int d = spec.ndim;
    const int nc = spec.num_cells();
    const int nn = spec.num_nodes();
    Unpacked u = unpack_state(m, latents);

    int n_interior = 0;
    for (int j = 0; j < nn; ++j)
        if (node_interior(spec, j)) ++n_interior;
    int n_core = 0, n_edema = 0;
    for (int i = 0; i < nc; ++i) {
        n_core += m.obs.core_mask[i] ? 1 : 0;
        n_edema += m.obs.edema_mask[i] ? 1 : 0;
    }
    const int n_outside = nc - n_core;
    // Per-term normalization: cell/node counts, with the PDE residuals also
    // rescaled to natural units so the weights are grid-size independent --
    // growth residuals carry a volume/dt factor (converted to density change
    // per step), elasticity residuals a 1/h factor (converted back by h^2).
    double vbar = 1.0, hbar = 0.0;
    for (int a = 0; a < d; ++a) {
        vbar *= spec.spacing(a);
        hbar += spec.spacing(a) / d;
    }
    const double growth_unit = (vbar / spec.dt()) * (vbar / spec.dt());
    std::array<double, 8> norm = {
        static_cast<double>(spec.nt) * nc * growth_unit,
        static_cast<double>(spec.nt + 1) * std::max(n_interior, 1) / (hbar * hbar),
        static_cast<double>(nc),
        1.0,
        static_cast<double>(std::max(n_core, 1)),
        static_cast<double>(std::max(n_edema, 1)),
        1.0,
        3.0 * std::max(n_outside, 1)};
    std::array<double, 8> w{};
    for (int k = 0; k < 8; ++k) w[k] = m.weights.alpha[k] / norm[k];

    const bool backward = grad != nullptr;
    std::vector<double> d_c, d_pos;
    double d_dgm = 0.0, d_ratio = 0.0, d_rho = 0.0, d_gamma = 0.0;
    std::array<double, 3> d_x0{};
    double d_thup = 0.0, d_thdown = 0.0;
    if (backward) {
        d_c.assign(m.z_count(), 0.0);
        d_pos.assign(m.disp_count(), 0.0);
    }
    auto c_slice = [&](int n) { return u.c.data() + static_cast<size_t>(n) * nc; };
    auto p_slice = [&](int n) { return u.pos.data() + static_cast<size_t>(n) * nn * d; };
    auto dc_slice = [&](int n) {
        return backward ? d_c.data() + static_cast<size_t>(n) * nc : nullptr;
    };
    auto dp_slice = [&](int n) {
        return backward ? d_pos.data() + static_cast<size_t>(n) * nn * d : nullptr;
    };

    LossReport rep;

    // 1: tumor growth PDE
    if (m.weights.alpha[0] != 0.0 || !backward) {
        GrowthWorkspace ws;
        for (int n = 1; n <= spec.nt; ++n)
            rep.raw[0] += growth_slice(spec, c_slice(n), c_slice(n - 1), p_slice(n),
                                       m.intensities.data(), u.dyn, m.phys, n, ws,
                                       backward ? w[0] : 0.0, dc_slice(n), dc_slice(n - 1),
                                       dp_slice(n), &d_dgm, &d_ratio, &d_rho);
    }
    // 2: tissue elasticity PDE (includes the J-floor barrier)
    if (m.weights.alpha[1] != 0.0 || !backward) {
        ElasticityWorkspace ws;
        for (int n = 0; n <= spec.nt; ++n) {
            auto res = elasticity_slice(spec, p_slice(0), p_slice(n), c_slice(n),
                                        m.intensities.data(), m.lame, u.dyn.gamma, m.phys, n,
                                        ws, backward ? w[1] : 0.0, dp_slice(0), dp_slice(n),
                                        dc_slice(n), &d_gamma);
            rep.raw[1] += res.loss + res.barrier;
        }
    }
    // 3: Gaussian seed
    rep.raw[2] = gaussian_seed_loss(spec, c_slice(0), p_slice(0), u.x0.data(),
                                    backward ? w[2] : 0.0, dc_slice(0), dp_slice(0),
                                    d_x0.data());
    // 4 and 8 share the projected tissue fields at t=0 and t=N_t
    {
        TissueProjection proj0 = tissue_at_cells(spec, m.intensities.data(), p_slice(0), 0);
        std::vector<double> d_tc;
        if (backward) d_tc.assign(static_cast<size_t>(nc) * 3, 0.0);
        rep.raw[3] = symmetry_loss_cells(spec, proj0.cells.data(), m.mirror_axis,
                                         backward ? w[3] : 0.0,
                                         backward ? d_tc.data() : nullptr);
        if (backward)
            tissue_at_cells_backward(spec, m.intensities.data(), p_slice(0), proj0,
                                     d_tc.data(), dp_slice(0));
    }
    // 5-7: data terms on the final tumor slice
    rep.raw[4] = core_loss(c_slice(spec.nt), m.obs.core_mask, u.img.theta_up,
                           backward ? w[4] : 0.0, dc_slice(spec.nt), &d_thup);
    rep.raw[5] = edema_loss(c_slice(spec.nt), m.obs.edema_mask, u.img.theta_down,
                            u.img.theta_up, backward ? w[5] : 0.0, dc_slice(spec.nt),
                            &d_thdown, &d_thup);
    rep.raw[6] = pet_loss(c_slice(spec.nt), m.obs.pet_map.data(), m.region_mask,
                          backward ? w[6] : 0.0, dc_slice(spec.nt));
    // 8: tissues outside the core at t=1
    {
        TissueProjection projN =
            tissue_at_cells(spec, m.intensities.data(), p_slice(spec.nt), spec.nt);
        std::vector<double> d_tc;
        if (backward) d_tc.assign(static_cast<size_t>(nc) * 3, 0.0);
        rep.raw[7] = tissue_loss_cells(projN.cells.data(), m.obs, nc, backward ? w[7] : 0.0,
                                       backward ? d_tc.data() : nullptr);
        if (backward)
            tissue_at_cells_backward(spec, m.intensities.data(), p_slice(spec.nt), projN,
                                     d_tc.data(), dp_slice(spec.nt));
    }

    for (int k = 0; k < 8; ++k) {
        rep.weighted[k] = w[k] * rep.raw[k];
        rep.total += rep.weighted[k];
        if (!std::isfinite(rep.raw[k]) && backward)
            throw NonFiniteGradient(std::string("non-finite loss term: ") + loss_term_name(k));
    }

    if (backward) {
        std::vector<double>& g = *grad;
        g.assign(m.state_size(), 0.0);
        // tumor latents through the logistic squashing map
        for (size_t i = 0; i < m.z_count(); ++i)
            g[i] = d_c[i] * u.c[i] * (1.0 - u.c[i]);
        // displacements: interior nodes only, boundary pinned
        double* gd = g.data() + m.disp_offset();
        for (int n = 0; n <= spec.nt; ++n)
            for (int j = 0; j < nn; ++j) {
                if (!node_interior(spec, j)) continue;
                for (int a = 0; a < d; ++a) {
                    const size_t off = (static_cast<size_t>(n) * nn + j) * d + a;
                    gd[off] = d_pos[off];
                }
            }
        // bounded parameters through their logistic reparameterizations
        const double* th = latents.data() + m.param_offset();
        double* gt = g.data() + m.param_offset();
        // d_gm = d_w / ratio couples the first two latents
        gt[0] = d_dgm / u.dyn.ratio * bounded_deriv(m.bounds.d_w, th[0]);
        const double d_w_val = u.dyn.d_gm * u.dyn.ratio;
        gt[1] = (d_ratio - d_dgm * d_w_val / (u.dyn.ratio * u.dyn.ratio)) *
                bounded_deriv(m.bounds.ratio, th[1]);
        gt[2] = d_rho * bounded_deriv(m.bounds.rho, th[2]);
        gt[3] = d_gamma * bounded_deriv(m.bounds.gamma, th[3]);
        for (int a = 0; a < d; ++a) {
            const double s = squash(th[4 + a]);
            gt[4 + a] = d_x0[a] * s * (1.0 - s);
        }
        gt[4 + d] = d_thup * bounded_deriv(m.bounds.theta_up, th[4 + d]);
        gt[4 + d + 1] = d_thdown * bounded_deriv(m.bounds.theta_down, th[4 + d + 1]);
        for (double v : g)
            if (!std::isfinite(v)) throw NonFiniteGradient("non-finite gradient component");
    }

    rep.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

} // namespace tinv
