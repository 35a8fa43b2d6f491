#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "tinv/geometry.hpp"
#include "tinv/grid.hpp"
#include "tinv/transfer.hpp"

namespace tinv {

struct PhysicsConfig {
    double eps_j = 1e-4;               // log-det floor in loss mode
    double ref_modulus = 2100.0;       // stress nondimensionalization scale (GM Young's modulus)
    double diffusive_threshold = 0.1;  // WM+GM fraction below which D = 0
};

inline std::array<LamePair, 4> nondimensional_lame(const MaterialTable& table,
                                                   double ref_modulus) {
    auto lame = lame_parameters(table);
    for (auto& lp : lame) {
        lp.lambda /= ref_modulus;
        lp.mu /= ref_modulus;
    }
    return lame;
}

namespace detail {

inline double det_nd(const double* F, int d) {
    if (d == 2) return F[0] * F[3] - F[1] * F[2];
    return F[0] * (F[4] * F[8] - F[5] * F[7]) - F[1] * (F[3] * F[8] - F[5] * F[6]) +
           F[2] * (F[3] * F[7] - F[4] * F[6]);
}

// cofactor matrix, so that dJ/dF_ij = cof_ij
inline void cofactor_nd(const double* F, int d, double* cof) {
    if (d == 2) {
        cof[0] = F[3];
        cof[1] = -F[2];
        cof[2] = -F[1];
        cof[3] = F[0];
    } else {
        cof[0] = F[4] * F[8] - F[5] * F[7];
        cof[1] = -(F[3] * F[8] - F[5] * F[6]);
        cof[2] = F[3] * F[7] - F[4] * F[6];
        cof[3] = -(F[1] * F[8] - F[2] * F[7]);
        cof[4] = F[0] * F[8] - F[2] * F[6];
        cof[5] = -(F[0] * F[7] - F[1] * F[6]);
        cof[6] = F[1] * F[5] - F[2] * F[4];
        cof[7] = -(F[0] * F[5] - F[2] * F[3]);
        cof[8] = F[0] * F[4] - F[1] * F[3];
    }
}

} // namespace detail

// sigma = (mu/J)(F F^T - I) + lambda ln(J) I, strict about J <= 0.
inline void neo_hookean_stress(const double* F, int d, double lambda, double mu, double* sigma) {
    const double J = detail::det_nd(F, d);
    if (!(J > 0.0)) throw NonPositiveJacobian("det(F) <= 0 in neo_hookean_stress");
    const double lnJ = std::log(J);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double ffij = 0.0;
            for (int k = 0; k < d; ++k) ffij += F[i * d + k] * F[j * d + k];
            sigma[i * d + j] = mu / J * (ffij - (i == j ? 1.0 : 0.0)) +
                               (i == j ? lambda * lnJ : 0.0);
        }
}

// Nodal deformation gradients F = I + grad(u), u = p^n - p^0, by central
// differences on the reference lattice (one-sided on the boundary).
inline std::vector<double> deformation_gradient(const GridSpec& spec, const double* p0,
                                                const double* pn) {
    const int d = spec.ndim;
    const int nn = spec.num_nodes();
    std::vector<double> u(static_cast<size_t>(nn) * d);
    for (size_t i = 0; i < u.size(); ++i) u[i] = pn[i] - p0[i];
    std::vector<double> F(static_cast<size_t>(nn) * d * d, 0.0);
    for (int j = 0; j < nn; ++j) {
        auto idx = spec.node_multi(j);
        for (int a = 0; a < d; ++a) {
            const int s = spec.node_stride(a);
            const double h = spec.spacing(a);
            int jp, jm;
            double scale;
            if (idx[a] == 0) {
                jp = j + s; jm = j; scale = 1.0 / h;
            } else if (idx[a] == spec.shape[a]) {
                jp = j; jm = j - s; scale = 1.0 / h;
            } else {
                jp = j + s; jm = j - s; scale = 0.5 / h;
            }
            for (int i = 0; i < d; ++i)
                F[(j * d + i) * d + a] = scale * (u[jp * d + i] - u[jm * d + i]);
        }
        for (int i = 0; i < d; ++i) F[(j * d + i) * d + i] += 1.0;
    }
    return F;
}

// One time slice of the elasticity residual (Eq. over interior nodes) with the
// soft log-det barrier, and its reverse-mode accumulation. The tumor field is
// projected from cells to nodes through the deformed centroids.
struct ElasticityWorkspace {
    std::vector<double> F, sigma, cof;
    std::vector<double> c_nodes, lambda_n, mu_n, Jv;
    std::vector<double> d_sigma, d_c_nodes, d_u, d_centroids, d_c_cells_tmp;
};

struct ElasticitySliceResult {
    double loss = 0.0;
    double barrier = 0.0;
};

// grads may be null. d_p0/d_pn/d_c_cells accumulate, d_gamma accumulates.
inline ElasticitySliceResult elasticity_slice(
    const GridSpec& spec, const double* p0, const double* pn, const double* c_cells,
    const double* intensities, const std::array<LamePair, 4>& lame, double gamma,
    const PhysicsConfig& cfg, int timestep, ElasticityWorkspace& ws,
    double gscale = 0.0, double* d_p0 = nullptr, double* d_pn = nullptr,
    double* d_c_cells = nullptr, double* d_gamma = nullptr,
    std::vector<double>* residual_out = nullptr) {
    const int d = spec.ndim;
    const int nn = spec.num_nodes();
    const int nc = spec.num_cells();
    const bool backward = gscale != 0.0;

    CellGeometry geom = cell_geometry(spec, pn, timestep, /*strict=*/false);

    // tumor density at nodes
    ws.c_nodes.assign(nn, 0.0);
    P2GResult cproj = particles_to_grid(spec, c_cells, 1, geom.centroids.data(), nc);
    ws.c_nodes = cproj.values;

    ws.F = deformation_gradient(spec, p0, pn);
    ws.sigma.assign(static_cast<size_t>(nn) * d * d, 0.0);
    ws.lambda_n.assign(nn, 0.0);
    ws.mu_n.assign(nn, 0.0);
    ws.Jv.assign(nn, 0.0);

    ElasticitySliceResult res;
    for (int j = 0; j < nn; ++j) {
        const double* F = ws.F.data() + static_cast<size_t>(j) * d * d;
        const double J = detail::det_nd(F, d);
        ws.Jv[j] = J;
        const double Js = std::max(J, cfg.eps_j);
        if (J < cfg.eps_j) {
            const double e = J - cfg.eps_j;
            res.barrier += e * e / cfg.eps_j;
        }
        LamePair lp = blend_lame(lame, intensities + j * 3, ws.c_nodes[j]);
        ws.lambda_n[j] = lp.lambda;
        ws.mu_n[j] = lp.mu;
        const double lnJ = std::log(Js);
        double* sg = ws.sigma.data() + static_cast<size_t>(j) * d * d;
        for (int i = 0; i < d; ++i)
            for (int k = 0; k < d; ++k) {
                double ffik = 0.0;
                for (int l = 0; l < d; ++l) ffik += F[i * d + l] * F[k * d + l];
                sg[i * d + k] = lp.mu / Js * (ffik - (i == k ? 1.0 : 0.0)) +
                                (i == k ? lp.lambda * lnJ : 0.0);
            }
    }

    if (residual_out) residual_out->assign(static_cast<size_t>(nn) * d, 0.0);

    if (backward) {
        ws.d_sigma.assign(static_cast<size_t>(nn) * d * d, 0.0);
        ws.d_c_nodes.assign(nn, 0.0);
    }

    // interior-node residual: div(sigma) + gamma * grad(c)
    for (int j = 0; j < nn; ++j) {
        auto idx = spec.node_multi(j);
        bool interior = true;
        for (int a = 0; a < d; ++a)
            if (idx[a] == 0 || idx[a] == spec.shape[a]) { interior = false; break; }
        if (!interior) continue;
        double r[3] = {0, 0, 0};
        for (int i = 0; i < d; ++i) {
            double div = 0.0;
            for (int a = 0; a < d; ++a) {
                const int s = spec.node_stride(a);
                div += (ws.sigma[((j + s) * d + i) * d + a] -
                        ws.sigma[((j - s) * d + i) * d + a]) * 0.5 / spec.spacing(a);
            }
            const int si = spec.node_stride(i);
            const double gc = (ws.c_nodes[j + si] - ws.c_nodes[j - si]) * 0.5 / spec.spacing(i);
            r[i] = div + gamma * gc;
            if (residual_out) (*residual_out)[j * d + i] = r[i];
            res.loss += r[i] * r[i];
            if (backward) {
                const double gr = gscale * 2.0 * r[i];
                for (int a = 0; a < d; ++a) {
                    const int s = spec.node_stride(a);
                    const double w = gr * 0.5 / spec.spacing(a);
                    ws.d_sigma[((j + s) * d + i) * d + a] += w;
                    ws.d_sigma[((j - s) * d + i) * d + a] -= w;
                }
                const double wc = gr * gamma * 0.5 / spec.spacing(i);
                ws.d_c_nodes[j + si] += wc;
                ws.d_c_nodes[j - si] -= wc;
                if (d_gamma) *d_gamma += gr * gc;
            }
        }
    }

    if (!backward) return res;

    // back through stress, blend and deformation gradient
    ws.d_u.assign(static_cast<size_t>(nn) * d, 0.0);
    double cofm[9], dF[9];
    for (int j = 0; j < nn; ++j) {
        const double* F = ws.F.data() + static_cast<size_t>(j) * d * d;
        const double* S = ws.d_sigma.data() + static_cast<size_t>(j) * d * d;
        const double J = ws.Jv[j];
        const double Js = std::max(J, cfg.eps_j);
        const double lnJ = std::log(Js);
        const double mu = ws.mu_n[j], lambda = ws.lambda_n[j];

        double sff = 0.0, trS = 0.0;  // <S, FF^T - I>, tr(S)
        for (int i = 0; i < d; ++i) {
            trS += S[i * d + i];
            for (int k = 0; k < d; ++k) {
                double ffik = 0.0;
                for (int l = 0; l < d; ++l) ffik += F[i * d + l] * F[k * d + l];
                sff += S[i * d + k] * (ffik - (i == k ? 1.0 : 0.0));
            }
        }
        const double d_mu = sff / Js;
        const double d_lambda = trS * lnJ;
        double d_Js = -mu / (Js * Js) * sff + lambda * trS / Js;
        double d_J = (J > cfg.eps_j) ? d_Js : 0.0;
        if (J < cfg.eps_j) d_J += gscale * 2.0 * (J - cfg.eps_j) / cfg.eps_j;

        // dF from (mu/Js)(S + S^T) F and from J via cofactors
        detail::cofactor_nd(F, d, cofm);
        for (int i = 0; i < d; ++i)
            for (int a = 0; a < d; ++a) {
                double v = 0.0;
                for (int k = 0; k < d; ++k)
                    v += (S[i * d + k] + S[k * d + i]) * F[k * d + a];
                dF[i * d + a] = mu / Js * v + d_J * cofm[i * d + a];
            }

        // blend sensitivity to the tumor weight
        const double* m = intensities + j * 3;
        const double total = m[0] + m[1] + m[2] + ws.c_nodes[j];
        if (total >= 1e-8) {
            const LamePair& tum = lame[static_cast<int>(Tissue::Tumor)];
            ws.d_c_nodes[j] += d_lambda * (tum.lambda - lambda) / total +
                               d_mu * (tum.mu - mu) / total;
        }

        // distribute dF into du via the difference stencils
        auto idx = spec.node_multi(j);
        for (int a = 0; a < d; ++a) {
            const int s = spec.node_stride(a);
            const double h = spec.spacing(a);
            int jp, jm;
            double scale;
            if (idx[a] == 0) {
                jp = j + s; jm = j; scale = 1.0 / h;
            } else if (idx[a] == spec.shape[a]) {
                jp = j; jm = j - s; scale = 1.0 / h;
            } else {
                jp = j + s; jm = j - s; scale = 0.5 / h;
            }
            for (int i = 0; i < d; ++i) {
                const double g = dF[i * d + a] * scale;
                ws.d_u[jp * d + i] += g;
                ws.d_u[jm * d + i] -= g;
            }
        }
    }
    for (int i = 0; i < nn * d; ++i) {
        if (d_pn) d_pn[i] += ws.d_u[i];
        if (d_p0) d_p0[i] -= ws.d_u[i];
    }

    // back through the cell->node projection of c
    ws.d_centroids.assign(static_cast<size_t>(nc) * d, 0.0);
    particles_to_grid_backward(spec, c_cells, 1, geom.centroids.data(), nc, cproj,
                               ws.d_c_nodes.data(), d_c_cells, ws.d_centroids.data());
    if (d_pn)
        cell_geometry_backward(spec, pn, nullptr, ws.d_centroids.data(), nullptr, d_pn);

    return res;
}

} // namespace tinv
