#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "tinv/grid.hpp"

namespace tinv {

// Trilinear (bilinear in 2D) shape-function weights of the reference lattice
// evaluated at one query position. Positions outside [0,1]^ndim are clamped
// for evaluation and flagged; the weight gradient along a clamped axis is 0.
struct ShapeWeights {
    int nodes[8];
    double w[8];
    double dw[8][3];  // dw/dx per axis
    int count = 0;
    bool clamped = false;
};

inline ShapeWeights shape_weights(const GridSpec& spec, const double* x) {
    const int d = spec.ndim;
    ShapeWeights sw;
    sw.count = 1 << d;
    std::array<int, 3> base{};
    double f[3], dfdx[3];
    for (int a = 0; a < d; ++a) {
        double xa = x[a];
        if (!(xa >= -0.25 && xa <= 1.25))
            throw GuardBandViolation("query position outside guard band");
        double xc = std::clamp(xa, 0.0, 1.0);
        bool clamped_a = xc != xa;
        sw.clamped = sw.clamped || clamped_a;
        const double h = spec.spacing(a);
        int k = std::min(static_cast<int>(xc / h), spec.shape[a] - 1);
        base[a] = k;
        f[a] = xc / h - k;
        dfdx[a] = clamped_a ? 0.0 : 1.0 / h;
    }
    for (int corner = 0; corner < sw.count; ++corner) {
        std::array<int, 3> ni{};
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            const int bit = (corner >> (d - 1 - a)) & 1;
            ni[a] = base[a] + bit;
            w *= bit ? f[a] : 1.0 - f[a];
        }
        sw.nodes[corner] = spec.node_index(ni);
        sw.w[corner] = w;
        for (int a = 0; a < d; ++a) {
            double g = 1.0;
            for (int b = 0; b < d; ++b) {
                const int bit = (corner >> (d - 1 - b)) & 1;
                if (b == a)
                    g *= (bit ? 1.0 : -1.0) * dfdx[b];
                else
                    g *= bit ? f[b] : 1.0 - f[b];
            }
            sw.dw[corner][a] = g;
        }
    }
    return sw;
}

// F_j^P = sum_i w_ij F_i^G, ncomp interleaved components.
inline void grid_to_particles(const GridSpec& spec, const double* grid_field, int ncomp,
                              const double* positions, int num_particles, double* out,
                              std::vector<unsigned char>* out_of_domain = nullptr) {
    const int d = spec.ndim;
    if (out_of_domain) out_of_domain->assign(num_particles, 0);
    for (int p = 0; p < num_particles; ++p) {
        ShapeWeights sw = shape_weights(spec, positions + p * d);
        if (out_of_domain && sw.clamped) (*out_of_domain)[p] = 1;
        for (int c = 0; c < ncomp; ++c) {
            double v = 0.0;
            for (int k = 0; k < sw.count; ++k) v += sw.w[k] * grid_field[sw.nodes[k] * ncomp + c];
            out[p * ncomp + c] = v;
        }
    }
}

inline void grid_to_particles_backward(const GridSpec& spec, const double* grid_field, int ncomp,
                                       const double* positions, int num_particles,
                                       const double* d_out, double* d_grid_field,
                                       double* d_positions) {
    const int d = spec.ndim;
    for (int p = 0; p < num_particles; ++p) {
        ShapeWeights sw = shape_weights(spec, positions + p * d);
        for (int c = 0; c < ncomp; ++c) {
            const double g = d_out[p * ncomp + c];
            if (g == 0.0) continue;
            for (int k = 0; k < sw.count; ++k) {
                if (d_grid_field) d_grid_field[sw.nodes[k] * ncomp + c] += g * sw.w[k];
                if (d_positions) {
                    const double fv = grid_field[sw.nodes[k] * ncomp + c];
                    for (int a = 0; a < d; ++a)
                        d_positions[p * d + a] += g * sw.dw[k][a] * fv;
                }
            }
        }
    }
}

// F_i^G = sum_j w_ij F_j^P / sum_j w_ij; empty nodes get 0 and are flagged.
struct P2GResult {
    std::vector<double> values;       // [num_nodes][ncomp]
    std::vector<double> weight_sum;   // [num_nodes]
    std::vector<unsigned char> empty; // [num_nodes]
};

inline P2GResult particles_to_grid(const GridSpec& spec, const double* particle_field, int ncomp,
                                   const double* positions, int num_particles) {
    const int d = spec.ndim;
    const int nn = spec.num_nodes();
    P2GResult res;
    res.values.assign(static_cast<size_t>(nn) * ncomp, 0.0);
    res.weight_sum.assign(nn, 0.0);
    res.empty.assign(nn, 0);
    for (int p = 0; p < num_particles; ++p) {
        ShapeWeights sw = shape_weights(spec, positions + p * d);
        for (int k = 0; k < sw.count; ++k) {
            res.weight_sum[sw.nodes[k]] += sw.w[k];
            for (int c = 0; c < ncomp; ++c)
                res.values[sw.nodes[k] * ncomp + c] += sw.w[k] * particle_field[p * ncomp + c];
        }
    }
    for (int i = 0; i < nn; ++i) {
        if (res.weight_sum[i] < 1e-12) {
            res.empty[i] = 1;
            for (int c = 0; c < ncomp; ++c) res.values[i * ncomp + c] = 0.0;
        } else {
            for (int c = 0; c < ncomp; ++c) res.values[i * ncomp + c] /= res.weight_sum[i];
        }
    }
    return res;
}

inline void particles_to_grid_backward(const GridSpec& spec, const double* particle_field,
                                       int ncomp, const double* positions, int num_particles,
                                       const P2GResult& res, const double* d_values,
                                       double* d_particle_field, double* d_positions) {
    const int d = spec.ndim;
    for (int p = 0; p < num_particles; ++p) {
        ShapeWeights sw = shape_weights(spec, positions + p * d);
        for (int k = 0; k < sw.count; ++k) {
            const int n = sw.nodes[k];
            if (res.empty[n]) continue;
            const double inv_wsum = 1.0 / res.weight_sum[n];
            double d_w = 0.0;
            for (int c = 0; c < ncomp; ++c) {
                const double g = d_values[n * ncomp + c] * inv_wsum;
                if (d_particle_field) d_particle_field[p * ncomp + c] += g * sw.w[k];
                d_w += g * (particle_field[p * ncomp + c] - res.values[n * ncomp + c]);
            }
            if (d_positions)
                for (int a = 0; a < d; ++a) d_positions[p * d + a] += d_w * sw.dw[k][a];
        }
    }
}

} // namespace tinv
