#pragma once

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "tinv/grid.hpp"

namespace tinv {

inline constexpr double kSigmoidBeta = 50.0;
inline constexpr double kThresholdOffset = 0.05;  // alpha in the imaging model

inline double imaging_sigmoid(double x, double beta = kSigmoidBeta) {
    return 1.0 / (1.0 + std::exp(-beta * x));
}

// sum over core cells of sigmoid(theta_up - c_i - alpha); penalizes core
// voxels whose predicted density falls below the visibility threshold.
inline double core_loss(const double* c_final, const std::vector<unsigned char>& core_mask,
                        double theta_up, double gscale = 0.0, double* d_c = nullptr,
                        double* d_theta_up = nullptr) {
    double loss = 0.0;
    for (size_t i = 0; i < core_mask.size(); ++i) {
        if (!core_mask[i]) continue;
        const double s = imaging_sigmoid(theta_up - c_final[i] - kThresholdOffset);
        loss += s;
        if (gscale != 0.0) {
            const double ds = kSigmoidBeta * s * (1.0 - s);
            if (d_c) d_c[i] -= gscale * ds;
            if (d_theta_up) *d_theta_up += gscale * ds;
        }
    }
    return loss;
}

// sum over edema cells of the below-band and above-band penalties.
inline double edema_loss(const double* c_final, const std::vector<unsigned char>& edema_mask,
                         double theta_down, double theta_up, double gscale = 0.0,
                         double* d_c = nullptr, double* d_theta_down = nullptr,
                         double* d_theta_up = nullptr) {
    double loss = 0.0;
    for (size_t i = 0; i < edema_mask.size(); ++i) {
        if (!edema_mask[i]) continue;
        const double s1 = imaging_sigmoid(theta_down - c_final[i] - kThresholdOffset);
        const double s2 = imaging_sigmoid(theta_up - c_final[i] + kThresholdOffset);
        loss += s1 + (1.0 - s2);
        if (gscale != 0.0) {
            const double ds1 = kSigmoidBeta * s1 * (1.0 - s1);
            const double ds2 = kSigmoidBeta * s2 * (1.0 - s2);
            if (d_c) d_c[i] += gscale * (-ds1 + ds2);
            if (d_theta_down) *d_theta_down += gscale * ds1;
            if (d_theta_up) *d_theta_up -= gscale * ds2;
        }
    }
    return loss;
}

// 1 - Pearson correlation over masked cells; degenerate variance returns 1.
inline double pet_loss(const double* c_final, const double* pet_map,
                       const std::vector<unsigned char>& region_mask, double gscale = 0.0,
                       double* d_c = nullptr) {
    std::vector<int> idx;
    for (size_t i = 0; i < region_mask.size(); ++i)
        if (region_mask[i]) idx.push_back(static_cast<int>(i));
    const int n = static_cast<int>(idx.size());
    if (n < 2) return 1.0;
    double mx = 0.0, my = 0.0;
    for (int i : idx) { mx += c_final[i]; my += pet_map[i]; }
    mx /= n; my /= n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (int i : idx) {
        const double dx = c_final[i] - mx, dy = pet_map[i] - my;
        cov += dx * dy; vx += dx * dx; vy += dy * dy;
    }
    if (vx < 1e-12 || vy < 1e-12) return 1.0;
    const double sx = std::sqrt(vx), sy = std::sqrt(vy);
    const double r = cov / (sx * sy);
    if (gscale != 0.0 && d_c) {
        // d(1-r)/dc_i = -[(y_i - my)/(sx sy) - r (x_i - mx)/vx]
        for (int i : idx) {
            const double dr = (pet_map[i] - my) / (sx * sy) - r * (c_final[i] - mx) / vx;
            d_c[i] -= gscale * dr;
        }
    }
    return 1.0 - r;
}

// Squared mismatch of the rendered tissue fractions against the observed maps
// outside the tumor core. tissue_cells is the projected [num_cells][3] field.
inline double tissue_loss_cells(const double* tissue_cells, const PatientCase& obs,
                                int num_cells, double gscale = 0.0,
                                double* d_tissue_cells = nullptr) {
    double loss = 0.0;
    for (int i = 0; i < num_cells; ++i) {
        if (obs.core_mask[i]) continue;
        for (int k = 0; k < 3; ++k) {
            const double diff = tissue_cells[i * 3 + k] - obs.tissue_obs[i * 3 + k];
            loss += diff * diff;
            if (gscale != 0.0 && d_tissue_cells)
                d_tissue_cells[i * 3 + k] += gscale * 2.0 * diff;
        }
    }
    return loss;
}

// Synthetic imaging function: thresholds the final tumor density into masks
// and emits a seeded noisy metabolic map restricted to core+edema.
inline PatientCase render_observations(const double* c_final, const double* tissue_cells,
                                       int num_cells, const ImagingParams& theta,
                                       unsigned long long pet_noise_seed,
                                       double pet_noise_sigma = 0.1) {
    if (!(theta.theta_down < theta.theta_up && theta.theta_up < theta.theta_necro))
        throw ThresholdOrder("imaging thresholds must satisfy theta_down < theta_up < theta_necro");
    PatientCase out;
    out.core_mask.assign(num_cells, 0);
    out.edema_mask.assign(num_cells, 0);
    out.pet_map.assign(num_cells, 0.0);
    out.tissue_obs.assign(tissue_cells, tissue_cells + static_cast<size_t>(num_cells) * 3);
    std::mt19937_64 rng(pet_noise_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < num_cells; ++i) {
        const double c = c_final[i];
        if (c >= theta.theta_up)
            out.core_mask[i] = 1;
        else if (c >= theta.theta_down)
            out.edema_mask[i] = 1;
        if (out.core_mask[i] || out.edema_mask[i]) {
            const double noise =
                pet_noise_sigma > 0.0 ? std::exp(pet_noise_sigma * gauss(rng)) : 1.0;
            out.pet_map[i] = c * noise;
        }
    }
    std::ostringstream prov;
    prov << "synthetic theta_down=" << theta.theta_down << " theta_up=" << theta.theta_up
         << " theta_necro=" << theta.theta_necro << " pet_seed=" << pet_noise_seed;
    out.provenance = prov.str();
    return out;
}

} // namespace tinv
