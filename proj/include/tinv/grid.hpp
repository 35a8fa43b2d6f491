#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "tinv/errors.hpp"

namespace tinv {

// Physical interpretation of the unit cube: mm-denominated quantities are
// mapped through this domain extent, and rate constants (diffusivity in
// mm^2/day, proliferation in 1/day) through the growth horizon in days, so
// that the rescaled problem lives on [0,1]^d x (0,1].
inline constexpr double kMmPerDomain = 192.0;
inline constexpr double kGrowthHorizonDays = 100.0;

inline double diffusivity_to_domain(double d_mm2_per_day,
                                    double mm_per_domain = kMmPerDomain,
                                    double horizon_days = kGrowthHorizonDays) {
    return d_mm2_per_day * horizon_days / (mm_per_domain * mm_per_domain);
}
inline double rate_to_domain(double rho_per_day, double horizon_days = kGrowthHorizonDays) {
    return rho_per_day * horizon_days;
}

// Eulerian reference grid over the unit cube [0,1]^ndim.
// Cells and nodes are indexed row-major with the last axis fastest.
struct GridSpec {
    int ndim = 2;
    std::array<int, 3> shape{};  // cells per axis; axes >= ndim unused
    int nt = 1;

    double dt() const { return 1.0 / nt; }
    double spacing(int a) const { return 1.0 / shape[a]; }

    int num_cells() const {
        int n = 1;
        for (int a = 0; a < ndim; ++a) n *= shape[a];
        return n;
    }
    int num_nodes() const {
        int n = 1;
        for (int a = 0; a < ndim; ++a) n *= shape[a] + 1;
        return n;
    }

    int cell_index(const std::array<int, 3>& idx) const {
        int lin = 0;
        for (int a = 0; a < ndim; ++a) lin = lin * shape[a] + idx[a];
        return lin;
    }
    std::array<int, 3> cell_multi(int lin) const {
        std::array<int, 3> idx{};
        for (int a = ndim - 1; a >= 0; --a) {
            idx[a] = lin % shape[a];
            lin /= shape[a];
        }
        return idx;
    }
    int node_index(const std::array<int, 3>& idx) const {
        int lin = 0;
        for (int a = 0; a < ndim; ++a) lin = lin * (shape[a] + 1) + idx[a];
        return lin;
    }
    std::array<int, 3> node_multi(int lin) const {
        std::array<int, 3> idx{};
        for (int a = ndim - 1; a >= 0; --a) {
            idx[a] = lin % (shape[a] + 1);
            lin /= (shape[a] + 1);
        }
        return idx;
    }
    // stride of axis a in the node linear index
    int node_stride(int a) const {
        int s = 1;
        for (int b = a + 1; b < ndim; ++b) s *= shape[b] + 1;
        return s;
    }
    int cell_stride(int a) const {
        int s = 1;
        for (int b = a + 1; b < ndim; ++b) s *= shape[b];
        return s;
    }

    bool node_on_boundary(const std::array<int, 3>& idx) const {
        for (int a = 0; a < ndim; ++a)
            if (idx[a] == 0 || idx[a] == shape[a]) return true;
        return false;
    }

    void validate() const {
        if (ndim != 2 && ndim != 3) throw ConfigError("ndim must be 2 or 3");
        if (nt < 1) throw ConfigError("nt must be >= 1");
        for (int a = 0; a < ndim; ++a)
            if (shape[a] < 4) throw ConfigError("grid shape must be >= 4 per axis");
    }
};

// Node/particle positions for every time slice, [nt+1][num_nodes][ndim] flattened.
struct ParticleMesh {
    std::vector<double> positions;
    int num_nodes = 0;
    int ndim = 0;
    int nt = 0;

    double* slice(int n) { return positions.data() + static_cast<size_t>(n) * num_nodes * ndim; }
    const double* slice(int n) const {
        return positions.data() + static_cast<size_t>(n) * num_nodes * ndim;
    }
};

inline ParticleMesh make_uniform_mesh(const GridSpec& spec) {
    spec.validate();
    ParticleMesh mesh;
    mesh.num_nodes = spec.num_nodes();
    mesh.ndim = spec.ndim;
    mesh.nt = spec.nt;
    mesh.positions.resize(static_cast<size_t>(spec.nt + 1) * mesh.num_nodes * spec.ndim);
    for (int n = 0; n <= spec.nt; ++n) {
        double* p = mesh.slice(n);
        for (int j = 0; j < mesh.num_nodes; ++j) {
            auto idx = spec.node_multi(j);
            for (int a = 0; a < spec.ndim; ++a)
                p[j * spec.ndim + a] = idx[a] * spec.spacing(a);
        }
    }
    return mesh;
}

inline void check_guard_band(const double* pos, int count, int ndim, int timestep) {
    for (int i = 0; i < count * ndim; ++i)
        if (!(pos[i] >= -0.25 && pos[i] <= 1.25))
            throw GuardBandViolation("particle position outside guard band at timestep " +
                                     std::to_string(timestep));
}

// Learnable cell densities c^n_i, [nt+1][num_cells].
struct TumorField {
    std::vector<double> values;
    int num_cells = 0;
    double* slice(int n) { return values.data() + static_cast<size_t>(n) * num_cells; }
    const double* slice(int n) const {
        return values.data() + static_cast<size_t>(n) * num_cells;
    }
};

// Fixed (m_WM, m_GM, m_CSF) carried by particles, [num_particles][3].
struct TissueField {
    std::vector<double> intensities;
    int num_particles = 0;
};

struct DynamicsParams {
    double d_gm = 0.0;   // gray-matter diffusivity
    double ratio = 1.0;  // D_wm = ratio * d_gm
    double rho = 0.0;    // proliferation rate
    double gamma = 0.0;  // tumor-tissue coupling
};

struct InitialParams {
    std::array<double, 3> x0{};
};

struct ImagingParams {
    double theta_up = 0.5;
    double theta_down = 0.25;
    double theta_necro = 0.75;
};

// Observation bundle on the Eulerian cell grid.
struct PatientCase {
    std::vector<double> tissue_obs;     // [num_cells][3]
    std::vector<unsigned char> core_mask;
    std::vector<unsigned char> edema_mask;
    std::vector<double> pet_map;
    std::string provenance;
};

enum class Tissue : int { GM = 0, WM = 1, CSF = 2, Tumor = 3 };

struct MaterialTable {
    // indexed by Tissue
    std::array<double, 4> young_modulus{2100.0, 2100.0, 100.0, 8000.0};
    std::array<double, 4> poisson_ratio{0.4, 0.4, 0.1, 0.45};
};

struct LamePair {
    double lambda = 0.0;
    double mu = 0.0;
};

inline LamePair lame_from_young_poisson(double E, double nu) {
    if (!(nu > 0.0 && nu < 0.5) && nu != 0.0)
        throw InvalidPoisson("Poisson ratio must be in [0, 0.5)");
    LamePair lp;
    lp.mu = E / (2.0 * (1.0 + nu));
    lp.lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    return lp;
}

inline std::array<LamePair, 4> lame_parameters(const MaterialTable& table) {
    std::array<LamePair, 4> out;
    for (int k = 0; k < 4; ++k)
        out[k] = lame_from_young_poisson(table.young_modulus[k], table.poisson_ratio[k]);
    return out;
}

// Convex blend of per-material Lame pairs with weights (m_WM, m_GM, m_CSF, c),
// where m = (m_WM, m_GM, m_CSF). Degenerate total weight falls back to CSF.
inline LamePair blend_lame(const std::array<LamePair, 4>& lame, const double m[3], double c) {
    const double total = m[0] + m[1] + m[2] + c;
    if (total < 1e-8) return lame[static_cast<int>(Tissue::CSF)];
    const LamePair& wm = lame[static_cast<int>(Tissue::WM)];
    const LamePair& gm = lame[static_cast<int>(Tissue::GM)];
    const LamePair& csf = lame[static_cast<int>(Tissue::CSF)];
    const LamePair& tum = lame[static_cast<int>(Tissue::Tumor)];
    LamePair out;
    out.lambda = (m[0] * wm.lambda + m[1] * gm.lambda + m[2] * csf.lambda + c * tum.lambda) / total;
    out.mu = (m[0] * wm.mu + m[1] * gm.mu + m[2] * csf.mu + c * tum.mu) / total;
    return out;
}

} // namespace tinv
