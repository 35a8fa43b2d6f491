#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "tinv/elasticity.hpp"
#include "tinv/growth.hpp"
#include "tinv/priors.hpp"
#include "tinv/projection.hpp"

using namespace tinv;

TEST_CASE("Neo-Hookean stress vanishes exactly at the identity") {
    for (int d : {2, 3}) {
        std::vector<double> F(d * d, 0.0), sigma(d * d, 1.0);
        for (int i = 0; i < d; ++i) F[i * d + i] = 1.0;
        neo_hookean_stress(F.data(), d, 1.7, 0.9, sigma.data());
        for (double s : sigma) CHECK(s == 0.0);
    }
}

TEST_CASE("Neo-Hookean stress closed forms") {
    // uniaxial stretch, shear term only: sigma = (mu/J)(F F^T - I)
    double F[4] = {2.0, 0.0, 0.0, 1.0};
    double sigma[4];
    neo_hookean_stress(F, 2, 0.0, 1.0, sigma);
    CHECK(sigma[0] == doctest::Approx(1.5).epsilon(1e-14));  // (4-1)/J, J=2
    CHECK(sigma[3] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(sigma[1] == doctest::Approx(0.0));
    // volumetric term only: sigma = lambda ln(J) I
    neo_hookean_stress(F, 2, 1.0, 0.0, sigma);
    CHECK(sigma[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(sigma[3] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    double Fbad[4] = {-1.0, 0.0, 0.0, 1.0};
    CHECK_THROWS_AS(neo_hookean_stress(Fbad, 2, 1.0, 1.0, sigma), NonPositiveJacobian);
}

TEST_CASE("Lame parameters from Young modulus and Poisson ratio") {
    // gray/white matter: E = 2100, nu = 0.4
    LamePair gm = lame_from_young_poisson(2100.0, 0.4);
    CHECK(gm.mu == doctest::Approx(750.0).epsilon(1e-12));
    CHECK(gm.lambda == doctest::Approx(3000.0).epsilon(1e-12));
    // CSF proxy: E = 100, nu = 0.1
    LamePair csf = lame_from_young_poisson(100.0, 0.1);
    CHECK(csf.mu == doctest::Approx(100.0 / 2.2).epsilon(1e-12));
    CHECK(csf.lambda == doctest::Approx(100.0 * 0.1 / (1.1 * 0.8)).epsilon(1e-12));
    // nondimensionalization divides by the reference modulus
    auto nd = nondimensional_lame(MaterialTable{}, 2100.0);
    CHECK(nd[static_cast<int>(Tissue::GM)].mu == doctest::Approx(750.0 / 2100.0));
    CHECK(nd[static_cast<int>(Tissue::GM)].lambda == doctest::Approx(3000.0 / 2100.0));
}

TEST_CASE("blending with a pure tissue recovers its table entry") {
    auto lame = lame_parameters(MaterialTable{});
    const double m_wm[3] = {1.0, 0.0, 0.0};
    LamePair b = blend_lame(lame, m_wm, 0.0);
    CHECK(b.mu == doctest::Approx(lame[static_cast<int>(Tissue::WM)].mu));
    CHECK(b.lambda == doctest::Approx(lame[static_cast<int>(Tissue::WM)].lambda));
    // equal tissue and tumor weight averages the two entries
    LamePair t = blend_lame(lame, m_wm, 1.0);
    CHECK(t.mu == doctest::Approx(0.5 * (lame[static_cast<int>(Tissue::WM)].mu +
                                         lame[static_cast<int>(Tissue::Tumor)].mu)));
    // degenerate weights fall back to the CSF entry
    const double none[3] = {0.0, 0.0, 0.0};
    CHECK(blend_lame(lame, none, 0.0).mu ==
          doctest::Approx(lame[static_cast<int>(Tissue::CSF)].mu));
}

TEST_CASE("elasticity residual is zero on the undeformed mesh with constant c") {
    for (int d : {2, 3}) {
        GridSpec spec{d, {4, 4, d == 3 ? 4 : 0}, 1};
        ParticleMesh mesh = make_uniform_mesh(spec);
        const int nc = spec.num_cells();
        const int nn = spec.num_nodes();
        std::vector<double> c(nc, 0.3);
        std::vector<double> intensities(static_cast<size_t>(nn) * 3);
        for (int j = 0; j < nn; ++j) {
            intensities[j * 3 + 0] = 0.5;
            intensities[j * 3 + 1] = 0.3;
            intensities[j * 3 + 2] = 0.2;
        }
        auto lame = nondimensional_lame(MaterialTable{}, 2100.0);
        ElasticityWorkspace ws;
        std::vector<double> resid;
        auto res = elasticity_slice(spec, mesh.slice(0), mesh.slice(0), c.data(),
                                    intensities.data(), lame, 0.7, PhysicsConfig{}, 0, ws, 0.0,
                                    nullptr, nullptr, nullptr, nullptr, &resid);
        CHECK(res.loss <= 1e-12);
        CHECK(res.barrier == 0.0);
        for (double r : resid) CHECK(std::abs(r) <= 1e-12);
    }
}

TEST_CASE("reaction operator closed form") {
    GridSpec spec{2, {4, 4, 0}, 1};
    ParticleMesh mesh = make_uniform_mesh(spec);
    CellGeometry geom = cell_geometry(spec, mesh.slice(0));
    std::vector<double> c(16, 0.5), out(16);
    reaction_operator(c.data(), 16, 0.2, geom, out.data());
    // |cell| = 1/16: (1/16) * 0.2 * 0.5 * 0.5 = 0.003125
    for (double v : out) CHECK(v == doctest::Approx(0.003125).epsilon(1e-14));
}

TEST_CASE("effective diffusivity blends tissue fractions with a cutoff") {
    double tissue[6] = {0.6, 0.3, 0.1,    // diffusive cell
                        0.02, 0.05, 0.93};  // mostly CSF -> off
    double out[2];
    effective_diffusivity(tissue, 2, 2.0, 10.0, 0.1, out);
    CHECK(out[0] == doctest::Approx(2.0 * (10.0 * 0.6 + 0.3)).epsilon(1e-14));
    CHECK(out[1] == 0.0);
    CHECK(harmonic_mean(2.0, 6.0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(harmonic_mean(0.0, 5.0) == 0.0);
}

TEST_CASE("tumor residual vanishes for a constant trajectory with growth off") {
    GridSpec spec{2, {4, 4, 0}, 3};
    ParticleMesh mesh = make_uniform_mesh(spec);
    TumorField tumor;
    tumor.num_cells = spec.num_cells();
    tumor.values.assign(static_cast<size_t>(spec.nt + 1) * tumor.num_cells, 0.37);
    TissueField tissue;
    tissue.num_particles = spec.num_nodes();
    tissue.intensities.assign(static_cast<size_t>(spec.num_nodes()) * 3, 1.0 / 3.0);
    DynamicsParams params{0.0, 1.0, 0.0, 0.0};
    CHECK(tumor_residual(spec, tumor, mesh, tissue, params, PhysicsConfig{}) <= 1e-16);
}

TEST_CASE("symmetry loss: zero on mirror-symmetric fields, positive after a poke") {
    GridSpec spec{2, {8, 8, 0}, 1};
    const int nc = spec.num_cells();
    std::vector<double> cells(static_cast<size_t>(nc) * 3, 0.0);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < nc; ++i) {
        auto ci = spec.cell_multi(i);
        auto mi = ci;
        mi[0] = spec.shape[0] - 1 - ci[0];
        const int m = spec.cell_index(mi);
        if (m < i) {
            for (int k = 0; k < 3; ++k) cells[i * 3 + k] = cells[m * 3 + k];
        } else {
            for (int k = 0; k < 3; ++k) cells[i * 3 + k] = u(rng);
        }
    }
    // zero up to the summation-order roundoff of the pooled scales
    CHECK(symmetry_loss_cells(spec, cells.data(), 0) <= 1e-12);
    cells[3 * 3 + 1] += 0.01;  // single-cell asymmetric perturbation
    CHECK(symmetry_loss_cells(spec, cells.data(), 0) > 1e-6);
}

TEST_CASE("Gaussian seed loss is zero when c0 equals the target profile") {
    GridSpec spec{2, {6, 6, 0}, 1};
    ParticleMesh mesh = make_uniform_mesh(spec);
    CellGeometry geom = cell_geometry(spec, mesh.slice(0));
    const double x0[3] = {0.45, 0.55, 0.0};
    std::vector<double> c0(spec.num_cells());
    for (int i = 0; i < spec.num_cells(); ++i) {
        double dist2 = 0.0;
        for (int a = 0; a < 2; ++a) {
            const double dx = geom.centroids[i * 2 + a] - x0[a];
            dist2 += dx * dx;
        }
        c0[i] = kGaussAmplitude * std::exp(-dist2 / kGaussWidth);
    }
    CHECK(gaussian_seed_loss(spec, c0.data(), mesh.slice(0), x0) <= 1e-28);
    c0[0] += 0.1;
    CHECK(gaussian_seed_loss(spec, c0.data(), mesh.slice(0), x0) ==
          doctest::Approx(0.01).epsilon(1e-12));
}
