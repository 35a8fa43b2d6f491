#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "tinv/geometry.hpp"

using namespace tinv;

TEST_CASE("uniform 2D mesh has exact cell volumes, areas and centroids") {
    GridSpec spec{2, {5, 4, 0}, 1};
    ParticleMesh mesh = make_uniform_mesh(spec);
    CellGeometry g = cell_geometry(spec, mesh.slice(0));
    const double hx = spec.spacing(0), hy = spec.spacing(1);
    for (int i = 0; i < spec.num_cells(); ++i) {
        auto ci = spec.cell_multi(i);
        CHECK(g.volumes[i] == doctest::Approx(hx * hy).epsilon(1e-14));
        CHECK(g.face_areas[i * 2 + 0] == doctest::Approx(hy).epsilon(1e-14));
        CHECK(g.face_areas[i * 2 + 1] == doctest::Approx(hx).epsilon(1e-14));
        CHECK(g.centroids[i * 2 + 0] == doctest::Approx((ci[0] + 0.5) * hx).epsilon(1e-14));
        CHECK(g.centroids[i * 2 + 1] == doctest::Approx((ci[1] + 0.5) * hy).epsilon(1e-14));
    }
}

TEST_CASE("2D quad area matches an independent shoelace evaluation") {
    GridSpec spec{2, {4, 4, 0}, 1};
    ParticleMesh mesh = make_uniform_mesh(spec);
    std::vector<double> pos(mesh.positions.begin(),
                            mesh.positions.begin() + spec.num_nodes() * 2);
    // deform the four corners of cell (1,1) into an irregular quad
    const double q[4][2] = {{0.23, 0.27}, {0.52, 0.26}, {0.55, 0.49}, {0.26, 0.53}};
    const int ids[4] = {spec.node_index({1, 1, 0}), spec.node_index({2, 1, 0}),
                        spec.node_index({2, 2, 0}), spec.node_index({1, 2, 0})};
    for (int k = 0; k < 4; ++k) {
        pos[ids[k] * 2] = q[k][0];
        pos[ids[k] * 2 + 1] = q[k][1];
    }
    CellGeometry g = cell_geometry(spec, pos.data(), 0, /*strict=*/false);
    double shoelace = 0.0;
    for (int k = 0; k < 4; ++k) {
        const double* a = q[k];
        const double* b = q[(k + 1) % 4];
        shoelace += (a[0] + b[0]) * (b[1] - a[1]);  // trapezoid form, not the cross form
    }
    shoelace *= 0.5;
    const int cell = spec.cell_index({1, 1, 0});
    CHECK(g.volumes[cell] == doctest::Approx(shoelace).epsilon(1e-14));
    CHECK(g.face_areas[cell * 2 + 0] ==
          doctest::Approx(std::hypot(q[2][0] - q[1][0], q[2][1] - q[1][1])).epsilon(1e-14));
}

TEST_CASE("uniform 3D mesh has exact volumes and face areas") {
    GridSpec spec{3, {5, 4, 4}, 1};
    ParticleMesh mesh = make_uniform_mesh(spec);
    CellGeometry g = cell_geometry(spec, mesh.slice(0));
    const double h0 = spec.spacing(0), h1 = spec.spacing(1), h2 = spec.spacing(2);
    for (int i = 0; i < spec.num_cells(); ++i) {
        CHECK(g.volumes[i] == doctest::Approx(h0 * h1 * h2).epsilon(1e-13));
        CHECK(g.face_areas[i * 3 + 0] == doctest::Approx(h1 * h2).epsilon(1e-13));
        CHECK(g.face_areas[i * 3 + 1] == doctest::Approx(h0 * h2).epsilon(1e-13));
        CHECK(g.face_areas[i * 3 + 2] == doctest::Approx(h0 * h1).epsilon(1e-13));
    }
}

TEST_CASE("3D affine map scales every cell volume by det(A)") {
    GridSpec spec{3, {4, 4, 4}, 1};
    ParticleMesh mesh = make_uniform_mesh(spec);
    const double A[3][3] = {{1.05, 0.04, -0.02}, {0.03, 0.98, 0.05}, {-0.01, 0.02, 1.1}};
    const double b[3] = {0.01, -0.02, 0.015};
    const double detA = A[0][0] * (A[1][1] * A[2][2] - A[1][2] * A[2][1]) -
                        A[0][1] * (A[1][0] * A[2][2] - A[1][2] * A[2][0]) +
                        A[0][2] * (A[1][0] * A[2][1] - A[1][1] * A[2][0]);
    std::vector<double> pos(mesh.positions.begin(),
                            mesh.positions.begin() + spec.num_nodes() * 3);
    for (int j = 0; j < spec.num_nodes(); ++j) {
        double x[3] = {mesh.positions[j * 3], mesh.positions[j * 3 + 1],
                       mesh.positions[j * 3 + 2]};
        for (int a = 0; a < 3; ++a)
            pos[j * 3 + a] = A[a][0] * x[0] + A[a][1] * x[1] + A[a][2] * x[2] + b[a];
    }
    CellGeometry g = cell_geometry(spec, pos.data());
    const double h3 = spec.spacing(0) * spec.spacing(1) * spec.spacing(2);
    for (int i = 0; i < spec.num_cells(); ++i)
        CHECK(g.volumes[i] == doctest::Approx(detA * h3).epsilon(1e-12));
}

TEST_CASE("interior perturbations leave the 3D total volume at exactly 1") {
    GridSpec spec{3, {4, 4, 4}, 1};
    ParticleMesh mesh = make_uniform_mesh(spec);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    const double h = spec.spacing(0);
    std::vector<double> pos(mesh.positions.begin(),
                            mesh.positions.begin() + spec.num_nodes() * 3);
    for (int j = 0; j < spec.num_nodes(); ++j) {
        auto ni = spec.node_multi(j);
        bool interior = true;
        for (int a = 0; a < 3; ++a)
            if (ni[a] == 0 || ni[a] == spec.shape[a]) interior = false;
        if (!interior) continue;
        for (int a = 0; a < 3; ++a) pos[j * 3 + a] += u(rng) * h;
    }
    CellGeometry g = cell_geometry(spec, pos.data());
    double total = 0.0;
    for (double v : g.volumes) total += v;
    // interior faces are triangulated identically from both sides, so their
    // flux contributions telescope away
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("inverted cells raise NonPositiveVolume in strict mode only") {
    GridSpec spec{2, {4, 4, 0}, 1};
    ParticleMesh mesh = make_uniform_mesh(spec);
    std::vector<double> pos(mesh.positions.begin(),
                            mesh.positions.begin() + spec.num_nodes() * 2);
    // collapse an interior node past a cell edge
    const int center = spec.node_index({1, 1, 0});
    pos[center * 2 + 0] = -0.2;
    pos[center * 2 + 1] = -0.2;
    CHECK_THROWS_AS(cell_geometry(spec, pos.data(), 0, true), NonPositiveVolume);
    CHECK_NOTHROW(cell_geometry(spec, pos.data(), 0, false));
}

TEST_CASE("geometry backward matches finite differences") {
    for (int ndim : {2, 3}) {
        GridSpec spec{ndim, {4, 4, ndim == 3 ? 4 : 0}, 1};
        ParticleMesh mesh = make_uniform_mesh(spec);
        const int nn = spec.num_nodes();
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(-0.2, 0.2);
        std::vector<double> pos(mesh.positions.begin(),
                                mesh.positions.begin() + static_cast<size_t>(nn) * ndim);
        for (auto& p : pos) p += u(rng) * spec.spacing(0);

        const int nc = spec.num_cells();
        // scalar objective: weighted sums of volumes, centroids and areas
        std::vector<double> wv(nc), wc(static_cast<size_t>(nc) * ndim),
            wa(static_cast<size_t>(nc) * ndim);
        for (auto& w : wv) w = u(rng);
        for (auto& w : wc) w = u(rng);
        for (auto& w : wa) w = u(rng);
        auto objective = [&](const std::vector<double>& p) {
            CellGeometry g = cell_geometry(spec, p.data(), 0, false);
            double s = 0.0;
            for (int i = 0; i < nc; ++i) s += wv[i] * g.volumes[i];
            for (size_t i = 0; i < wc.size(); ++i) s += wc[i] * g.centroids[i];
            for (size_t i = 0; i < wa.size(); ++i) s += wa[i] * g.face_areas[i];
            return s;
        };
        std::vector<double> d_pos(pos.size(), 0.0);
        cell_geometry_backward(spec, pos.data(), wv.data(), wc.data(), wa.data(), d_pos.data());
        const double eps = 1e-6;
        for (int trial = 0; trial < 12; ++trial) {
            const size_t id = rng() % pos.size();
            auto p = pos;
            p[id] += eps;
            const double lp = objective(p);
            p[id] = pos[id] - eps;
            const double lm = objective(p);
            const double fd = (lp - lm) / (2 * eps);
            CHECK(d_pos[id] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}
