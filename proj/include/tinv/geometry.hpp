#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "tinv/grid.hpp"

namespace tinv {

// Per-cell geometry of one deformed time slice.
// face_areas[cell*ndim + a] is the area (edge length in 2D) of the +a face of
// the cell, i.e. the interface shared with the neighbor at +e_a.
struct CellGeometry {
    std::vector<double> volumes;
    std::vector<double> centroids;
    std::vector<double> face_areas;
};

namespace detail {

inline void cross3(const double* a, const double* b, double* out) {
    out[0] = a[1] * b[2] - a[2] * b[1];
    out[1] = a[2] * b[0] - a[0] * b[2];
    out[2] = a[0] * b[1] - a[1] * b[0];
}

inline double dot3(const double* a, const double* b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

// Outward-oriented quad faces of the hexahedron, as indices into the corner
// table corner = a*4 + b*2 + c for node (ix+a, iy+b, iz+c).
inline const int (*hex_faces())[4] {
    static const int faces[6][4] = {
        {0, 1, 3, 2},  // -x
        {4, 6, 7, 5},  // +x
        {0, 4, 5, 1},  // -y
        {2, 3, 7, 6},  // +y
        {0, 2, 6, 4},  // -z
        {1, 5, 7, 3},  // +z
    };
    return faces;
}

// Split a quad into two triangles by the diagonal through its minimal global
// node id; neighboring cells then triangulate shared faces identically.
inline void quad_triangles(const int quad[4], const int global_ids[4], int tris[2][3]) {
    int mi = 0;
    for (int k = 1; k < 4; ++k)
        if (global_ids[quad[k]] < global_ids[quad[mi]]) mi = k;
    if (mi == 0 || mi == 2) {
        tris[0][0] = quad[0]; tris[0][1] = quad[1]; tris[0][2] = quad[2];
        tris[1][0] = quad[0]; tris[1][1] = quad[2]; tris[1][2] = quad[3];
    } else {
        tris[0][0] = quad[1]; tris[0][1] = quad[2]; tris[0][2] = quad[3];
        tris[1][0] = quad[1]; tris[1][1] = quad[3]; tris[1][2] = quad[0];
    }
}

// Corner node linear indices of a cell; 2D order: (0,0),(1,0),(1,1),(0,1)
// (counter-clockwise), 3D order: a*4+b*2+c.
inline void cell_corners(const GridSpec& spec, const std::array<int, 3>& ci, int* corners) {
    if (spec.ndim == 2) {
        corners[0] = spec.node_index({ci[0], ci[1], 0});
        corners[1] = spec.node_index({ci[0] + 1, ci[1], 0});
        corners[2] = spec.node_index({ci[0] + 1, ci[1] + 1, 0});
        corners[3] = spec.node_index({ci[0], ci[1] + 1, 0});
    } else {
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int c = 0; c < 2; ++c)
                    corners[a * 4 + b * 2 + c] =
                        spec.node_index({ci[0] + a, ci[1] + b, ci[2] + c});
    }
}

} // namespace detail

inline CellGeometry cell_geometry(const GridSpec& spec, const double* pos, int timestep = 0,
                                  bool strict = true) {
    const int d = spec.ndim;
    const int nc = spec.num_cells();
    check_guard_band(pos, spec.num_nodes(), d, timestep);
    CellGeometry geom;
    geom.volumes.assign(nc, 0.0);
    geom.centroids.assign(static_cast<size_t>(nc) * d, 0.0);
    geom.face_areas.assign(static_cast<size_t>(nc) * d, 0.0);
    const int ncorner = 1 << d;
    int corners[8];
    for (int i = 0; i < nc; ++i) {
        auto ci = spec.cell_multi(i);
        detail::cell_corners(spec, ci, corners);
        for (int k = 0; k < ncorner; ++k)
            for (int a = 0; a < d; ++a)
                geom.centroids[i * d + a] += pos[corners[k] * d + a] / ncorner;
        if (d == 2) {
            double area = 0.0;
            for (int k = 0; k < 4; ++k) {
                const double* p = pos + corners[k] * 2;
                const double* q = pos + corners[(k + 1) % 4] * 2;
                area += p[0] * q[1] - q[0] * p[1];
            }
            geom.volumes[i] = 0.5 * area;
            // +x edge: corners 1-2; +y edge: corners 3-2
            const int edges[2][2] = {{1, 2}, {3, 2}};
            for (int a = 0; a < 2; ++a) {
                const double* p = pos + corners[edges[a][0]] * 2;
                const double* q = pos + corners[edges[a][1]] * 2;
                geom.face_areas[i * 2 + a] = std::hypot(p[0] - q[0], p[1] - q[1]);
            }
        } else {
            const auto faces = detail::hex_faces();
            double vol = 0.0;
            for (int f = 0; f < 6; ++f) {
                int tris[2][3];
                detail::quad_triangles(faces[f], corners, tris);
                for (int t = 0; t < 2; ++t) {
                    const double* a = pos + corners[tris[t][0]] * 3;
                    const double* b = pos + corners[tris[t][1]] * 3;
                    const double* c = pos + corners[tris[t][2]] * 3;
                    double bc[3];
                    detail::cross3(b, c, bc);
                    vol += detail::dot3(a, bc) / 6.0;
                }
            }
            geom.volumes[i] = vol;
            // +axis faces: +x face 1, +y face 3, +z face 5 in hex_faces order
            const int plus_face[3] = {1, 3, 5};
            for (int a = 0; a < 3; ++a) {
                const int* q = faces[plus_face[a]];
                double d1[3], d2[3], u[3];
                for (int k = 0; k < 3; ++k) {
                    d1[k] = pos[corners[q[2]] * 3 + k] - pos[corners[q[0]] * 3 + k];
                    d2[k] = pos[corners[q[3]] * 3 + k] - pos[corners[q[1]] * 3 + k];
                }
                detail::cross3(d1, d2, u);
                geom.face_areas[i * 3 + a] = 0.5 * std::sqrt(detail::dot3(u, u));
            }
        }
        if (strict && !(geom.volumes[i] > 0.0)) throw NonPositiveVolume(i, timestep);
    }
    return geom;
}

// Accumulates d(loss)/d(positions) given cotangents for volumes, centroids and
// face areas (any pointer may be null).
inline void cell_geometry_backward(const GridSpec& spec, const double* pos,
                                   const double* d_volumes, const double* d_centroids,
                                   const double* d_face_areas, double* d_pos) {
    const int d = spec.ndim;
    const int nc = spec.num_cells();
    const int ncorner = 1 << d;
    int corners[8];
    for (int i = 0; i < nc; ++i) {
        auto ci = spec.cell_multi(i);
        detail::cell_corners(spec, ci, corners);
        if (d_centroids) {
            for (int k = 0; k < ncorner; ++k)
                for (int a = 0; a < d; ++a)
                    d_pos[corners[k] * d + a] += d_centroids[i * d + a] / ncorner;
        }
        if (d == 2) {
            if (d_volumes && d_volumes[i] != 0.0) {
                const double g = 0.5 * d_volumes[i];
                for (int k = 0; k < 4; ++k) {
                    const double* prev = pos + corners[(k + 3) % 4] * 2;
                    const double* next = pos + corners[(k + 1) % 4] * 2;
                    d_pos[corners[k] * 2 + 0] += g * (next[1] - prev[1]);
                    d_pos[corners[k] * 2 + 1] += g * (prev[0] - next[0]);
                }
            }
            if (d_face_areas) {
                const int edges[2][2] = {{1, 2}, {3, 2}};
                for (int a = 0; a < 2; ++a) {
                    const double g = d_face_areas[i * 2 + a];
                    if (g == 0.0) continue;
                    const int ip = corners[edges[a][0]], iq = corners[edges[a][1]];
                    const double dx = pos[ip * 2] - pos[iq * 2];
                    const double dy = pos[ip * 2 + 1] - pos[iq * 2 + 1];
                    const double len = std::hypot(dx, dy);
                    if (len <= 0.0) continue;
                    d_pos[ip * 2 + 0] += g * dx / len;
                    d_pos[ip * 2 + 1] += g * dy / len;
                    d_pos[iq * 2 + 0] -= g * dx / len;
                    d_pos[iq * 2 + 1] -= g * dy / len;
                }
            }
        } else {
            const auto faces = detail::hex_faces();
            if (d_volumes && d_volumes[i] != 0.0) {
                const double g = d_volumes[i] / 6.0;
                for (int f = 0; f < 6; ++f) {
                    int tris[2][3];
                    detail::quad_triangles(faces[f], corners, tris);
                    for (int t = 0; t < 2; ++t) {
                        const double* a = pos + corners[tris[t][0]] * 3;
                        const double* b = pos + corners[tris[t][1]] * 3;
                        const double* c = pos + corners[tris[t][2]] * 3;
                        double bc[3], ca[3], ab[3];
                        detail::cross3(b, c, bc);
                        detail::cross3(c, a, ca);
                        detail::cross3(a, b, ab);
                        for (int k = 0; k < 3; ++k) {
                            d_pos[corners[tris[t][0]] * 3 + k] += g * bc[k];
                            d_pos[corners[tris[t][1]] * 3 + k] += g * ca[k];
                            d_pos[corners[tris[t][2]] * 3 + k] += g * ab[k];
                        }
                    }
                }
            }
            if (d_face_areas) {
                const int plus_face[3] = {1, 3, 5};
                for (int a = 0; a < 3; ++a) {
                    const double g = d_face_areas[i * 3 + a];
                    if (g == 0.0) continue;
                    const int* q = faces[plus_face[a]];
                    double d1[3], d2[3], u[3];
                    for (int k = 0; k < 3; ++k) {
                        d1[k] = pos[corners[q[2]] * 3 + k] - pos[corners[q[0]] * 3 + k];
                        d2[k] = pos[corners[q[3]] * 3 + k] - pos[corners[q[1]] * 3 + k];
                    }
                    detail::cross3(d1, d2, u);
                    const double norm = std::sqrt(detail::dot3(u, u));
                    if (norm <= 0.0) continue;
                    double uh[3] = {u[0] / norm, u[1] / norm, u[2] / norm};
                    double gd1[3], gd2[3];
                    detail::cross3(d2, uh, gd1);  // dA/dd1 = (d2 x u_hat)/2
                    detail::cross3(uh, d1, gd2);  // dA/dd2 = (u_hat x d1)/2
                    for (int k = 0; k < 3; ++k) {
                        d_pos[corners[q[2]] * 3 + k] += g * 0.5 * gd1[k];
                        d_pos[corners[q[0]] * 3 + k] -= g * 0.5 * gd1[k];
                        d_pos[corners[q[3]] * 3 + k] += g * 0.5 * gd2[k];
                        d_pos[corners[q[1]] * 3 + k] -= g * 0.5 * gd2[k];
                    }
                }
            }
        }
    }
}

} // namespace tinv
