#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "tinv/grid.hpp"

namespace tinv {

inline double rmse(const std::vector<double>& c_pred, const std::vector<double>& c_true) {
    if (c_pred.size() != c_true.size() || c_pred.empty())
        throw ShapeMismatch("rmse: field shapes differ");
    double acc = 0.0;
    for (size_t i = 0; i < c_pred.size(); ++i) {
        const double diff = c_pred[i] - c_true[i];
        acc += diff * diff;
    }
    return 100.0 * std::sqrt(acc / c_pred.size());
}

namespace detail {

// Felzenszwalb-Huttenlocher exact 1D squared-distance transform.
inline void edt_1d(const std::vector<double>& f, double spacing, std::vector<double>& out) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    const double h2 = spacing * spacing;
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[q] + h2 * q * q) - (f[p] + h2 * p * p)) / (2.0 * h2 * (q - p));
            if (s > z[k]) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = spacing * (q - v[k]);
        out[q] = dq * dq + f[v[k]];
    }
}

} // namespace detail

// Exact Euclidean distance (domain units) from the set of true cells, on the
// reference grid.
inline std::vector<double> distance_transform(const GridSpec& spec,
                                              const std::vector<unsigned char>& mask) {
    const int nc = spec.num_cells();
    const double inf = 1e18;
    std::vector<double> dist2(nc);
    for (int i = 0; i < nc; ++i) dist2[i] = mask[i] ? 0.0 : inf;
    // separable pass per axis
    for (int a = spec.ndim - 1; a >= 0; --a) {
        const int len = spec.shape[a];
        const int stride = spec.cell_stride(a);
        const int nlines = nc / len;
        std::vector<double> line(len), out(len);
        for (int l = 0; l < nlines; ++l) {
            // start index of this line: enumerate cells with idx[a] == 0
            const int outer = l / stride;
            const int inner = l % stride;
            const int base = outer * stride * len + inner;
            for (int q = 0; q < len; ++q) line[q] = dist2[base + q * stride];
            detail::edt_1d(line, spec.spacing(a), out);
            for (int q = 0; q < len; ++q) dist2[base + q * stride] = out[q];
        }
    }
    for (double& v : dist2) v = std::sqrt(v);
    return dist2;
}

inline std::vector<unsigned char> diffusive_mask_from_tissue(const std::vector<double>& tissue_obs,
                                                             int num_cells,
                                                             double threshold = 0.1) {
    std::vector<unsigned char> mask(num_cells, 0);
    for (int i = 0; i < num_cells; ++i)
        mask[i] = (tissue_obs[i * 3 + 0] + tissue_obs[i * 3 + 1]) >= threshold ? 1 : 0;
    return mask;
}

struct PlanResult {
    std::vector<unsigned char> mask;
    int volume_cells = 0;
    double threshold = 0.0;  // equal-volume plans only
};

// 1.5 cm margin at the default 192 mm domain scale.
inline constexpr double kStandardMargin = 15.0 / 192.0;

// Core dilated by a Euclidean margin restricted to diffusive tissue, always
// including the core itself.
inline PlanResult standard_plan(const GridSpec& spec, const std::vector<unsigned char>& core_mask,
                                const std::vector<unsigned char>& diffusive_mask,
                                double margin = kStandardMargin) {
    const int nc = spec.num_cells();
    if (std::find(core_mask.begin(), core_mask.end(), 1) == core_mask.end())
        throw EmptyCore("standard_plan: empty core mask");
    std::vector<double> dist = distance_transform(spec, core_mask);
    PlanResult plan;
    plan.mask.assign(nc, 0);
    for (int i = 0; i < nc; ++i) {
        plan.mask[i] = core_mask[i] || (dist[i] <= margin && diffusive_mask[i]);
        plan.volume_cells += plan.mask[i];
    }
    return plan;
}

// Top-k cells of the predicted density within the admissible region, with
// deterministic (c descending, then cell index) ordering; the threshold is the
// density of the last selected cell (+inf sentinel for an empty plan).
inline PlanResult equal_volume_plan(const std::vector<double>& c_pred, int target_volume_cells,
                                    const std::vector<unsigned char>& admissible_mask) {
    const int nc = static_cast<int>(c_pred.size());
    PlanResult plan;
    plan.mask.assign(nc, 0);
    plan.threshold = std::numeric_limits<double>::infinity();
    if (target_volume_cells == 0) return plan;
    std::vector<int> idx;
    for (int i = 0; i < nc; ++i)
        if (admissible_mask[i]) idx.push_back(i);
    if (static_cast<int>(idx.size()) < target_volume_cells)
        throw UnreachableVolume("equal_volume_plan: admissible region smaller than target");
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (c_pred[a] != c_pred[b]) return c_pred[a] > c_pred[b];
        return a < b;
    });
    for (int k = 0; k < target_volume_cells; ++k) plan.mask[idx[k]] = 1;
    plan.volume_cells = target_volume_cells;
    plan.threshold = c_pred[idx[target_volume_cells - 1]];
    return plan;
}

inline double recurrence_coverage(const std::vector<unsigned char>& plan_mask,
                                  const std::vector<unsigned char>& recurrence_mask) {
    if (plan_mask.size() != recurrence_mask.size())
        throw ShapeMismatch("recurrence_coverage: mask shapes differ");
    int rec = 0, hit = 0;
    for (size_t i = 0; i < plan_mask.size(); ++i) {
        if (!recurrence_mask[i]) continue;
        ++rec;
        hit += plan_mask[i] ? 1 : 0;
    }
    if (rec == 0) throw EmptyRecurrence("recurrence_coverage: empty recurrence mask");
    return 100.0 * hit / rec;
}

struct CaseMetrics {
    double rmse_pct = 0.0;
    double coverage_model = 0.0;     // equal-volume plan from the fitted density
    double coverage_standard = 0.0;  // Standard Plan
    int plan_volume_cells = 0;
};

struct CohortSummary {
    double mean_rmse = 0.0, sem_rmse = 0.0;
    double mean_coverage_model = 0.0, sem_coverage_model = 0.0;
    double mean_coverage_standard = 0.0, sem_coverage_standard = 0.0;
    int greater = 0, equal = 0, less = 0;
    int n = 0;
};

inline void mean_sem(const std::vector<double>& v, double& mean, double& sem) {
    const int n = static_cast<int>(v.size());
    mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (n < 2) {
        sem = 0.0;
        return;
    }
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= (n - 1);
    sem = std::sqrt(var) / std::sqrt(static_cast<double>(n));
}

inline CohortSummary cohort_report(const std::vector<CaseMetrics>& cases) {
    if (cases.empty()) throw ConfigError("cohort_report: no cases");
    CohortSummary s;
    s.n = static_cast<int>(cases.size());
    std::vector<double> r, cm, cs;
    for (const auto& c : cases) {
        r.push_back(c.rmse_pct);
        cm.push_back(c.coverage_model);
        cs.push_back(c.coverage_standard);
        const double diff = c.coverage_model - c.coverage_standard;
        if (diff > 1e-12)
            ++s.greater;
        else if (diff < -1e-12)
            ++s.less;
        else
            ++s.equal;
    }
    mean_sem(r, s.mean_rmse, s.sem_rmse);
    mean_sem(cm, s.mean_coverage_model, s.sem_coverage_model);
    mean_sem(cs, s.mean_coverage_standard, s.sem_coverage_standard);
    return s;
}

} // namespace tinv
