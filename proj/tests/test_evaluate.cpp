#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "tinv/evaluate.hpp"

using namespace tinv;

TEST_CASE("rmse closed forms and shape checking") {
    std::vector<double> a(50, 0.4), b(50, 0.5);
    CHECK(rmse(a, b) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(rmse(a, a) == 0.0);
    std::vector<double> c = {0.0, 0.0};
    std::vector<double> d = {0.3, 0.4};
    CHECK(rmse(c, d) == doctest::Approx(100.0 * std::sqrt(0.125)).epsilon(1e-12));
    CHECK_THROWS_AS(rmse(a, c), ShapeMismatch);
}

TEST_CASE("distance transform matches brute force on random masks") {
    GridSpec spec{2, {9, 7, 0}, 1};
    std::mt19937_64 rng(21);
    const int nc = spec.num_cells();
    std::vector<unsigned char> mask(nc, 0);
    for (int i = 0; i < nc; ++i) mask[i] = rng() % 5 == 0;
    mask[10] = 1;  // ensure nonempty
    auto dist = distance_transform(spec, mask);
    for (int i = 0; i < nc; ++i) {
        auto ci = spec.cell_multi(i);
        double best = 1e18;
        for (int j = 0; j < nc; ++j) {
            if (!mask[j]) continue;
            auto cj = spec.cell_multi(j);
            double d2 = 0.0;
            for (int a = 0; a < 2; ++a) {
                const double dd = (ci[a] - cj[a]) * spec.spacing(a);
                d2 += dd * dd;
            }
            best = std::min(best, d2);
        }
        CHECK(dist[i] == doctest::Approx(std::sqrt(best)).epsilon(1e-10));
    }
}

TEST_CASE("standard plan = core plus margin ring restricted to diffusive tissue") {
    GridSpec spec{2, {16, 16, 0}, 1};
    const int nc = spec.num_cells();
    std::vector<unsigned char> core(nc, 0), diffusive(nc, 1);
    core[spec.cell_index({8, 8, 0})] = 1;
    for (int i = 0; i < nc; ++i)
        if (spec.cell_multi(i)[0] < 2) diffusive[i] = 0;  // a non-diffusive stripe

    const double margin = 0.2;
    PlanResult plan = standard_plan(spec, core, diffusive, margin);
    auto dist = distance_transform(spec, core);
    int volume = 0;
    for (int i = 0; i < nc; ++i) {
        const bool expect = core[i] || (dist[i] <= margin && diffusive[i]);
        CHECK(static_cast<bool>(plan.mask[i]) == expect);
        volume += expect;
    }
    CHECK(plan.volume_cells == volume);

    // a larger margin produces a superset
    PlanResult bigger = standard_plan(spec, core, diffusive, margin * 1.5);
    for (int i = 0; i < nc; ++i)
        if (plan.mask[i]) CHECK(bigger.mask[i]);

    std::vector<unsigned char> empty(nc, 0);
    CHECK_THROWS_AS(standard_plan(spec, empty, diffusive, margin), EmptyCore);
}

TEST_CASE("equal-volume plan selects the densest admissible cells") {
    std::vector<double> c = {0.9, 0.2, 0.6, 0.6, 0.1, 0.8};
    std::vector<unsigned char> adm(6, 1);
    adm[5] = 0;  // densest-but-one cell is inadmissible
    PlanResult p = equal_volume_plan(c, 3, adm);
    CHECK(p.volume_cells == 3);
    CHECK(p.mask == std::vector<unsigned char>{1, 0, 1, 1, 0, 0});  // 0.9, then 0.6 tie by index
    CHECK(p.threshold == doctest::Approx(0.6));

    PlanResult none = equal_volume_plan(c, 0, adm);
    CHECK(none.volume_cells == 0);
    for (auto v : none.mask) CHECK(v == 0);

    CHECK_THROWS_AS(equal_volume_plan(c, 6, adm), UnreachableVolume);
}

TEST_CASE("recurrence coverage counting") {
    std::vector<unsigned char> rec = {1, 1, 1, 1, 0, 0};
    std::vector<unsigned char> all = {1, 1, 1, 1, 1, 1};
    std::vector<unsigned char> none = {0, 0, 0, 0, 1, 1};
    std::vector<unsigned char> part = {1, 1, 1, 0, 0, 0};
    CHECK(recurrence_coverage(all, rec) == 100.0);
    CHECK(recurrence_coverage(none, rec) == 0.0);
    CHECK(recurrence_coverage(part, rec) == doctest::Approx(75.0).epsilon(1e-14));
    std::vector<unsigned char> empty(6, 0);
    CHECK_THROWS_AS(recurrence_coverage(all, empty), EmptyRecurrence);
    CHECK_THROWS_AS(recurrence_coverage(rec, std::vector<unsigned char>(4, 1)), ShapeMismatch);
}

TEST_CASE("coverage is monotone under plan growth") {
    std::mt19937_64 rng(4);
    std::vector<unsigned char> rec(64, 0), plan(64, 0);
    for (auto& v : rec) v = rng() % 3 == 0;
    rec[0] = 1;
    double prev = recurrence_coverage(plan, rec);
    for (int i = 0; i < 64; ++i) {
        plan[i] = 1;
        const double cur = recurrence_coverage(plan, rec);
        CHECK(cur >= prev);
        prev = cur;
    }
    CHECK(prev == 100.0);
}

TEST_CASE("cohort report means, standard errors and tallies") {
    std::vector<CaseMetrics> cases(2);
    cases[0].rmse_pct = 4.0;
    cases[0].coverage_model = 60.0;
    cases[0].coverage_standard = 60.0;
    cases[1].rmse_pct = 6.0;
    cases[1].coverage_model = 80.0;
    cases[1].coverage_standard = 70.0;
    CohortSummary s = cohort_report(cases);
    CHECK(s.n == 2);
    CHECK(s.mean_rmse == doctest::Approx(5.0));
    CHECK(s.mean_coverage_model == doctest::Approx(70.0).epsilon(1e-14));
    CHECK(s.sem_coverage_model == doctest::Approx(10.0).epsilon(1e-14));
    CHECK(s.greater == 1);
    CHECK(s.equal == 1);
    CHECK(s.less == 0);

    CohortSummary one = cohort_report({cases[0]});
    CHECK(one.sem_rmse == 0.0);
    CHECK(one.equal == 1);
    CHECK_THROWS_AS(cohort_report({}), ConfigError);
}
