#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"

#include "tinv/forward.hpp"
#include "tinv/optimize.hpp"

namespace tinv {

struct RunConfig {
    GridSpec spec{2, {64, 64, 0}, 16};
    LossWeights weights;
    FitOptions fit;
    ParamBounds bounds;
    double mm_per_domain = kMmPerDomain;
    MaterialTable materials;
    PhysicsConfig phys;
    SimulateOptions sim;
    int focal_count = 1;

    ParamSampleRanges ranges() const {
        ParamSampleRanges r;
        r.d_w = bounds.d_w;
        r.rho = bounds.rho;
        r.ratio = bounds.ratio;
        r.gamma = bounds.gamma;
        r.theta_necro = bounds.theta_necro;
        r.theta_up = bounds.theta_up;
        r.theta_down = bounds.theta_down;
        r.center = Range{57.6 / mm_per_domain, 96.0 / mm_per_domain};
        r.multifocal_offset = 9.6 / mm_per_domain;
        r.mm_per_domain = mm_per_domain;
        // d_w/rho ranges arrive in domain units already; undo the conversion
        // that generate_case applies when sampling
        r.d_w = Range{r.d_w.lo * mm_per_domain * mm_per_domain / kGrowthHorizonDays,
                      r.d_w.hi * mm_per_domain * mm_per_domain / kGrowthHorizonDays};
        r.rho = Range{r.rho.lo / kGrowthHorizonDays, r.rho.hi / kGrowthHorizonDays};
        return r;
    }
    double standard_margin() const { return 15.0 / mm_per_domain; }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown config key '" + it.key() + "' in " + where);
}

inline Range parse_range(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError("bound '" + name + "' must be [lo, hi]");
    Range r{j[0].get<double>(), j[1].get<double>()};
    if (!(r.lo <= r.hi)) throw ConfigError("bound '" + name + "' has lo > hi");
    return r;
}

} // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
    RunConfig cfg;
    detail::reject_unknown(j, {"grid", "weights", "optimizer", "bounds", "mm_per_domain",
                               "materials", "physics", "simulate", "focal_count"},
                           "top level");
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        detail::reject_unknown(g, {"ndim", "shape", "nt"}, "grid");
        if (g.contains("ndim")) cfg.spec.ndim = g["ndim"].get<int>();
        if (g.contains("shape")) {
            auto s = g["shape"].get<std::vector<int>>();
            if (static_cast<int>(s.size()) != cfg.spec.ndim)
                throw ConfigError("grid.shape length must equal grid.ndim");
            cfg.spec.shape = {0, 0, 0};
            for (size_t a = 0; a < s.size(); ++a) cfg.spec.shape[a] = s[a];
        }
        if (g.contains("nt")) cfg.spec.nt = g["nt"].get<int>();
    }
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        detail::reject_unknown(w, {"alpha"}, "weights");
        if (w.contains("alpha")) {
            auto a = w["alpha"].get<std::vector<double>>();
            if (a.size() != 8) throw ConfigError("weights.alpha must have 8 entries");
            for (size_t k = 0; k < 8; ++k) {
                if (!(a[k] >= 0.0) || !std::isfinite(a[k]))
                    throw ConfigError("weights.alpha entries must be finite and >= 0");
                cfg.weights.alpha[k] = a[k];
            }
        }
    }
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        detail::reject_unknown(o, {"lr", "iters", "seed", "levels", "log_every", "param_lr_scale"},
                               "optimizer");
        if (o.contains("param_lr_scale")) {
            cfg.fit.param_lr_scale = o["param_lr_scale"].get<double>();
            if (!(cfg.fit.param_lr_scale > 0.0))
                throw ConfigError("optimizer.param_lr_scale must be > 0");
        }
        if (o.contains("lr")) cfg.fit.lr = o["lr"].get<double>();
        if (o.contains("iters")) cfg.fit.iters = o["iters"].get<int>();
        if (o.contains("seed")) cfg.fit.seed = o["seed"].get<unsigned long long>();
        if (o.contains("levels")) cfg.fit.levels = o["levels"].get<int>();
        if (o.contains("log_every")) cfg.fit.log_every = o["log_every"].get<int>();
        if (!(cfg.fit.lr > 0.0)) throw ConfigError("optimizer.lr must be > 0");
        if (cfg.fit.iters < 0) throw ConfigError("optimizer.iters must be >= 0");
        if (cfg.fit.levels < 1) throw ConfigError("optimizer.levels must be >= 1");
        if (cfg.fit.log_every < 1) throw ConfigError("optimizer.log_every must be >= 1");
    }
    if (j.contains("mm_per_domain")) {
        cfg.mm_per_domain = j["mm_per_domain"].get<double>();
        if (!(cfg.mm_per_domain > 0.0)) throw ConfigError("mm_per_domain must be > 0");
    }
    if (j.contains("bounds")) {
        // d_w in mm^2/day and rho in 1/day; converted here to domain units
        // (unit box, unit growth window) for the internal parameterization
        const auto& b = j["bounds"];
        detail::reject_unknown(
            b, {"d_w", "rho", "ratio", "gamma", "theta_up", "theta_down", "theta_necro"},
            "bounds");
        const double to_d = kGrowthHorizonDays / (cfg.mm_per_domain * cfg.mm_per_domain);
        const double to_r = kGrowthHorizonDays;
        if (b.contains("d_w")) {
            Range r = detail::parse_range(b["d_w"], "d_w");
            cfg.bounds.d_w = Range{r.lo * to_d, r.hi * to_d};
        }
        if (b.contains("rho")) {
            Range r = detail::parse_range(b["rho"], "rho");
            cfg.bounds.rho = Range{r.lo * to_r, r.hi * to_r};
        }
        if (b.contains("ratio")) cfg.bounds.ratio = detail::parse_range(b["ratio"], "ratio");
        if (b.contains("gamma")) cfg.bounds.gamma = detail::parse_range(b["gamma"], "gamma");
        if (b.contains("theta_up"))
            cfg.bounds.theta_up = detail::parse_range(b["theta_up"], "theta_up");
        if (b.contains("theta_down"))
            cfg.bounds.theta_down = detail::parse_range(b["theta_down"], "theta_down");
        if (b.contains("theta_necro"))
            cfg.bounds.theta_necro = detail::parse_range(b["theta_necro"], "theta_necro");
    }
    if (j.contains("materials")) {
        const auto& m = j["materials"];
        detail::reject_unknown(m, {"young_modulus", "poisson_ratio"}, "materials");
        if (m.contains("young_modulus")) {
            auto e = m["young_modulus"].get<std::vector<double>>();
            if (e.size() != 4) throw ConfigError("materials.young_modulus must have 4 entries");
            for (int k = 0; k < 4; ++k) cfg.materials.young_modulus[k] = e[k];
        }
        if (m.contains("poisson_ratio")) {
            auto p = m["poisson_ratio"].get<std::vector<double>>();
            if (p.size() != 4) throw ConfigError("materials.poisson_ratio must have 4 entries");
            for (int k = 0; k < 4; ++k) {
                if (!(p[k] >= 0.0 && p[k] < 0.5))
                    throw ConfigError("materials.poisson_ratio entries must be in [0, 0.5)");
                cfg.materials.poisson_ratio[k] = p[k];
            }
        }
    }
    if (j.contains("physics")) {
        const auto& p = j["physics"];
        detail::reject_unknown(p, {"eps_j", "ref_modulus", "diffusive_threshold"}, "physics");
        if (p.contains("eps_j")) cfg.phys.eps_j = p["eps_j"].get<double>();
        if (p.contains("ref_modulus")) cfg.phys.ref_modulus = p["ref_modulus"].get<double>();
        if (p.contains("diffusive_threshold"))
            cfg.phys.diffusive_threshold = p["diffusive_threshold"].get<double>();
        if (!(cfg.phys.eps_j > 0.0)) throw ConfigError("physics.eps_j must be > 0");
        if (!(cfg.phys.ref_modulus > 0.0)) throw ConfigError("physics.ref_modulus must be > 0");
    }
    if (j.contains("simulate")) {
        const auto& s = j["simulate"];
        detail::reject_unknown(s, {"steps", "t_end", "elast_tol", "elast_max_iters"},
                               "simulate");
        if (s.contains("steps")) cfg.sim.steps = s["steps"].get<int>();
        if (s.contains("t_end")) cfg.sim.t_end = s["t_end"].get<double>();
        if (s.contains("elast_tol")) cfg.sim.elast_tol = s["elast_tol"].get<double>();
        if (s.contains("elast_max_iters"))
            cfg.sim.elast_max_iters = s["elast_max_iters"].get<int>();
        if (cfg.sim.steps < 1) throw ConfigError("simulate.steps must be >= 1");
    }
    if (j.contains("focal_count")) {
        cfg.focal_count = j["focal_count"].get<int>();
        if (cfg.focal_count != 1 && cfg.focal_count != 3)
            throw ConfigError("focal_count must be 1 or 3");
    }
    cfg.spec.validate();
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return parse_config(j);
}

} // namespace tinv
