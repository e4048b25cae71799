#pragma once

// JSON experiment configs shared by the command-line driver and the
// acceptance determinism check. Field errors always name the offending field.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpm/bpm.hpp"

namespace bpm {

using nlohmann::json;

struct ValidationError : std::runtime_error {
    std::string field;
    ValidationError(std::string f, const std::string& msg)
        : std::runtime_error("field '" + f + "': " + msg), field(std::move(f)) {}
};

namespace cfgdetail {

inline const json& require(const json& j, const std::string& parent, const std::string& key) {
    if (!j.is_object()) throw ValidationError(parent.empty() ? key : parent, "expected an object");
    auto it = j.find(key);
    if (it == j.end())
        throw ValidationError(parent.empty() ? key : parent + "." + key, "missing required field");
    return *it;
}

inline std::string path_join(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

inline double require_number(const json& j, const std::string& parent, const std::string& key) {
    const json& v = require(j, parent, key);
    if (!v.is_number()) throw ValidationError(path_join(parent, key), "expected a number");
    return v.get<double>();
}

inline std::uint64_t require_uint(const json& j, const std::string& parent, const std::string& key) {
    const json& v = require(j, parent, key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ValidationError(path_join(parent, key), "expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

inline std::string require_string(const json& j, const std::string& parent, const std::string& key) {
    const json& v = require(j, parent, key);
    if (!v.is_string()) throw ValidationError(path_join(parent, key), "expected a string");
    return v.get<std::string>();
}

inline double number_or(const json& j, const std::string& key, double fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return j.at(key).get<double>();
}

}  // namespace cfgdetail

inline SyntheticParams parse_synthetic_params(const json& j, const std::string& path) {
    using namespace cfgdetail;
    SyntheticParams sp;
    std::string family = require_string(j, path, "family");
    if (family == "linear") sp.family = SyntheticFamily::MonotoneLinear;
    else if (family == "sqrt") sp.family = SyntheticFamily::ConcaveSqrt;
    else if (family == "logistic") sp.family = SyntheticFamily::LogisticPrice;
    else throw ValidationError(path + ".family", "expected one of linear, sqrt, logistic");
    sp.a = number_or(j, "a", sp.a);
    sp.b = number_or(j, "b", sp.b);
    sp.k = number_or(j, "k", sp.k);
    sp.p0 = number_or(j, "p0", sp.p0);
    if (j.contains("noise")) {
        std::string noise = j.at("noise").get<std::string>();
        if (noise == "bernoulli") sp.noise = NoiseModel::Bernoulli;
        else if (noise == "gaussian") sp.noise = NoiseModel::TruncatedGaussian;
        else throw ValidationError(path + ".noise", "expected bernoulli or gaussian");
    }
    sp.noise_sigma = number_or(j, "noise_sigma", sp.noise_sigma);
    try {
        sp.validate();
    } catch (const ParameterError& e) {
        throw ValidationError(path, e.what());
    }
    return sp;
}

inline std::unique_ptr<Environment> build_environment(const json& jenv, std::size_t n,
                                                      std::uint64_t T) {
    using namespace cfgdetail;
    std::string kind = require_string(jenv, "env", "kind");
    if (kind == "synthetic") {
        return std::make_unique<SyntheticEnvironment>(n, T, parse_synthetic_params(jenv, "env"));
    }
    if (kind == "lowerbound") {
        std::size_t K = static_cast<std::size_t>(require_uint(jenv, "env", "K"));
        std::optional<BumpWindow> bump;
        if (jenv.contains("bump")) {
            const json& jb = jenv.at("bump");
            bump = BumpWindow{require_number(jb, "env.bump", "c_star"),
                              require_number(jb, "env.bump", "p_star")};
        }
        try {
            return std::make_unique<LowerBoundEnvironment>(n, T, K, bump);
        } catch (const ParameterError& e) {
            throw ValidationError("env.bump", e.what());
        }
    }
    if (kind == "nonstationary") {
        const json& segs = require(jenv, "env", "segments");
        if (!segs.is_array() || segs.empty())
            throw ValidationError("env.segments", "expected a nonempty array");
        std::vector<ScheduleSegment> schedule;
        std::uint64_t total = 0;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            std::string path = "env.segments[" + std::to_string(i) + "]";
            ScheduleSegment seg;
            seg.length = require_uint(segs[i], path, "length");
            seg.params = parse_synthetic_params(segs[i], path);
            total += seg.length;
            schedule.push_back(seg);
        }
        if (total != T)
            throw ValidationError("env.segments", "segment lengths sum to " + std::to_string(total) +
                                                      " but T = " + std::to_string(T));
        return std::make_unique<NonstationaryEnvironment>(n, std::move(schedule));
    }
    throw ValidationError("env.kind", "expected one of synthetic, lowerbound, nonstationary");
}

inline std::string environment_label(const json& jenv) {
    std::string kind = jenv.value("kind", "?");
    if (kind == "synthetic") return jenv.value("family", "synthetic");
    if (kind == "lowerbound") return jenv.contains("bump") ? "lowerbound-bump" : "lowerbound";
    return kind;
}

inline PolicySpec parse_policy_spec(const json& j, std::size_t n) {
    using namespace cfgdetail;
    PolicySpec spec;
    std::string algo = require_string(j, "", "algo");
    if (algo == "monotonic") spec.kind = PolicyKind::Monotonic;
    else if (algo == "concave") spec.kind = PolicyKind::Concave;
    else if (algo == "joint-exp3") spec.kind = PolicyKind::JointExp3;
    else if (algo == "fixed") spec.kind = PolicyKind::Fixed;
    else if (algo == "uniform") spec.kind = PolicyKind::Uniform;
    else
        throw ValidationError("algo",
                              "expected one of monotonic, concave, joint-exp3, fixed, uniform");
    if (j.contains("params")) {
        const json& p = j.at("params");
        if (!p.is_object()) throw ValidationError("params", "expected an object");
        spec.K = static_cast<std::size_t>(p.value("K", 0u));
        spec.eta = number_or(p, "eta", 0.0);
        spec.gamma = number_or(p, "gamma", 0.0);
        spec.epsilon = number_or(p, "epsilon", 0.0);
        spec.delta = number_or(p, "delta", 0.0);
        spec.m = static_cast<std::size_t>(p.value("m", 256u));
        spec.constant = number_or(p, "constant", 1.0);
    }
    if (spec.kind == PolicyKind::Fixed) {
        const json& fa = require(j, "", "fixed_action");
        const json& costs = require(fa, "fixed_action", "costs");
        if (!costs.is_array() || costs.size() != n)
            throw ValidationError("fixed_action.costs", "expected an array of length n");
        for (const auto& c : costs) spec.fixed_action.costs.push_back(c.get<double>());
        spec.fixed_action.price = require_number(fa, "fixed_action", "price");
        try {
            spec.fixed_action.validate();
        } catch (const std::exception& e) {
            throw ValidationError("fixed_action", e.what());
        }
    }
    return spec;
}

inline VariantSpec parse_variant_spec(const json& j, std::size_t n, std::uint64_t T) {
    using namespace cfgdetail;
    VariantSpec v;
    if (!j.contains("variant")) return v;
    const json& jv = j.at("variant");
    std::string kind = require_string(jv, "variant", "kind");
    if (kind == "none") return v;
    if (kind == "subscription") {
        v.kind = VariantKind::Subscription;
        const json& betas = require(jv, "variant", "betas");
        if (!betas.is_array() || betas.size() != n)
            throw ValidationError("variant.betas", "expected an array of length n");
        for (const auto& b : betas) v.subscription.betas.push_back(b.get<double>());
        v.subscription.T = T;
        try {
            v.subscription.validate();
        } catch (const ParameterError& e) {
            throw ValidationError("variant.betas", e.what());
        }
        return v;
    }
    if (kind == "promo") {
        v.kind = VariantKind::Promo;
        if (jv.contains("r")) {
            const json& r = jv.at("r");
            if (!r.is_array() || r.size() != T)
                throw ValidationError("variant.r", "expected an array of T rows");
            for (const auto& row : r) {
                if (!row.is_array() || row.size() != n)
                    throw ValidationError("variant.r", "each row must have n entries");
                v.promo.r.push_back(row.get<std::vector<double>>());
            }
        } else {
            double rc = number_or(jv, "r_constant", 1.0);
            if (rc < 0.0 || rc > 1.0)
                throw ValidationError("variant.r_constant", "must lie in [0,1]");
            v.promo.r.assign(T, std::vector<double>(n, rc));
        }
        try {
            v.promo.validate();
        } catch (const ParameterError& e) {
            throw ValidationError("variant.r", e.what());
        }
        return v;
    }
    throw ValidationError("variant.kind", "expected one of none, subscription, promo");
}

inline std::vector<std::uint64_t> parse_seeds(const json& j) {
    using namespace cfgdetail;
    std::vector<std::uint64_t> seeds;
    const json& js = require(j, "", "seeds");
    if (js.is_array()) {
        for (const auto& s : js) seeds.push_back(s.get<std::uint64_t>());
    } else if (js.is_object()) {
        std::uint64_t start = js.value("start", 0u);
        std::uint64_t count = require_uint(js, "seeds", "count");
        for (std::uint64_t s = 0; s < count; ++s) seeds.push_back(start + s);
    } else {
        throw ValidationError("seeds", "expected an array or {start, count}");
    }
    if (seeds.empty()) throw ValidationError("seeds", "at least one seed required");
    return seeds;
}

struct RunConfig {
    std::size_t n = 0;
    std::uint64_t T = 0;
    PolicySpec policy;
    VariantSpec variant;
    std::vector<std::uint64_t> seeds;
    json env_json;
    std::string env_label;
    std::string algo_label;
    bool oracle_profit = false;
    std::size_t opt_resolution = 2001;
};

inline RunConfig parse_run_config(const json& j) {
    using namespace cfgdetail;
    RunConfig cfg;
    cfg.n = static_cast<std::size_t>(require_uint(j, "", "n"));
    if (cfg.n == 0) throw ValidationError("n", "must be >= 1");
    cfg.T = require_uint(j, "", "T");
    cfg.env_json = require(j, "", "env");
    cfg.env_label = environment_label(cfg.env_json);
    cfg.policy = parse_policy_spec(j, cfg.n);
    cfg.algo_label = policy_kind_name(cfg.policy.kind);
    cfg.variant = parse_variant_spec(j, cfg.n, cfg.T);
    cfg.seeds = parse_seeds(j);
    cfg.oracle_profit = j.value("oracle_profit", false);
    cfg.opt_resolution = static_cast<std::size_t>(j.value("opt_resolution", 2001u));
    // surface environment construction problems as validation failures
    build_environment(cfg.env_json, cfg.n, cfg.T);
    return cfg;
}

inline std::string config_hash(const json& j) {
    std::uint64_t h = fnv1a64(j.dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

struct RunOutput {
    std::vector<CsvRow> rows;
    double opt = 0.0;
    RegretEstimate estimate;
};

inline void fill_param_columns(CsvRow& row, const PolicySpec& spec, std::size_t n,
                               std::uint64_t T) {
    switch (spec.kind) {
        case PolicyKind::Monotonic:
        case PolicyKind::JointExp3: {
            MonotonicParams p = resolve_monotonic(spec, n, T);
            row.K = p.K;
            row.eta = p.eta;
            row.gamma = spec.kind == PolicyKind::Monotonic ? p.gamma : 0.0;
            break;
        }
        case PolicyKind::Concave: {
            ConcaveParams p = resolve_concave(spec, n, T);
            row.K = p.K;
            row.eta = p.eta;
            row.gamma = p.gamma;
            row.epsilon = p.epsilon;
            row.delta = p.delta;
            row.m = p.m;
            break;
        }
        case PolicyKind::Fixed:
        case PolicyKind::Uniform:
            break;
    }
}

inline double variant_opt(const Environment& env, const VariantSpec& variant,
                          std::size_t resolution) {
    switch (variant.kind) {
        case VariantKind::None: return estimate_opt(env, resolution);
        case VariantKind::Subscription:
            return subscription_estimate_opt(env, variant.subscription, resolution);
        case VariantKind::Promo: return promo_estimate_opt(env, variant.promo, resolution);
    }
    return 0.0;
}

inline RunOutput execute_run(const RunConfig& cfg, const std::string& run_id) {
    auto env = build_environment(cfg.env_json, cfg.n, cfg.T);
    RunOutput out;
    out.opt = variant_opt(*env, cfg.variant, cfg.opt_resolution);
    std::vector<double> profits = run_seeds(
        [&](std::uint64_t seed) {
            return run_episode(*env, cfg.policy, cfg.variant, seed, false, cfg.oracle_profit)
                .alg_profit;
        },
        cfg.seeds);
    if (profits.size() >= 2) out.estimate = regret_estimate(profits, out.opt);
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        CsvRow row;
        row.run_id = run_id;
        row.algo = cfg.algo_label;
        row.env = cfg.env_label;
        row.variant = variant_kind_name(cfg.variant.kind);
        row.n = cfg.n;
        row.T = cfg.T;
        fill_param_columns(row, cfg.policy, cfg.n, cfg.T);
        row.seed = cfg.seeds[i];
        row.alg_profit = profits[i];
        row.opt = out.opt;
        row.regret = out.opt - profits[i];
        out.rows.push_back(row);
    }
    return out;
}

inline std::string csv_text(const std::vector<CsvRow>& rows) {
    std::string text = csv_header();
    text += '\n';
    for (const auto& r : rows) {
        text += csv_format_row(r);
        text += '\n';
    }
    return text;
}

struct SweepConfig {
    RunConfig base;
    std::vector<std::uint64_t> T_list;
};

inline SweepConfig parse_sweep_config(const json& j) {
    using namespace cfgdetail;
    const json& tl = require(j, "", "T_list");
    if (!tl.is_array() || tl.empty()) throw ValidationError("T_list", "expected a nonempty array");
    SweepConfig sc;
    for (const auto& t : tl) sc.T_list.push_back(t.get<std::uint64_t>());
    json base = j;
    base.erase("T_list");
    base["T"] = sc.T_list.front();
    sc.base = parse_run_config(base);
    if (sc.base.env_json.value("kind", "") == "nonstationary")
        throw ValidationError("env.kind", "horizon sweeps need a stationary environment");
    return sc;
}

struct SweepOutput {
    std::vector<CsvRow> rows;
    std::vector<SweepPoint> points;
    std::optional<SlopeFit> fit;
};

inline SweepOutput execute_sweep(const SweepConfig& sc, const std::string& run_id) {
    SweepOutput out;
    for (std::uint64_t T : sc.T_list) {
        RunConfig cfg = sc.base;
        cfg.T = T;
        if (cfg.variant.kind == VariantKind::Subscription) cfg.variant.subscription.T = T;
        if (cfg.variant.kind == VariantKind::Promo)
            cfg.variant.promo.r.assign(T, cfg.variant.promo.r.empty()
                                              ? std::vector<double>(cfg.n, 1.0)
                                              : cfg.variant.promo.r.front());
        RunOutput ro = execute_run(cfg, run_id);
        out.rows.insert(out.rows.end(), ro.rows.begin(), ro.rows.end());
        SweepPoint pt;
        pt.T = T;
        pt.regret = ro.estimate.regret;
        pt.se = ro.estimate.se;
        pt.opt = ro.opt;
        pt.mean_profit = ro.estimate.mean_profit;
        out.points.push_back(pt);
    }
    if (out.points.size() >= 2) {
        try {
            out.fit = fit_slope(out.points);
        } catch (const ParameterError&) {
            out.fit.reset();  // everything noise-dominated; report points only
        }
    }
    return out;
}

}  // namespace bpm
