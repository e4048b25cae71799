// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned here and must not be loosened to make a
// criterion pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bpm/bpm.hpp"
#include "bpm/config.hpp"

using namespace bpm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Kernel correctness on random densities.

Outcome criterion_kernel() {
    Outcome out;
    CostGrid grid = make_cost_grid(0.05, 256);
    Rng rng(9001);
    double worst_integral = 0.0;
    for (double eps : {0.01, 0.001}) {
        KernelSpec spec{eps, 0.05};
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> u(grid.m);
            for (auto& v : u) v = std::exp(rng.gaussian(0.0, 1.5));
            if (trial % 2 == 1) {
                // carve out a dead zone so the support rule is non-trivial
                std::size_t start = rng.next_u64() % (grid.m - grid.m / 3);
                for (std::size_t k = start; k < start + grid.m / 3; ++k) u[k] = 0.0;
            }
            double mass = grid.integrate(u);
            for (auto& v : u) v /= mass;

            double mu = kernel_mean(grid, u);
            std::vector<double> q = apply_kernel(spec, grid, u);

            bool nonneg = true;
            for (double v : q) nonneg = nonneg && v >= 0.0;
            out.require(nonneg, "negative density value");

            double integral = grid.integrate(q);
            worst_integral = std::max(worst_integral, std::abs(integral - 1.0));
            out.require(std::abs(integral - 1.0) <= 1e-6, "integral off by " + fmt(integral - 1.0));

            std::vector<bool> allowed(grid.m, false);
            for (std::size_t j = 0; j < grid.m; ++j) {
                if (u[j] <= 0.0) continue;
                double a, b;
                kernel_support(spec, mu, grid.points[j], a, b);
                a = std::max(a, grid.delta);
                b = std::min(b, 1.0 - grid.delta);
                for (std::size_t k = 0; k < grid.m; ++k)
                    if (grid.cell_hi(k) >= a - 1e-12 && grid.cell_lo(k) <= b + 1e-12)
                        allowed[k] = true;
            }
            for (std::size_t k = 0; k < grid.m; ++k)
                if (q[k] > 0.0 && !allowed[k]) {
                    out.require(false, "mass outside the kernel support at cell " + std::to_string(k));
                    break;
                }
            if (!out.ok) return out;
        }
    }
    out.note("100 densities, worst |integral-1| " + fmt(worst_integral));
    return out;
}

// ---------------------------------------------------------------------------
// 2. Estimator oracle identities by exhaustive enumeration (n=1, K=1).

double c2_demand(double c, double p) { return 0.25 + 0.5 * c * (1.0 - p); }
double c2_loss(double c, double p) { return 0.5 * (1.0 - (p * c2_demand(c, p) - c)); }

NormalizedLoss c2_loss_at(double c, double p) {
    NormalizedLoss l;
    l.per_market = {c2_loss(c, p)};
    l.total = l.per_market[0];
    return l;
}

Outcome criterion_estimators() {
    Outcome out;
    double worst_f = 0.0;
    for (double gamma : {1.0, 0.1, 0.01}) {
        MonotonicParams params;
        params.n = 1;
        params.K = 1;
        params.eta = 0.05;
        params.gamma = gamma;
        auto s = monotonic_init(params);
        s.price_logw = {0.3, -0.2};
        s.cost_logw[0][0] = {0.1, -0.4};
        s.cost_logw[0][1] = {-0.7, 0.2};
        auto qp = monotonic_price_dist(s);
        auto grid = s.grid.points;
        for (std::size_t qc_idx = 0; qc_idx < 2; ++qc_idx) {
            for (std::size_t qp_idx = 0; qp_idx < 2; ++qp_idx) {
                double expect = 0.0;
                for (std::size_t pc = 0; pc < 2; ++pc) {
                    auto qcond = monotonic_cost_dist(s, 0, pc);
                    for (std::size_t cc = 0; cc < 2; ++cc) {
                        MonotonicChosen ch;
                        ch.cost_idx = {cc};
                        ch.price_idx = pc;
                        auto l = c2_loss_at(grid[cc], grid[pc]);
                        expect += qp[pc] * qcond[cc] *
                                  monotonic_estimator_f(s, ch, l, 0, qc_idx, qp_idx);
                    }
                }
                double target =
                    c2_loss(grid[qc_idx], grid[qp_idx]) * qp[qp_idx] / (qp[qp_idx] + gamma);
                worst_f = std::max(worst_f, std::abs(expect - target));
                out.require(std::abs(expect - target) <= 1e-12,
                            "f-hat identity off by " + fmt(expect - target));
            }
        }
    }

    for (double gamma : {1e-2, 1e-4, 1e-6}) {
        MonotonicParams params;
        params.n = 1;
        params.K = 1;
        params.eta = gamma * gamma;  // exploration bonus must vanish with gamma
        params.gamma = gamma;
        auto s = monotonic_init(params);
        s.price_logw = {0.2, -0.1};
        s.cost_logw[0][0] = {0.5, -0.5};
        auto qp = monotonic_price_dist(s);
        auto grid = s.grid.points;
        for (std::size_t query = 0; query < 2; ++query) {
            double expect = 0.0;
            for (std::size_t pc = 0; pc < 2; ++pc) {
                auto qcond = monotonic_cost_dist(s, 0, pc);
                for (std::size_t cc = 0; cc < 2; ++cc) {
                    auto l = c2_loss_at(grid[cc], grid[pc]);
                    expect += qp[pc] * qcond[cc] * monotonic_estimator_h(s, pc, l, query);
                }
            }
            auto qcond = monotonic_cost_dist(s, 0, query);
            double mixture = 0.0;
            for (std::size_t cc = 0; cc < 2; ++cc)
                mixture += qcond[cc] * c2_loss(grid[cc], grid[query]);
            double scale = 1.0 / qp[query] + 2.0;
            double rel = std::abs(expect - mixture) / mixture;
            out.require(rel < 2.0 * gamma * scale,
                        "h-hat limit rel err " + fmt(rel) + " at gamma " + fmt(gamma));
        }
    }
    out.note("worst f-hat deviation " + fmt(worst_f));
    return out;
}

// ---------------------------------------------------------------------------
// 3. Hard lower-bound environments at K = 20.

Outcome criterion_hard_envs() {
    Outcome out;
    auto base = make_lowerbound_model(20, std::nullopt);
    auto rb = hard_env_check(base, 201);
    out.require(rb.pass(), "baseline property suite failed");

    auto grids = make_lowerbound_grids(20);
    auto S = enumerate_S(grids);
    out.require(S.size() >= 10, "fewer than 10 bump candidates");
    std::size_t checked = 0;
    for (auto [c_star, p_star] : S) {
        auto model = make_lowerbound_model(20, BumpWindow{c_star, p_star});
        auto r = hard_env_check(model, 201);
        if (!r.pass()) {
            out.require(false, "alternative (" + fmt(c_star) + "," + fmt(p_star) + ") failed: " +
                                   (r.monotone_in_c ? "" : "monotone-c ") +
                                   (r.monotone_in_p ? "" : "monotone-p ") +
                                   (r.bump_profit_ok ? "" : "bump-profit ") +
                                   (r.grid_profit_ok ? "" : "grid-profit ") +
                                   (r.offgrid_profit_ok ? "" : "offgrid-profit ") +
                                   (r.kl_ok ? "" : "kl"));
            return out;
        }
        ++checked;
    }
    out.note(std::to_string(checked) + " alternatives checked, all items and KL bounds hold");
    return out;
}

// ---------------------------------------------------------------------------
// 4. Discretization-error bound for monotone environments.

Outcome criterion_discretization() {
    Outcome out;
    std::vector<std::pair<std::string, SyntheticParams>> fams;
    {
        SyntheticParams lin;
        lin.family = SyntheticFamily::MonotoneLinear;
        lin.a = 0.8;
        lin.b = 0.9;
        fams.emplace_back("linear", lin);
        SyntheticParams sq;
        sq.family = SyntheticFamily::ConcaveSqrt;
        fams.emplace_back("sqrt", sq);
        SyntheticParams lg;
        lg.family = SyntheticFamily::LogisticPrice;
        lg.a = 0.2;
        lg.b = 0.6;
        fams.emplace_back("logistic", lg);
    }
    const std::size_t n = 2;
    const std::uint64_t T = 1000;
    double worst_ratio = 0.0;
    for (const auto& [name, sp] : fams) {
        SyntheticEnvironment env(n, T, sp);
        double fine = estimate_opt(env, 2001);
        for (std::size_t K : {4u, 8u, 16u}) {
            double coarse = estimate_opt_on_grid(env, make_price_grid(K));
            double gap = fine - coarse;
            double bound = 2.0 * static_cast<double>(n) * static_cast<double>(T) /
                           static_cast<double>(K);
            worst_ratio = std::max(worst_ratio, gap / bound);
            out.require(gap <= bound + 1e-9,
                        name + " K=" + std::to_string(K) + " gap " + fmt(gap) + " > " + fmt(bound));
            out.require(gap >= -1e-9, name + " coarse optimum above fine optimum");
        }
    }
    out.note("worst gap/bound ratio " + fmt(worst_ratio));
    return out;
}

// ---------------------------------------------------------------------------
// 5 & 6. Regret-rate scaling sweeps.

std::vector<SweepPoint> scaling_sweep(PolicyKind kind, const SyntheticParams& sp, std::size_t n,
                                      const std::vector<std::uint64_t>& horizons,
                                      std::size_t seed_count) {
    std::vector<SweepPoint> points;
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < seed_count; ++s) seeds.push_back(s);
    for (std::uint64_t T : horizons) {
        SyntheticEnvironment env(n, T, sp);
        double opt = estimate_opt(env, 2001);
        PolicySpec spec;
        spec.kind = kind;
        auto profits = run_seeds(
            [&](std::uint64_t s) {
                return run_episode(env, spec, VariantSpec{}, s, false, /*oracle_profit=*/true)
                    .alg_profit;
            },
            seeds);
        RegretEstimate est = regret_estimate(profits, opt);
        SweepPoint pt;
        pt.T = T;
        pt.regret = est.regret;
        pt.se = est.se;
        pt.opt = opt;
        pt.mean_profit = est.mean_profit;
        points.push_back(pt);
    }
    return points;
}

Outcome check_scaling(const std::vector<SweepPoint>& points, double slope_cap, Outcome out) {
    for (const auto& pt : points)
        out.require(pt.regret >= -3.0 * pt.se,
                    "T=" + std::to_string(pt.T) + " regret " + fmt(pt.regret) + " < -3 SE");
    std::size_t k = points.size();
    for (std::size_t i = k - 3; i + 1 < k; ++i) {
        double r0 = points[i].regret / static_cast<double>(points[i].T);
        double r1 = points[i + 1].regret / static_cast<double>(points[i + 1].T);
        out.require(r1 <= r0, "regret/T increased from T=" + std::to_string(points[i].T) + " (" +
                                  fmt(r0) + ") to T=" + std::to_string(points[i + 1].T) + " (" +
                                  fmt(r1) + ")");
    }
    try {
        double slope = fit_slope(points).slope;
        out.require(slope <= slope_cap, "slope " + fmt(slope) + " > " + fmt(slope_cap));
        out.note("slope " + fmt(slope));
    } catch (const ParameterError& e) {
        out.require(false, e.what());
    }
    return out;
}

const std::vector<std::uint64_t> kScalingHorizons = {1024, 2048, 4096, 8192, 16384, 32768};

Outcome criterion_alg1_scaling(std::vector<SweepPoint>& saved_points) {
    // Demand 1 here is min(1, 14(1-p)): flat at 1 until the kink at p = 13/14,
    // then a steep drop. The continuum optimum (p = 13/14, c = 0) drifts onto
    // the price grid as K grows with T, so the discretization component of the
    // regret is actually exercised across the horizon range.
    SyntheticParams lin;
    lin.family = SyntheticFamily::MonotoneLinear;
    lin.a = 0.0;
    lin.b = 14.0;
    saved_points = scaling_sweep(PolicyKind::Monotonic, lin, 2, kScalingHorizons, 20);
    return check_scaling(saved_points, 0.90, Outcome{});
}

Outcome criterion_alg2_scaling() {
    SyntheticParams sq;
    sq.family = SyntheticFamily::ConcaveSqrt;
    auto conc = scaling_sweep(PolicyKind::Concave, sq, 2, kScalingHorizons, 20);
    Outcome out = check_scaling(conc, 0.80, Outcome{});
    auto mono = scaling_sweep(PolicyKind::Monotonic, sq, 2, kScalingHorizons, 20);
    try {
        double sc = fit_slope(conc).slope;
        double sm = fit_slope(mono).slope;
        out.require(sc < sm, "concave slope " + fmt(sc) + " not below monotonic slope " + fmt(sm));
        out.note("monotonic slope on the same environment " + fmt(sm));
    } catch (const ParameterError& e) {
        out.require(false, e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// 7. Decomposed policy vs joint EXP3 at n = 3, K = 6.

Outcome criterion_joint_contrast() {
    Outcome out;
    SyntheticParams lin;
    lin.family = SyntheticFamily::MonotoneLinear;
    lin.a = 0.8;
    lin.b = 0.9;
    const std::size_t n = 3;
    const std::uint64_t T = 16384;
    SyntheticEnvironment env(n, T, lin);
    double opt = estimate_opt(env, 2001);
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 20; ++s) seeds.push_back(s);

    auto run_kind = [&](PolicyKind kind) {
        PolicySpec spec;
        spec.kind = kind;
        spec.K = 6;
        auto profits = run_seeds(
            [&](std::uint64_t s) {
                return run_episode(env, spec, VariantSpec{}, s, false, true).alg_profit;
            },
            seeds);
        return regret_estimate(profits, opt);
    };
    RegretEstimate mono = run_kind(PolicyKind::Monotonic);
    RegretEstimate joint = run_kind(PolicyKind::JointExp3);
    double pooled = std::sqrt(mono.se * mono.se + joint.se * joint.se);
    out.require(joint.regret - mono.regret >= 2.0 * pooled,
                "margin " + fmt(joint.regret - mono.regret) + " < 2 pooled SE " + fmt(2.0 * pooled));
    out.note("decomposed regret " + fmt(mono.regret) + ", joint regret " + fmt(joint.regret) +
             ", pooled SE " + fmt(pooled));
    return out;
}

// ---------------------------------------------------------------------------
// 8. Variant integrity.

Outcome criterion_variants() {
    Outcome out;

    // subscription telescoping on random traces
    Rng rng(808);
    double worst = 0.0;
    for (int trial = 0; trial < 100 && out.ok; ++trial) {
        SubscriptionConfig cfg;
        std::size_t n = 1 + (rng.next_u64() % 3);
        for (std::size_t i = 0; i < n; ++i) cfg.betas.push_back(rng.uniform() * 0.95);
        cfg.T = 50;
        SubscriptionLedger ledger(cfg);
        std::vector<double> telescoped(n, 0.0);
        for (std::uint64_t t = 1; t <= cfg.T; ++t) {
            Action a;
            a.price = rng.uniform();
            DemandVector d;
            for (std::size_t i = 0; i < n; ++i) {
                a.costs.push_back(rng.uniform());
                d.demands.push_back(rng.bernoulli(0.5) ? 1.0 : rng.uniform());
            }
            auto l = subscription_loss(cfg, t, a, d);
            for (std::size_t i = 0; i < n; ++i) telescoped[i] += 1.0 - 2.0 * l.per_market[i];
            ledger.record_round(a, d);
        }
        double rescaled = 0.0;
        for (std::size_t i = 0; i < n; ++i) rescaled += telescoped[i] / (1.0 - cfg.betas[i]);
        worst = std::max(worst, std::abs(ledger.cumulative_profit - rescaled));
        out.require(std::abs(ledger.cumulative_profit - rescaled) <= 1e-10,
                    "telescoping identity off by " + fmt(ledger.cumulative_profit - rescaled));
    }
    out.note("worst telescoping gap " + fmt(worst));

    // promo with r = 1 must be byte-for-byte the core run
    {
        SyntheticParams sq;
        sq.family = SyntheticFamily::ConcaveSqrt;
        SyntheticEnvironment env(2, 256, sq);
        PolicySpec spec;
        spec.kind = PolicyKind::Monotonic;
        VariantSpec promo;
        promo.kind = VariantKind::Promo;
        promo.promo.r.assign(256, std::vector<double>(2, 1.0));
        for (std::uint64_t seed : {1ull, 7ull, 99ull}) {
            auto core = run_episode(env, spec, VariantSpec{}, seed, true);
            auto pr = run_episode(env, spec, promo, seed, true);
            out.require(core.alg_profit == pr.alg_profit && core.trace == pr.trace,
                        "promo r=1 run differs from core run at seed " + std::to_string(seed));
        }
    }

    // A/B policy is sublinear on a stationary three-alternative environment
    {
        std::vector<double> ratios;
        for (std::uint64_t T : {1024ull, 4096ull, 16384ull}) {
            ABEnvironment env;
            env.n = 2;
            env.T = T;
            env.levels = {0.9, 0.5, 0.2};
            ABConfig cfg;
            cfg.M = 3;
            cfg.K = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(T)) - 1e-9));
            cfg.cost_schedule.assign(T, {0.02, 0.3, 0.6});
            double eta = std::pow(static_cast<double>(T), -2.0 / 3.0) / std::sqrt(3.0);
            double gamma = ab_default_gamma(eta, cfg.M, cfg.K);
            double opt = ab_estimate_opt(env, cfg, 2001);
            double mean = 0.0;
            const int kSeeds = 10;
            for (std::uint64_t s = 0; s < kSeeds; ++s)
                mean += ab_run_episode(env, cfg, eta, gamma, s).alg_profit;
            mean /= kSeeds;
            ratios.push_back((opt - mean) / static_cast<double>(T));
        }
        out.require(ratios[1] < ratios[0] && ratios[2] < ratios[1],
                    "A/B regret/T not decreasing: " + fmt(ratios[0]) + ", " + fmt(ratios[1]) +
                        ", " + fmt(ratios[2]));
        out.note("A/B regret/T " + fmt(ratios[0]) + " -> " + fmt(ratios[1]) + " -> " +
                 fmt(ratios[2]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// 9. Preset determinism: identical invocations produce byte-identical CSV.

Outcome criterion_determinism(const std::string& presets_dir) {
    Outcome out;
    std::vector<fs::path> presets;
    if (!fs::is_directory(presets_dir)) {
        out.require(false, "presets directory not found: " + presets_dir);
        return out;
    }
    for (const auto& entry : fs::directory_iterator(presets_dir))
        if (entry.path().extension() == ".json") presets.push_back(entry.path());
    std::sort(presets.begin(), presets.end());
    out.require(!presets.empty(), "no shipped presets found");
    for (const auto& path : presets) {
        std::ifstream in(path);
        json j = json::parse(in);
        std::string run_id = config_hash(j);
        std::string first, second;
        if (j.contains("T_list")) {
            SweepConfig sc = parse_sweep_config(j);
            first = csv_text(execute_sweep(sc, run_id).rows);
            second = csv_text(execute_sweep(sc, run_id).rows);
        } else {
            RunConfig cfg = parse_run_config(j);
            first = csv_text(execute_run(cfg, run_id).rows);
            second = csv_text(execute_run(cfg, run_id).rows);
        }
        out.require(!first.empty() && first == second,
                    path.filename().string() + " reruns are not byte-identical");
    }
    out.note(std::to_string(presets.size()) + " presets rerun byte-identically");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::string presets_dir = argc > 1 ? argv[1] : "presets";
    int failures = 0;
    std::vector<SweepPoint> alg1_points;

    struct Entry {
        int id;
        std::string label;
        double budget_s;
        std::function<Outcome()> body;
    };
    std::vector<Entry> entries = {
        {1, "kernel correctness on random densities", 10.0, criterion_kernel},
        {2, "estimator oracle identities (n=1, K=1)", 1.0, criterion_estimators},
        {3, "hard lower-bound environment suite (K=20)", 30.0, criterion_hard_envs},
        {4, "discretization-error bound", 60.0, criterion_discretization},
        {5, "regret scaling, decomposed Hedge policy", 600.0,
         [&]() { return criterion_alg1_scaling(alg1_points); }},
        {6, "regret scaling, kernelized policy", 900.0, criterion_alg2_scaling},
        {7, "decomposed vs joint EXP3 at n=3", 600.0, criterion_joint_contrast},
        {8, "variant integrity", 300.0, criterion_variants},
        {9, "preset determinism", 0.0, [&]() { return criterion_determinism(presets_dir); }},
    };

    for (auto& e : entries) {
        auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = e.body();
        } catch (const std::exception& ex) {
            out.ok = false;
            out.detail = std::string("exception: ") + ex.what();
        }
        double elapsed = seconds_since(start);
        if (e.budget_s > 0.0 && elapsed > e.budget_s) {
            out.ok = false;
            out.note("runtime " + fmt(elapsed) + "s exceeds budget " + fmt(e.budget_s) + "s");
        }
        std::printf("%s criterion-%d: %s (%.1fs)%s%s\n", out.ok ? "PASS" : "FAIL", e.id,
                    e.label.c_str(), elapsed, out.detail.empty() ? "" : " -- ",
                    out.detail.c_str());
        std::fflush(stdout);
        if (!out.ok) ++failures;
    }
    if (failures) std::printf("%d of 9 acceptance criteria failed\n", failures);
    else std::printf("all 9 acceptance criteria passed\n");
    return failures == 0 ? 0 : 1;
}
