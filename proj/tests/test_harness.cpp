#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>

#include "bpm/harness.hpp"

using namespace bpm;

namespace {

SyntheticParams sqrt_family() {
    SyntheticParams sp;
    sp.family = SyntheticFamily::ConcaveSqrt;
    return sp;
}

}  // namespace

TEST_CASE("theorem default parameters at T=4096") {
    auto p1 = monotonic_defaults(2, 4096);
    CHECK(p1.K == 8);
    CHECK(p1.eta == Catch::Approx(1.0 / 512.0).margin(1e-12));
    CHECK(p1.gamma == p1.eta);

    auto p2 = concave_defaults(2, 4096);
    CHECK(p2.K == 16);
    CHECK(p2.eta == Catch::Approx(1.0 / 256.0).margin(1e-9));
    CHECK(p2.epsilon == Catch::Approx(std::pow(2.0, -24.0)).margin(1e-15));
    CHECK(p2.delta == Catch::Approx(1.0 / 4096.0).margin(1e-15));
    CHECK(p2.gamma == Catch::Approx(0.068889).margin(1e-5));

    CHECK_THROWS_AS(monotonic_defaults(1, 8), ParameterError);
}

TEST_CASE("fixed policy at the analytic optimum earns the optimal mean profit") {
    SyntheticEnvironment env(1, 100000, sqrt_family());
    PolicySpec spec;
    spec.kind = PolicyKind::Fixed;
    spec.fixed_action = Action{{1.0 / 64.0}, 0.5};
    auto res = run_episode(env, spec, VariantSpec{}, 12345);
    double per_round = res.alg_profit / 100000.0;
    // demand variance is Bernoulli; 3 sigma of the mean profit estimate
    double sigma = 0.5 * std::sqrt(0.25 / 100000.0);
    CHECK(std::abs(per_round - 1.0 / 64.0) <= 3.5 * sigma);
}

TEST_CASE("empty horizon gives an empty trace") {
    SyntheticEnvironment env(1, 0, sqrt_family());
    PolicySpec spec;
    spec.kind = PolicyKind::Uniform;
    auto res = run_episode(env, spec, VariantSpec{}, 1, true);
    CHECK(res.alg_profit == 0.0);
    CHECK(res.trace.empty());
}

TEST_CASE("identical seeds give bit-identical episodes") {
    SyntheticEnvironment env(2, 512, sqrt_family());
    PolicySpec spec;
    spec.kind = PolicyKind::Monotonic;
    auto r1 = run_episode(env, spec, VariantSpec{}, 42, true);
    auto r2 = run_episode(env, spec, VariantSpec{}, 42, true);
    CHECK(r1.alg_profit == r2.alg_profit);
    CHECK(r1.trace == r2.trace);
    double sum = 0.0;
    for (double v : r1.trace) sum += v;
    CHECK(sum == Catch::Approx(r1.alg_profit).margin(1e-9));
}

TEST_CASE("opt estimates for reference environments") {
    SyntheticEnvironment env_b(1, 1000, sqrt_family());
    double opt = estimate_opt(env_b, 2001);
    CHECK(opt == Catch::Approx(1000.0 / 64.0).margin(1000.0 * 2.0 / 2001.0));

    LowerBoundEnvironment base(1, 1000, 20, std::nullopt);
    CHECK(estimate_opt(base, 2001) == Catch::Approx(0.0).margin(1e-9));

    LowerBoundEnvironment alt(1, 1000, 20, BumpWindow{0.4, 0.6});
    CHECK(estimate_opt(alt, 2001) == Catch::Approx(0.008 * 1000.0).margin(1e-6));

    LowerBoundEnvironment alt3(3, 500, 20, BumpWindow{0.4, 0.6});
    CHECK(estimate_opt(alt3, 2001) == Catch::Approx(3.0 * 0.008 * 500.0).margin(1e-6));
}

TEST_CASE("decomposed search equals exhaustive joint search on coarse grids") {
    for (std::size_t n : {1u, 2u}) {
        SyntheticParams lin;
        lin.family = SyntheticFamily::MonotoneLinear;
        lin.a = 0.8;
        lin.b = 0.9;
        SyntheticEnvironment env(n, 100, lin);
        auto grid = make_price_grid(8);
        double decomposed = estimate_opt_on_grid(env, grid);
        // brute force over every grid tuple
        double best = -1e300;
        double Td = 100.0;
        for (double p : grid.points) {
            if (n == 1) {
                for (double c : grid.points) {
                    double v = p * env.mean_demand_total(0, c, p) - Td * c;
                    best = std::max(best, v);
                }
            } else {
                for (double c1 : grid.points)
                    for (double c2 : grid.points) {
                        double v = p * env.mean_demand_total(0, c1, p) - Td * c1 +
                                   p * env.mean_demand_total(1, c2, p) - Td * c2;
                        best = std::max(best, v);
                    }
            }
        }
        CHECK(decomposed == Catch::Approx(best).margin(1e-9));
    }
}

TEST_CASE("discretization error bound for monotone environments") {
    SyntheticParams lin;
    lin.family = SyntheticFamily::MonotoneLinear;
    lin.a = 0.8;
    lin.b = 0.9;
    std::vector<SyntheticParams> fams = {lin, sqrt_family()};
    for (const auto& sp : fams) {
        SyntheticEnvironment env(2, 1000, sp);
        double fine = estimate_opt(env, 2001);
        for (std::size_t K : {4u, 8u, 16u}) {
            double coarse = estimate_opt_on_grid(env, make_price_grid(K));
            double bound = 2.0 * 2.0 * 1000.0 / static_cast<double>(K);
            CHECK(fine - coarse <= bound + 1e-9);
            CHECK(fine - coarse >= -1e-9);
        }
    }
}

TEST_CASE("regret estimates behave sanely") {
    SyntheticEnvironment env(1, 10000, sqrt_family());
    double opt = estimate_opt(env, 2001);

    PolicySpec optimal;
    optimal.kind = PolicyKind::Fixed;
    optimal.fixed_action = Action{{1.0 / 64.0}, 0.5};
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 16; ++s) seeds.push_back(s);
    auto profits = run_seeds(
        [&](std::uint64_t s) { return run_episode(env, optimal, VariantSpec{}, s).alg_profit; }, seeds);
    auto est = regret_estimate(profits, opt);
    CHECK(est.regret >= -3.0 * est.se);
    CHECK(std::abs(est.regret) <= 5.0 * est.se + 1.0);

    PolicySpec uniform;
    uniform.kind = PolicyKind::Uniform;
    auto uprofits = run_seeds(
        [&](std::uint64_t s) { return run_episode(env, uniform, VariantSpec{}, s).alg_profit; }, seeds);
    auto uest = regret_estimate(uprofits, opt);
    CHECK(uest.regret > 5.0 * uest.se);
}

TEST_CASE("slope fit recovers synthetic scaling laws") {
    std::vector<SweepPoint> pts;
    for (std::uint64_t T : {1024u, 4096u, 16384u, 65536u}) {
        SweepPoint p;
        p.T = T;
        p.regret = 3.0 * std::pow(static_cast<double>(T), 0.75);
        p.se = 0.0;
        pts.push_back(p);
    }
    auto fit = fit_slope(pts);
    CHECK(fit.slope == Catch::Approx(0.75).margin(1e-6));

    // an extra ln T factor inflates the log-log slope by roughly 1/mean(ln T),
    // about 0.11 on this horizon range, independent of the constant
    std::vector<SweepPoint> pts_log;
    for (std::uint64_t T : {1024u, 4096u, 16384u, 65536u}) {
        SweepPoint p;
        p.T = T;
        p.regret = 0.5 * std::pow(static_cast<double>(T), 0.75) * std::log(static_cast<double>(T));
        p.se = 0.0;
        pts_log.push_back(p);
    }
    auto fit_log = fit_slope(pts_log);
    CHECK(fit_log.slope > 0.75);
    CHECK(fit_log.slope < 0.90);
    CHECK(fit_log.slope == Catch::Approx(0.8628).margin(5e-3));

    std::vector<SweepPoint> flat;
    for (std::uint64_t T : {1024u, 4096u, 16384u, 65536u}) {
        SweepPoint p;
        p.T = T;
        p.regret = 7.5;
        p.se = 0.0;
        flat.push_back(p);
    }
    CHECK(fit_slope(flat).slope == Catch::Approx(0.0).margin(1e-9));

    // noise-dominated points are excluded from the fit
    std::vector<SweepPoint> noisy = pts;
    noisy[0].se = noisy[0].regret;  // regret < 10 se
    auto fit_noisy = fit_slope(noisy);
    CHECK(fit_noisy.excluded_T == std::vector<std::uint64_t>{1024});
    CHECK(fit_noisy.used_T.size() == 3);
}

TEST_CASE("promo variant with full arrivals matches the core run bit for bit") {
    SyntheticEnvironment env(2, 256, sqrt_family());
    PolicySpec spec;
    spec.kind = PolicyKind::Monotonic;
    VariantSpec promo;
    promo.kind = VariantKind::Promo;
    promo.promo.r.assign(256, std::vector<double>(2, 1.0));
    for (std::uint64_t seed : {1ull, 7ull, 99ull}) {
        auto core = run_episode(env, spec, VariantSpec{}, seed, true);
        auto pr = run_episode(env, spec, promo, seed, true);
        CHECK(core.alg_profit == pr.alg_profit);
        CHECK(core.trace == pr.trace);
    }
}

TEST_CASE("subscription episode ledger consistency") {
    SyntheticEnvironment env(2, 128, sqrt_family());
    PolicySpec spec;
    spec.kind = PolicyKind::Monotonic;
    VariantSpec sub;
    sub.kind = VariantKind::Subscription;
    sub.subscription.betas = {0.3, 0.6};
    sub.subscription.T = 128;
    auto res = run_episode(env, spec, sub, 5, true);
    double sum = 0.0;
    for (double v : res.trace) sum += v;
    CHECK(sum == Catch::Approx(res.alg_profit).margin(1e-9));
}

TEST_CASE("ab episode machinery") {
    ABEnvironment env;
    env.n = 2;
    env.T = 512;
    env.levels = {0.3, 0.6, 0.9};
    ABConfig cfg;
    cfg.M = 3;
    cfg.K = 8;
    cfg.cost_schedule.assign(512, {0.02, 0.05, 0.4});
    double opt = ab_estimate_opt(env, cfg, 2001);
    CHECK(opt > 0.0);
    double eta = std::pow(512.0, -2.0 / 3.0) / std::sqrt(3.0);
    auto res = ab_run_episode(env, cfg, eta, ab_default_gamma(eta, 3, 8), 11);
    CHECK(std::isfinite(res.alg_profit));
    auto res2 = ab_run_episode(env, cfg, eta, ab_default_gamma(eta, 3, 8), 11);
    CHECK(res.alg_profit == res2.alg_profit);
}

TEST_CASE("csv rows are stable and reproducible") {
    CHECK(csv_header() ==
          "run_id,algo,env,variant,n,T,K,eta,gamma,epsilon,delta,m,seed,alg_profit,opt,regret");
    CsvRow r;
    r.run_id = "abc";
    r.algo = "monotonic";
    r.env = "sqrt";
    r.variant = "none";
    r.n = 2;
    r.T = 1024;
    r.K = 6;
    r.eta = 1.0 / 512.0;
    r.gamma = r.eta;
    r.seed = 3;
    r.alg_profit = 12.5;
    r.opt = 16.0;
    r.regret = 3.5;
    auto line1 = csv_format_row(r);
    auto line2 = csv_format_row(r);
    CHECK(line1 == line2);
    CHECK(line1.find("0.001953125") != std::string::npos);
}

TEST_CASE("parallel seed map is deterministic") {
    SyntheticEnvironment env(1, 256, sqrt_family());
    PolicySpec spec;
    spec.kind = PolicyKind::Monotonic;
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 8; ++s) seeds.push_back(s * 17 + 1);
    auto body = [&](std::uint64_t s) { return run_episode(env, spec, VariantSpec{}, s).alg_profit; };
    setenv("BPM_THREADS", "4", 1);
    auto par = run_seeds(body, seeds);
    setenv("BPM_THREADS", "1", 1);
    auto ser = run_seeds(body, seeds);
    unsetenv("BPM_THREADS");
    CHECK(par == ser);
}
