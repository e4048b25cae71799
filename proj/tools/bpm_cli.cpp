// Command-line front end: single runs, horizon sweeps, environment property
// verification, oracle optima, and policy checkpointing.
//
// Exit codes: 0 success, 1 runtime failure, 2 validation failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bpm/config.hpp"

namespace fs = std::filesystem;
using bpm::json;

namespace {

struct CliFailure {
    int code;  // 1 runtime, 2 validation
    std::string message;
    std::string field;
};

[[noreturn]] void fail(int code, const std::string& message, const std::string& field = "") {
    throw CliFailure{code, message, field};
}

json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(2, "cannot open config file: " + path, "config");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(2, std::string("config parse error in ") + path + ": " + e.what(), "config");
    }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    auto range_pos = text.find("..");
    if (range_pos != std::string::npos) {
        std::uint64_t lo = std::stoull(text.substr(0, range_pos));
        std::uint64_t hi = std::stoull(text.substr(range_pos + 2));
        if (hi < lo) fail(2, "seed range is empty: " + text, "seeds");
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
        return seeds;
    }
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        seeds.push_back(std::stoull(text.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    if (seeds.empty()) fail(2, "empty seed list", "seeds");
    return seeds;
}

struct Overrides {
    std::string algo;
    std::string seeds;
    std::uint64_t T = 0;
    std::size_t n = 0;
    std::size_t K = 0;
    double eta = 0.0;
    double gamma = 0.0;
    double epsilon = 0.0;
    double delta = 0.0;
    std::size_t m = 0;
    double constant = 0.0;
    bool oracle_profit = false;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--algo", ov.algo, "Override policy (monotonic|concave|joint-exp3|fixed|uniform)");
    cmd->add_option("--seeds", ov.seeds, "Override seeds: comma list or lo..hi range");
    cmd->add_option("--T", ov.T, "Override horizon T");
    cmd->add_option("--n", ov.n, "Override market count n");
    cmd->add_option("--K", ov.K, "Override grid size K");
    cmd->add_option("--eta", ov.eta, "Override learning rate eta");
    cmd->add_option("--gamma", ov.gamma, "Override bias control gamma");
    cmd->add_option("--epsilon", ov.epsilon, "Override kernel width epsilon");
    cmd->add_option("--delta", ov.delta, "Override boundary margin delta");
    cmd->add_option("--m", ov.m, "Override cost-grid resolution m");
    cmd->add_option("--constant", ov.constant, "Scale the theorem-default K and eta");
    cmd->add_flag("--oracle-profit", ov.oracle_profit,
                  "Score trajectories by oracle mean profit (variance reduction)");
}

void apply_overrides(json& j, const Overrides& ov) {
    if (!ov.algo.empty()) j["algo"] = ov.algo;
    if (!ov.seeds.empty()) j["seeds"] = parse_seed_list(ov.seeds);
    if (ov.T) j["T"] = ov.T;
    if (ov.n) j["n"] = ov.n;
    if (ov.K) j["params"]["K"] = ov.K;
    if (ov.eta > 0.0) j["params"]["eta"] = ov.eta;
    if (ov.gamma > 0.0) j["params"]["gamma"] = ov.gamma;
    if (ov.epsilon > 0.0) j["params"]["epsilon"] = ov.epsilon;
    if (ov.delta > 0.0) j["params"]["delta"] = ov.delta;
    if (ov.m) j["params"]["m"] = ov.m;
    if (ov.constant > 0.0) j["params"]["constant"] = ov.constant;
    if (ov.oracle_profit) j["oracle_profit"] = true;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(1, "cannot write " + path.string());
    out << content;
}

json estimate_to_json(const bpm::RegretEstimate& est) {
    return json{{"regret", est.regret},
                {"se", est.se},
                {"mean_profit", est.mean_profit},
                {"seeds", est.seeds}};
}

// Output directory named by the content hash of the effective config; an
// existing directory means this exact invocation already ran.
fs::path prepare_outdir(const std::string& out_base, const std::string& run_id, bool& existed) {
    fs::path dir = fs::path(out_base) / run_id;
    existed = fs::exists(dir / "results.csv");
    if (!existed) fs::create_directories(dir);
    return dir;
}

int cmd_run(const std::string& config_path, const std::string& out_base, const Overrides& ov) {
    json j = read_config_file(config_path);
    apply_overrides(j, ov);
    bpm::RunConfig cfg = bpm::parse_run_config(j);
    std::string run_id = bpm::config_hash(j);
    bool existed = false;
    fs::path dir = prepare_outdir(out_base, run_id, existed);
    if (existed) {
        std::cout << "run " << run_id << " already recorded at " << dir.string() << "\n";
        return 0;
    }
    bpm::RunOutput out = bpm::execute_run(cfg, run_id);
    write_file(dir / "results.csv", bpm::csv_text(out.rows));
    json sidecar{{"run_id", run_id},
                 {"config", j},
                 {"opt", out.opt},
                 {"estimate", estimate_to_json(out.estimate)}};
    write_file(dir / "result.json", sidecar.dump(2) + "\n");
    std::cout << "run " << run_id << ": " << cfg.seeds.size() << " seeds, opt "
              << bpm::fmt_double(out.opt) << ", regret " << bpm::fmt_double(out.estimate.regret)
              << " +- " << bpm::fmt_double(out.estimate.se) << "\n"
              << "wrote " << (dir / "results.csv").string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_base, const Overrides& ov,
              const std::string& t_list_flag) {
    json j = read_config_file(config_path);
    apply_overrides(j, ov);
    if (!t_list_flag.empty()) {
        std::vector<std::uint64_t> ts = parse_seed_list(t_list_flag);  // same comma/range syntax
        j["T_list"] = ts;
    }
    bpm::SweepConfig sc = bpm::parse_sweep_config(j);
    std::string run_id = bpm::config_hash(j);
    bool existed = false;
    fs::path dir = prepare_outdir(out_base, run_id, existed);
    if (existed) {
        std::cout << "sweep " << run_id << " already recorded at " << dir.string() << "\n";
        return 0;
    }
    bpm::SweepOutput out = bpm::execute_sweep(sc, run_id);
    write_file(dir / "results.csv", bpm::csv_text(out.rows));
    json points = json::array();
    for (const auto& pt : out.points)
        points.push_back(json{{"T", pt.T},
                              {"regret", pt.regret},
                              {"se", pt.se},
                              {"opt", pt.opt},
                              {"mean_profit", pt.mean_profit}});
    json sidecar{{"run_id", run_id}, {"config", j}, {"points", points}};
    for (const auto& pt : out.points)
        std::cout << "T=" << pt.T << " regret " << bpm::fmt_double(pt.regret) << " +- "
                  << bpm::fmt_double(pt.se) << "\n";
    if (out.fit) {
        // slope standard error from the log-log residuals
        double sxx = 0.0, xbar = 0.0, ssr = 0.0;
        std::vector<double> xs;
        for (std::uint64_t T : out.fit->used_T) xs.push_back(std::log(static_cast<double>(T)));
        for (double x : xs) xbar += x;
        xbar /= static_cast<double>(xs.size());
        for (double x : xs) sxx += (x - xbar) * (x - xbar);
        for (double r : out.fit->residuals) ssr += r * r;
        double slope_se = xs.size() > 2 && sxx > 0.0
                              ? std::sqrt(ssr / (static_cast<double>(xs.size()) - 2.0) / sxx)
                              : 0.0;
        sidecar["fit"] = json{{"slope", out.fit->slope},
                              {"intercept", out.fit->intercept},
                              {"slope_se", slope_se},
                              {"residuals", out.fit->residuals},
                              {"used_T", out.fit->used_T},
                              {"excluded_T", out.fit->excluded_T}};
        std::cout << "slope " << bpm::fmt_double(out.fit->slope) << " +- "
                  << bpm::fmt_double(2.0 * slope_se) << " (95% CI half-width)\n";
    } else {
        std::cout << "not fitting a slope: fewer than 2 usable horizon points\n";
    }
    write_file(dir / "sweep.json", sidecar.dump(2) + "\n");
    std::cout << "wrote " << (dir / "results.csv").string() << "\n";
    return 0;
}

int cmd_verify_env(const std::string& kind, std::size_t K, double c_star, double p_star,
                   std::size_t probes) {
    std::optional<bpm::BumpWindow> bump;
    if (kind == "alternative") {
        bump = bpm::BumpWindow{c_star, p_star};
    } else if (kind != "baseline") {
        fail(2, "kind must be baseline or alternative", "kind");
    }
    bpm::LowerBoundModel model;
    try {
        model = bpm::make_lowerbound_model(K, bump);
    } catch (const bpm::ParameterError& e) {
        fail(2, e.what(), "c_star/p_star");
    }
    bpm::HardEnvReport r = bpm::hard_env_check(model, probes);
    auto line = [](const std::string& what, bool ok) {
        std::cout << (ok ? "PASS " : "FAIL ") << what << "\n";
    };
    line("demand nondecreasing in cost", r.monotone_in_c);
    line("demand nonincreasing in price", r.monotone_in_p);
    if (bump) {
        std::cout << (r.bump_profit_ok ? "PASS" : "FAIL") << " bump profit margin: "
                  << bpm::fmt_double(r.bump_profit) << " >= "
                  << bpm::fmt_double(r.bump_profit_required) << "\n";
        std::cout << (r.kl_ok ? "PASS" : "FAIL") << " kl sum: " << bpm::fmt_double(r.kl_sum)
                  << " <= " << bpm::fmt_double(r.kl_bound) << "\n";
    }
    std::cout << (r.grid_profit_ok ? "PASS" : "FAIL")
              << " zero profit on grid: max |profit| = " << bpm::fmt_double(r.max_abs_grid_profit)
              << "\n";
    std::cout << (r.offgrid_profit_ok ? "PASS" : "FAIL")
              << " negative profit off grid: max profit = " << bpm::fmt_double(r.max_offgrid_profit)
              << "\n";
    if (!r.pass()) fail(1, "environment property suite failed");
    return 0;
}

int cmd_oracle_opt(const std::string& config_path, std::size_t resolution, std::size_t grid_K) {
    json j = read_config_file(config_path);
    bpm::RunConfig cfg = bpm::parse_run_config(j);
    auto env = bpm::build_environment(cfg.env_json, cfg.n, cfg.T);
    double opt = bpm::variant_opt(*env, cfg.variant, resolution);
    json out{{"opt", opt},
             {"per_round_opt", opt / static_cast<double>(std::max<std::uint64_t>(cfg.T, 1))},
             {"resolution", resolution}};
    if (grid_K) {
        out["grid_K"] = grid_K;
        out["grid_opt"] = bpm::estimate_opt_on_grid(*env, bpm::make_price_grid(grid_K));
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_checkpoint(const std::string& config_path, const std::string& state_path,
                   const std::string& resume_path, std::uint64_t seed, std::uint64_t rounds,
                   bool force) {
    json j = read_config_file(config_path);
    bpm::RunConfig cfg = bpm::parse_run_config(j);
    auto env = bpm::build_environment(cfg.env_json, cfg.n, cfg.T);

    if (!force && fs::exists(state_path))
        fail(2, "state file exists, pass --force to replace: " + state_path, "state");

    std::optional<bpm::MonotonicPolicyState> mono;
    std::optional<bpm::ConcavePolicyState> conc;
    std::optional<bpm::JointExp3State> joint;
    if (!resume_path.empty()) {
        json wrapper = read_config_file(resume_path);
        if (wrapper.value("format", "") != "checkpoint" || wrapper.value("version", 0) != 1)
            fail(2, "unrecognized checkpoint file: " + resume_path, "resume");
        const json& pol = wrapper.at("policy");
        switch (cfg.policy.kind) {
            case bpm::PolicyKind::Monotonic: mono = bpm::monotonic_from_json(pol); break;
            case bpm::PolicyKind::Concave: conc = bpm::concave_from_json(pol); break;
            case bpm::PolicyKind::JointExp3: joint = bpm::joint_from_json(pol); break;
            default: fail(2, "checkpointing needs a learning policy", "algo");
        }
    } else {
        switch (cfg.policy.kind) {
            case bpm::PolicyKind::Monotonic:
                mono = bpm::monotonic_init(bpm::resolve_monotonic(cfg.policy, cfg.n, cfg.T));
                break;
            case bpm::PolicyKind::Concave:
                conc = bpm::concave_init(bpm::resolve_concave(cfg.policy, cfg.n, cfg.T));
                break;
            case bpm::PolicyKind::JointExp3: {
                bpm::MonotonicParams p = bpm::resolve_monotonic(cfg.policy, cfg.n, cfg.T);
                joint = bpm::joint_init(cfg.n, p.K, p.eta);
                break;
            }
            default: fail(2, "checkpointing needs a learning policy", "algo");
        }
    }

    std::uint64_t start = mono ? mono->round : conc ? conc->round : joint->round;
    std::uint64_t stop = std::min<std::uint64_t>(cfg.T, start - 1 + rounds);
    // substream reseeded per segment: resuming replays the same rounds the
    // same way, but a checkpointed run differs from an unbroken one
    bpm::RunRngs rngs = bpm::make_run_rngs(seed ^ bpm::fnv1a64(std::to_string(start)));

    bpm::MonotonicChosen mch;
    bpm::ConcaveChosen cch;
    std::size_t arm = 0;
    double profit = 0.0;
    for (std::uint64_t t = start; t <= stop; ++t) {
        bpm::Action a;
        if (mono) a = bpm::monotonic_sample_action(*mono, rngs.policy, mch);
        else if (conc) a = bpm::concave_sample_action(*conc, rngs.policy, cch);
        else {
            arm = bpm::joint_sample(*joint, rngs.policy);
            a = bpm::joint_arm_action(*joint, arm);
        }
        bpm::DemandVector d = env->sample(t, a, rngs.environment);
        bpm::ProfitBreakdown pb = bpm::compute_profit(a, d);
        bpm::NormalizedLoss loss = bpm::normalize_loss(pb);
        if (mono) bpm::monotonic_update(*mono, mch, loss);
        else if (conc) bpm::concave_update(*conc, cch, loss);
        else bpm::joint_update(*joint, arm, loss);
        profit += pb.total;
    }

    json pol = mono ? bpm::monotonic_to_json(*mono)
                    : conc ? bpm::concave_to_json(*conc) : bpm::joint_to_json(*joint);
    json wrapper{{"format", "checkpoint"},
                 {"version", 1},
                 {"algo", cfg.algo_label},
                 {"seed", seed},
                 {"segment_profit", profit},
                 {"policy", pol}};
    write_file(state_path, wrapper.dump(2) + "\n");
    std::uint64_t round = mono ? mono->round : conc ? conc->round : joint->round;
    std::cout << "checkpointed " << cfg.algo_label << " at round " << round << " (of T=" << cfg.T
              << ") to " << state_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial bandit pricing and marketing-spend experiments"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker thread count (also via BPM_THREADS)");

    std::string config_path, out_base = "out";
    Overrides ov;
    auto* run = app.add_subcommand("run", "Run one experiment config over its seed list");
    run->add_option("--config", config_path, "JSON config path")->required();
    run->add_option("--out", out_base, "Output base directory");
    add_override_flags(run, ov);

    std::string sweep_config, sweep_out = "out", t_list_flag;
    Overrides sweep_ov;
    auto* sweep = app.add_subcommand("sweep", "Sweep horizons and fit a log-log regret slope");
    sweep->add_option("--config", sweep_config, "JSON config path (with T_list)")->required();
    sweep->add_option("--out", sweep_out, "Output base directory");
    sweep->add_option("--T-list", t_list_flag, "Override horizons: comma list");
    add_override_flags(sweep, sweep_ov);

    std::string ve_kind = "baseline";
    std::size_t ve_K = 20, ve_probes = 201;
    double ve_c = 0.4, ve_p = 0.6;
    auto* verify = app.add_subcommand("verify-env", "Check the hard-instance property suite");
    verify->add_option("--kind", ve_kind, "baseline or alternative");
    verify->add_option("--K", ve_K, "Grid size K");
    verify->add_option("--c-star", ve_c, "Alternative bump cost");
    verify->add_option("--p-star", ve_p, "Alternative bump price");
    verify->add_option("--probes", ve_probes, "Probe grid resolution per axis");

    std::string oo_config;
    std::size_t oo_resolution = 2001, oo_grid_K = 0;
    auto* oracle = app.add_subcommand("oracle-opt", "Compute the hindsight optimum for a config");
    oracle->add_option("--config", oo_config, "JSON config path")->required();
    oracle->add_option("--resolution", oo_resolution, "Grid points per axis");
    oracle->add_option("--grid-K", oo_grid_K, "Also report the optimum restricted to I_K");

    std::string cp_config, cp_state, cp_resume;
    std::uint64_t cp_seed = 0, cp_rounds = 0;
    bool cp_force = false;
    auto* checkpoint = app.add_subcommand("checkpoint", "Run a policy segment and save its state");
    checkpoint->add_option("--config", cp_config, "JSON config path")->required();
    checkpoint->add_option("--state", cp_state, "Where to write the policy state")->required();
    checkpoint->add_option("--resume", cp_resume, "Resume from an earlier state file");
    checkpoint->add_option("--seed", cp_seed, "Run seed");
    checkpoint->add_option("--rounds", cp_rounds, "Rounds to advance")->required();
    checkpoint->add_flag("--force", cp_force, "Allow replacing an existing state file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (threads) setenv("BPM_THREADS", std::to_string(threads).c_str(), 1);

    try {
        if (*run) return cmd_run(config_path, out_base, ov);
        if (*sweep) return cmd_sweep(sweep_config, sweep_out, sweep_ov, t_list_flag);
        if (*verify) return cmd_verify_env(ve_kind, ve_K, ve_c, ve_p, ve_probes);
        if (*oracle) return cmd_oracle_opt(oo_config, oo_resolution, oo_grid_K);
        if (*checkpoint)
            return cmd_checkpoint(cp_config, cp_state, cp_resume, cp_seed, cp_rounds, cp_force);
    } catch (const CliFailure& e) {
        json err{{"error",
                  {{"code", e.code == 2 ? "validation" : "runtime"}, {"message", e.message}}}};
        if (!e.field.empty()) err["error"]["field"] = e.field;
        std::cerr << err.dump() << "\n";
        return e.code;
    } catch (const bpm::ValidationError& e) {
        json err{{"error",
                  {{"code", "validation"}, {"field", e.field}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        json err{{"error", {{"code", "runtime"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
