#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "dce/checkpoint.hpp"
#include "dce/common.hpp"
#include "dce/config.hpp"
#include "dce/envs.hpp"
#include "dce/io.hpp"
#include "dce/mdp.hpp"
#include "dce/oracle.hpp"
#include "dce/trainer.hpp"

namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitVerification = 4;

std::string now_utc() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dce::IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw dce::IoError("failed writing " + path);
}

void write_manifest(const std::string& path, json manifest) {
    manifest["tool_version"] = kToolVersion;
    manifest["started_at"] = now_utc();
    write_text_file(path, manifest.dump(2) + "\n");
}

json config_json(const dce::TrainConfig& cfg) {
    json j = json::object();
    for (const auto& [key, value] : dce::config_items(cfg)) j[key] = value;
    return j;
}

/// The bundled environments are identified by their dimensions, so datasets
/// recorded from them can be matched back without naming the env again.
std::unique_ptr<dce::ContinuousEnv> guess_env(std::size_t state_dim, std::size_t action_dim) {
    if (state_dim == 1 && action_dim == 1) return dce::make_env("point1d");
    if (state_dim == 4 && action_dim == 2) return dce::make_env("point2d");
    return nullptr;
}

struct GenDataArgs {
    std::string env;
    std::string tier;
    long n = 0;
    std::uint64_t seed = 0;
    std::string out;
};

int run_gen_data(const GenDataArgs& a) {
    std::unique_ptr<dce::ContinuousEnv> env = dce::make_env(a.env);
    dce::BehaviorTier tier = dce::tier_from_name(a.tier);
    if (a.n < 1) throw dce::ConfigError("--n must be at least 1");
    dce::OfflineDataset data =
        dce::generate_dataset(*env, tier, static_cast<std::size_t>(a.n), a.seed);
    dce::save_dataset(data, a.out);
    write_manifest(a.out + ".manifest.json",
                   {{"subcommand", "gen-data"},
                    {"args",
                     {{"env", a.env}, {"tier", a.tier}, {"n", a.n}, {"seed", a.seed}}},
                    {"seed", a.seed},
                    {"outputs", {{"dataset", a.out}}}});
    std::printf("wrote %zu transitions (%s, %s) to %s\n", data.size(), a.env.c_str(),
                a.tier.c_str(), a.out.c_str());
    return 0;
}

struct TrainArgs {
    std::string config_path;
    std::string dataset_path;
    std::string out_dir;
    std::string env_name;
    std::vector<std::string> sets;
    std::string beta;
    std::string critic_mode;
    std::string alpha_mode;
    long epochs = -1;
    std::int64_t seed = -1;
};

dce::TrainConfig resolve_train_config(const TrainArgs& a) {
    dce::TrainConfig cfg;
    if (!a.config_path.empty()) {
        std::ifstream in(a.config_path);
        if (!in) throw dce::IoError("cannot open config file " + a.config_path);
        cfg = dce::parse_config(in);
    }
    for (const std::string& kv : a.sets) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw dce::ConfigError("--set expects key=value, got '" + kv + "'");
        dce::set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!a.beta.empty()) dce::set_config_key(cfg, "beta_schedule", a.beta);
    if (!a.critic_mode.empty()) dce::set_config_key(cfg, "critic_mode", a.critic_mode);
    if (!a.alpha_mode.empty()) dce::set_config_key(cfg, "alpha_mode", a.alpha_mode);
    if (a.epochs >= 0) cfg.epochs = a.epochs;
    if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
    dce::validate_config(cfg);
    return cfg;
}

int run_train(const TrainArgs& a) {
    dce::OfflineDataset data = dce::load_dataset(a.dataset_path);
    dce::TrainConfig cfg = resolve_train_config(a);

    std::unique_ptr<dce::ContinuousEnv> env;
    if (!a.env_name.empty())
        env = dce::make_env(a.env_name);
    else
        env = guess_env(data.state_dim, data.action_dim);
    if (env && (env->state_dim() != data.state_dim || env->action_dim() != data.action_dim))
        throw dce::ConfigError("dataset dimensions do not match environment " + env->name());

    std::filesystem::create_directories(a.out_dir);
    std::filesystem::path dir(a.out_dir);
    std::string metrics_path = (dir / "metrics.csv").string();
    std::string checkpoint_path = (dir / "checkpoint.bin").string();

    dce::TrainResult result = dce::train(cfg, data, env.get());

    std::string csv = std::string(dce::metrics_csv_header()) + "\n";
    for (const dce::MetricsRow& row : result.metrics) csv += dce::metrics_csv_line(row) + "\n";
    write_text_file(metrics_path, csv);
    dce::save_agent(result.agent, cfg.hidden, checkpoint_path);
    write_manifest((dir / "manifest.json").string(),
                   {{"subcommand", "train"},
                    {"config", config_json(cfg)},
                    {"seed", cfg.seed},
                    {"env", env ? json(env->name()) : json(nullptr)},
                    {"inputs",
                     {{"dataset", a.dataset_path},
                      {"config_file", a.config_path.empty() ? json(nullptr)
                                                            : json(a.config_path)}}},
                    {"outputs", {{"metrics", metrics_path}, {"checkpoint", checkpoint_path}}}});

    if (!result.metrics.empty()) {
        const dce::MetricsRow& last = result.metrics.back();
        std::printf("trained %ld epochs; final q_loss %s", cfg.epochs,
                    dce::fmt_g6(last.q_loss).c_str());
        if (env)
            std::printf(", eval_return %s, normalized_score %s",
                        dce::fmt_g6(last.eval_return).c_str(),
                        dce::fmt_g6(last.normalized_score).c_str());
        std::printf("\n");
    }
    std::printf("metrics: %s\ncheckpoint: %s\n", metrics_path.c_str(), checkpoint_path.c_str());
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string env;
    long episodes = 4;
    std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
    dce::LoadedAgent loaded = dce::load_agent(a.checkpoint);
    std::unique_ptr<dce::ContinuousEnv> env = dce::make_env(a.env);
    if (env->state_dim() != loaded.agent.state_dim() ||
        env->action_dim() != loaded.agent.action_dim())
        throw dce::ConfigError("checkpoint dimensions do not match environment " + a.env);
    dce::Rng rng(a.seed);
    double ret = dce::evaluate(loaded.agent.policy, *env, a.episodes, rng);
    dce::ReferenceReturns refs = dce::reference_returns(*env);
    double score = dce::normalized_score(ret, refs.random_ref, refs.expert_ref);
    std::printf("mean_return,normalized_score\n%s,%s\n", dce::fmt_g6(ret).c_str(),
                dce::fmt_g6(score).c_str());
    return 0;
}

struct VerifyArgs {
    long states = 10;
    long actions = 4;
    double gamma = 0.9;
    double beta = 0.5;
    long seeds = 20;
    std::string out;
};

int run_verify_tabular(const VerifyArgs& a) {
    if (a.states < 1 || a.actions < 1) throw dce::ConfigError("--states and --actions must be positive");
    if (a.seeds < 1) throw dce::ConfigError("--seeds must be positive");
    const double tolerance = 1e-6;
    std::string csv = "seed,state,action,q,q_star,abs_deviation\n";
    std::vector<long> unconverged;
    double worst = 0.0;
    for (long seed = 0; seed < a.seeds; ++seed) {
        dce::Rng rng(static_cast<std::uint64_t>(seed));
        dce::TabularMdp mdp = dce::random_mdp(static_cast<std::size_t>(a.states),
                                              static_cast<std::size_t>(a.actions), a.gamma, rng);
        dce::TabularPolicy policy = dce::random_policy(static_cast<std::size_t>(a.states),
                                                       static_cast<std::size_t>(a.actions), rng);
        dce::OffsetReport rep;
        try {
            rep = dce::verify_offset(mdp, policy, a.beta);
        } catch (const dce::ConvergenceError&) {
            unconverged.push_back(seed);
            continue;
        }
        worst = std::max(worst, rep.max_abs_deviation);
        for (std::size_t s = 0; s < mdp.n_states; ++s)
            for (std::size_t act = 0; act < mdp.n_actions; ++act) {
                if (!rep.in_support[s][act]) continue;
                csv += std::to_string(seed) + "," + std::to_string(s) + "," +
                       std::to_string(act) + "," + dce::fmt_g6(rep.penalized.q[s][act]) + "," +
                       dce::fmt_g6(rep.baseline.q[s][act]) + "," +
                       dce::fmt_g6(rep.deviation[s][act]) + "\n";
            }
    }
    if (!a.out.empty()) {
        write_text_file(a.out, csv);
        write_manifest(a.out + ".manifest.json",
                       {{"subcommand", "verify-tabular"},
                        {"args",
                         {{"states", a.states},
                          {"actions", a.actions},
                          {"gamma", a.gamma},
                          {"beta", a.beta},
                          {"seeds", a.seeds}}},
                        {"seed", 0},
                        {"outputs", {{"report", a.out}}}});
    }
    if (!unconverged.empty()) {
        std::string list;
        for (long s : unconverged) list += (list.empty() ? "" : " ") + std::to_string(s);
        std::fprintf(stderr, "verify-tabular: fixed point did not converge for seeds: %s\n",
                     list.c_str());
        return kExitVerification;
    }
    bool ok = worst < tolerance;
    std::printf("verify-tabular: seeds=%ld max_abs_deviation=%s tolerance=%s %s\n", a.seeds,
                dce::fmt_g6(worst).c_str(), dce::fmt_g6(tolerance).c_str(),
                ok ? "OK" : "FAIL");
    return ok ? 0 : kExitVerification;
}

struct BoundArgs {
    long states = 10;
    long actions = 4;
    long samples = 50000;
    double beta = 0.5;
    double c_r = 1.0;
    double c_t = 1.0;
    double r_max = 1.0;
    long seeds = 20;
    double gamma = 0.9;
    std::string out;
};

int run_bound_check(const BoundArgs& a) {
    if (a.states < 1 || a.actions < 1) throw dce::ConfigError("--states and --actions must be positive");
    if (a.samples < 1 || a.seeds < 1) throw dce::ConfigError("--samples and --seeds must be positive");
    dce::BoundParams params;
    params.c_r = a.c_r;
    params.c_t = a.c_t;
    params.r_max = a.r_max;
    std::string csv = "seed,state,action,count,deviation,bound,violated\n";
    std::vector<long> unconverged;
    long violations = 0;
    long rows = 0;
    double max_dev = 0.0;
    for (long seed = 0; seed < a.seeds; ++seed) {
        dce::Rng rng(static_cast<std::uint64_t>(seed));
        dce::TabularMdp mdp = dce::random_mdp(static_cast<std::size_t>(a.states),
                                              static_cast<std::size_t>(a.actions), a.gamma, rng);
        dce::TabularPolicy policy = dce::random_policy(static_cast<std::size_t>(a.states),
                                                       static_cast<std::size_t>(a.actions), rng);
        dce::BoundCheckReport rep;
        try {
            rep = dce::empirical_bound_check(mdp, policy, a.beta, params,
                                             static_cast<std::size_t>(a.samples), rng);
        } catch (const dce::ConvergenceError&) {
            unconverged.push_back(seed);
            continue;
        }
        violations += rep.violations;
        max_dev = std::max(max_dev, rep.max_abs_deviation);
        for (const dce::BoundCheckRow& row : rep.rows) {
            ++rows;
            csv += std::to_string(seed) + "," + std::to_string(row.state) + "," +
                   std::to_string(row.action) + "," + std::to_string(row.count) + "," +
                   dce::fmt_g6(row.deviation) + "," + dce::fmt_g6(row.bound) + "," +
                   (row.violated ? "1" : "0") + "\n";
        }
    }
    if (!a.out.empty()) {
        write_text_file(a.out, csv);
        write_manifest(a.out + ".manifest.json",
                       {{"subcommand", "bound-check"},
                        {"args",
                         {{"states", a.states},
                          {"actions", a.actions},
                          {"samples", a.samples},
                          {"beta", a.beta},
                          {"c_r", a.c_r},
                          {"c_t", a.c_t},
                          {"r_max", a.r_max},
                          {"gamma", a.gamma},
                          {"seeds", a.seeds}}},
                        {"seed", 0},
                        {"outputs", {{"report", a.out}}}});
    }
    if (!unconverged.empty()) {
        std::string list;
        for (long s : unconverged) list += (list.empty() ? "" : " ") + std::to_string(s);
        std::fprintf(stderr, "bound-check: fixed point did not converge for seeds: %s\n",
                     list.c_str());
        return kExitVerification;
    }
    std::printf("bound-check: seeds=%ld rows=%ld violations=%ld max_deviation=%s\n", a.seeds,
                rows, violations, dce::fmt_g6(max_dev).c_str());
    return violations == 0 ? 0 : kExitVerification;
}

struct SweepArgs {
    std::string param;
    std::vector<double> values;
    std::string config_path;
    std::string dataset_path;
    std::string out;
};

int run_sweep(const SweepArgs& a) {
    if (a.values.size() < 2) throw dce::ConfigError("--values needs at least two entries");
    dce::OfflineDataset data = dce::load_dataset(a.dataset_path);
    dce::TrainConfig base;
    if (!a.config_path.empty()) {
        std::ifstream in(a.config_path);
        if (!in) throw dce::IoError("cannot open config file " + a.config_path);
        base = dce::parse_config(in);
    }
    std::unique_ptr<dce::ContinuousEnv> env = guess_env(data.state_dim, data.action_dim);

    std::string csv = "swept_" + a.param + "," + dce::metrics_csv_header() + "\n";
    std::vector<double> failed;
    for (double value : a.values) {
        dce::TrainConfig cfg = base;
        if (a.param == "beta") {
            cfg.beta_schedule = dce::BetaSchedule{value, value, 0.0, cfg.beta_schedule.interval_epochs};
        } else {
            cfg.alpha_mode = dce::AlphaMode::fixed;
            cfg.alpha_value = value;
        }
        dce::validate_config(cfg);
        try {
            dce::TrainResult result = dce::train(cfg, data, env.get());
            for (const dce::MetricsRow& row : result.metrics)
                csv += dce::fmt_g6(value) + "," + dce::metrics_csv_line(row) + "\n";
            if (!result.metrics.empty()) {
                const dce::MetricsRow& last = result.metrics.back();
                std::printf("sweep %s=%s: final alpha %s", a.param.c_str(),
                            dce::fmt_g6(value).c_str(), dce::fmt_g6(last.alpha).c_str());
                if (env)
                    std::printf(", normalized_score %s",
                                dce::fmt_g6(last.normalized_score).c_str());
                std::printf("\n");
            }
        } catch (const dce::NumericError& e) {
            std::fprintf(stderr, "sweep %s=%s failed: %s\n", a.param.c_str(),
                         dce::fmt_g6(value).c_str(), e.what());
            failed.push_back(value);
        }
    }
    write_text_file(a.out, csv);
    json values_json = json::array();
    for (double v : a.values) values_json.push_back(v);
    write_manifest(a.out + ".manifest.json",
                   {{"subcommand", "sweep"},
                    {"args", {{"param", a.param}, {"values", values_json}}},
                    {"config", config_json(base)},
                    {"seed", base.seed},
                    {"inputs",
                     {{"dataset", a.dataset_path},
                      {"config_file",
                       a.config_path.empty() ? json(nullptr) : json(a.config_path)}}},
                    {"outputs", {{"merged", a.out}}}});
    return failed.empty() ? 0 : kExitNumeric;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const dce::ConvergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitVerification;
    } catch (const dce::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const dce::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Offline RL engine with doubly conservative value estimation"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate an offline dataset");
    gen_cmd->add_option("--env", gen.env, "Environment name (point1d, point2d)")->required();
    gen_cmd->add_option("--tier", gen.tier, "Behavior tier (random, medium, expert, mixed)")
        ->required();
    gen_cmd->add_option("--n", gen.n, "Number of transitions")->required();
    gen_cmd->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output dataset path")->required();

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "Train on an offline dataset");
    train_cmd->add_option("--config", train.config_path, "Config file (key = value lines)");
    train_cmd->add_option("--dataset", train.dataset_path, "Dataset path")->required();
    train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->required();
    train_cmd->add_option("--env", train.env_name,
                          "Evaluation environment (default: inferred from dataset dimensions)");
    train_cmd->add_option("--set", train.sets, "Override a config key (key=value, repeatable)");
    train_cmd->add_option("--beta", train.beta,
                          "Override the penalty schedule (value or start:end:step[:interval])");
    train_cmd->add_option("--critic-mode", train.critic_mode,
                          "Override critic_mode (dce, no_penalty, cql_variant, no_v)");
    train_cmd->add_option("--alpha-mode", train.alpha_mode,
                          "Override alpha_mode (auto or fixed(value))");
    train_cmd->add_option("--epochs", train.epochs, "Override epochs");
    train_cmd->add_option("--seed", train.seed, "Override seed");

    EvalArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint deterministically");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint path")->required();
    eval_cmd->add_option("--env", eval.env, "Environment name")->required();
    eval_cmd->add_option("--episodes", eval.episodes, "Evaluation episodes")
        ->capture_default_str();
    eval_cmd->add_option("--seed", eval.seed, "RNG seed for episode starts")
        ->capture_default_str();

    VerifyArgs verify;
    CLI::App* verify_cmd = app.add_subcommand(
        "verify-tabular", "Check the predicted conservatism offset on random MDPs");
    verify_cmd->add_option("--states", verify.states, "States per MDP")->capture_default_str();
    verify_cmd->add_option("--actions", verify.actions, "Actions per MDP")
        ->capture_default_str();
    verify_cmd->add_option("--gamma", verify.gamma, "Discount factor")->capture_default_str();
    verify_cmd->add_option("--beta", verify.beta, "Penalty coefficient")->capture_default_str();
    verify_cmd->add_option("--seeds", verify.seeds, "Number of random MDPs")
        ->capture_default_str();
    verify_cmd->add_option("--out", verify.out, "Pair-level CSV report path");

    BoundArgs bound;
    CLI::App* bound_cmd = app.add_subcommand(
        "bound-check", "Check the finite-sample deviation bound on random MDPs");
    bound_cmd->add_option("--states", bound.states, "States per MDP")->capture_default_str();
    bound_cmd->add_option("--actions", bound.actions, "Actions per MDP")->capture_default_str();
    bound_cmd->add_option("--samples", bound.samples, "Transitions sampled per seed")
        ->capture_default_str();
    bound_cmd->add_option("--beta", bound.beta, "Penalty coefficient")->capture_default_str();
    bound_cmd->add_option("--c-r", bound.c_r, "Reward concentration constant")
        ->capture_default_str();
    bound_cmd->add_option("--c-t", bound.c_t, "Transition concentration constant")
        ->capture_default_str();
    bound_cmd->add_option("--r-max", bound.r_max, "Reward magnitude bound")
        ->capture_default_str();
    bound_cmd->add_option("--gamma", bound.gamma, "Discount factor")->capture_default_str();
    bound_cmd->add_option("--seeds", bound.seeds, "Number of random MDPs")
        ->capture_default_str();
    bound_cmd->add_option("--out", bound.out, "Pair-level CSV report path");

    SweepArgs sweep;
    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "Train once per value of a swept parameter");
    sweep_cmd->add_option("--param", sweep.param, "Parameter to sweep")
        ->required()
        ->check(CLI::IsMember({"beta", "alpha"}));
    sweep_cmd->add_option("--values", sweep.values, "Comma-separated values")
        ->required()
        ->delimiter(',');
    sweep_cmd->add_option("--config", sweep.config_path, "Config file shared by all runs");
    sweep_cmd->add_option("--dataset", sweep.dataset_path, "Dataset path")->required();
    sweep_cmd->add_option("--out", sweep.out, "Merged CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    if (*gen_cmd) return guarded([&] { return run_gen_data(gen); });
    if (*train_cmd) return guarded([&] { return run_train(train); });
    if (*eval_cmd) return guarded([&] { return run_eval(eval); });
    if (*verify_cmd) return guarded([&] { return run_verify_tabular(verify); });
    if (*bound_cmd) return guarded([&] { return run_bound_check(bound); });
    if (*sweep_cmd) return guarded([&] { return run_sweep(sweep); });
    return kExitUsage;
}
