#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dce/common.hpp"

namespace dce {

/// Piecewise-constant penalty schedule: the value moves from start toward
/// end by `step` once per interval and never leaves the band they span.
struct BetaSchedule {
    double start = 0.0;
    double end = 0.0;
    double step = 0.0;
    long interval_epochs = 50;
};

inline double beta_at(const BetaSchedule& s, long epoch) {
    if (epoch < 0) throw ConfigError("beta_at: epoch must be nonnegative");
    if (s.interval_epochs < 1) throw ConfigError("beta schedule interval must be at least 1");
    double value = s.start - static_cast<double>(epoch / s.interval_epochs) * s.step;
    double lo = std::min(s.start, s.end), hi = std::max(s.start, s.end);
    return std::min(std::max(value, lo), hi);
}

enum class CriticMode { dce, no_penalty, cql_variant, no_v };
enum class AlphaMode { auto_tune, fixed };

inline const char* critic_mode_name(CriticMode m) {
    switch (m) {
        case CriticMode::dce: return "dce";
        case CriticMode::no_penalty: return "no_penalty";
        case CriticMode::cql_variant: return "cql_variant";
        case CriticMode::no_v: return "no_v";
    }
    throw ConfigError("unknown critic mode");
}

inline CriticMode critic_mode_from_name(const std::string& name) {
    for (auto m : {CriticMode::dce, CriticMode::no_penalty, CriticMode::cql_variant,
                   CriticMode::no_v})
        if (name == critic_mode_name(m)) return m;
    throw ConfigError("unknown critic_mode '" + name +
                      "'; valid: dce, no_penalty, cql_variant, no_v");
}

struct TrainConfig {
    double tau = 0.7;
    double gamma = 0.99;
    double upsilon = 0.005;
    double lr_q = 3e-4;
    double lr_v = 3e-4;
    double lr_pi = 3e-4;
    AlphaMode alpha_mode = AlphaMode::auto_tune;
    double alpha_value = 1.0;  // used by alpha_mode=fixed
    BetaSchedule beta_schedule;
    long epochs = 100;
    long steps_per_epoch = 100;
    long batch_size = 256;
    CriticMode critic_mode = CriticMode::dce;
    long eval_episodes = 4;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden = {256, 256};
    long penalty_samples = 1;
    bool twin_q = false;
    bool phased = false;
};

inline void validate_config(const TrainConfig& c) {
    auto in_unit = [](double x) { return x > 0.0 && x < 1.0; };
    if (!in_unit(c.tau)) throw ConfigError("tau must be in (0,1)");
    if (!in_unit(c.gamma)) throw ConfigError("gamma must be in (0,1)");
    if (!in_unit(c.upsilon) && c.upsilon != 1.0) throw ConfigError("upsilon must be in (0,1]");
    for (double lr : {c.lr_q, c.lr_v, c.lr_pi})
        if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (c.alpha_mode == AlphaMode::fixed && !(c.alpha_value >= 0.0))
        throw ConfigError("fixed alpha must be nonnegative");
    if (c.beta_schedule.interval_epochs < 1)
        throw ConfigError("beta schedule interval must be at least 1");
    if (c.beta_schedule.start < 0.0 || c.beta_schedule.end < 0.0)
        throw ConfigError("beta must be nonnegative");
    if (c.epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (c.steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be nonnegative");
    if (c.batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (c.eval_episodes < 1) throw ConfigError("eval_episodes must be at least 1");
    if (c.hidden.empty()) throw ConfigError("hidden layer list must not be empty");
    if (c.penalty_samples < 1) throw ConfigError("penalty_samples must be at least 1");
}

namespace cfgimpl {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value '" + v + "' for " + key);
    }
}

inline long parse_long(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad integer value '" + v + "' for " + key);
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean value '" + v + "' for " + key + "; use true/false");
}

}  // namespace cfgimpl

/// Parse "start:end:step:interval" (or a bare number for a constant
/// schedule; interval optional and defaulting to 50).
inline BetaSchedule parse_beta_schedule(const std::string& text) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : text) {
        if (ch == ':') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    parts.push_back(cur);
    BetaSchedule s;
    if (parts.size() == 1) {
        s.start = s.end = cfgimpl::parse_real("beta_schedule", parts[0]);
        s.step = 0.0;
        return s;
    }
    if (parts.size() != 3 && parts.size() != 4)
        throw ConfigError("beta_schedule must be 'value' or 'start:end:step[:interval]', got '" +
                          text + "'");
    s.start = cfgimpl::parse_real("beta_schedule", parts[0]);
    s.end = cfgimpl::parse_real("beta_schedule", parts[1]);
    s.step = cfgimpl::parse_real("beta_schedule", parts[2]);
    if (parts.size() == 4) s.interval_epochs = cfgimpl::parse_long("beta_schedule", parts[3]);
    return s;
}

inline std::string beta_schedule_to_string(const BetaSchedule& s) {
    std::ostringstream out;
    out << fmt_exact(s.start) << ":" << fmt_exact(s.end) << ":" << fmt_exact(s.step) << ":"
        << s.interval_epochs;
    return out.str();
}

inline AlphaMode parse_alpha_mode(const std::string& text, double& value_out) {
    if (text == "auto") return AlphaMode::auto_tune;
    if (text.rfind("fixed(", 0) == 0 && text.back() == ')') {
        value_out = cfgimpl::parse_real("alpha_mode", text.substr(6, text.size() - 7));
        return AlphaMode::fixed;
    }
    throw ConfigError("bad alpha_mode '" + text + "'; use auto or fixed(value)");
}

inline std::vector<std::size_t> parse_hidden(const std::string& text) {
    std::vector<std::size_t> out;
    std::string cur;
    auto flush = [&]() {
        if (cur.empty()) throw ConfigError("bad hidden layer list '" + text + "'");
        long v = cfgimpl::parse_long("hidden", cur);
        if (v < 1) throw ConfigError("hidden layer sizes must be positive");
        out.push_back(static_cast<std::size_t>(v));
        cur.clear();
    };
    for (char ch : text) {
        if (ch == ',')
            flush();
        else
            cur += ch;
    }
    flush();
    return out;
}

/// Apply one key=value assignment; both the config-file reader and CLI
/// overrides funnel through here so they cannot drift apart.
inline void set_config_key(TrainConfig& c, const std::string& key, const std::string& value) {
    if (key == "tau")
        c.tau = cfgimpl::parse_real(key, value);
    else if (key == "gamma")
        c.gamma = cfgimpl::parse_real(key, value);
    else if (key == "upsilon")
        c.upsilon = cfgimpl::parse_real(key, value);
    else if (key == "lr_q")
        c.lr_q = cfgimpl::parse_real(key, value);
    else if (key == "lr_v")
        c.lr_v = cfgimpl::parse_real(key, value);
    else if (key == "lr_pi")
        c.lr_pi = cfgimpl::parse_real(key, value);
    else if (key == "alpha_mode")
        c.alpha_mode = parse_alpha_mode(value, c.alpha_value);
    else if (key == "beta_schedule")
        c.beta_schedule = parse_beta_schedule(value);
    else if (key == "epochs")
        c.epochs = cfgimpl::parse_long(key, value);
    else if (key == "steps_per_epoch")
        c.steps_per_epoch = cfgimpl::parse_long(key, value);
    else if (key == "batch_size")
        c.batch_size = cfgimpl::parse_long(key, value);
    else if (key == "critic_mode")
        c.critic_mode = critic_mode_from_name(value);
    else if (key == "eval_episodes")
        c.eval_episodes = cfgimpl::parse_long(key, value);
    else if (key == "seed")
        c.seed = static_cast<std::uint64_t>(cfgimpl::parse_long(key, value));
    else if (key == "hidden")
        c.hidden = parse_hidden(value);
    else if (key == "penalty_samples")
        c.penalty_samples = cfgimpl::parse_long(key, value);
    else if (key == "twin_q")
        c.twin_q = cfgimpl::parse_bool(key, value);
    else if (key == "phased")
        c.phased = cfgimpl::parse_bool(key, value);
    else
        throw ConfigError("unknown config key '" + key + "'");
}

/// Flat key = value text; blank lines and #-comments allowed.
inline TrainConfig parse_config(std::istream& in) {
    TrainConfig c;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = cfgimpl::trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + " is not key = value");
        std::string key = cfgimpl::trim(t.substr(0, eq));
        std::string value = cfgimpl::trim(t.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config line " + std::to_string(line_no) + " is not key = value");
        set_config_key(c, key, value);
    }
    return c;
}

inline TrainConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

/// The resolved configuration as ordered key/value pairs, in config-file
/// syntax, so manifests and round trips share one rendering.
inline std::vector<std::pair<std::string, std::string>> config_items(const TrainConfig& c) {
    std::vector<std::pair<std::string, std::string>> items;
    items.emplace_back("tau", fmt_exact(c.tau));
    items.emplace_back("gamma", fmt_exact(c.gamma));
    items.emplace_back("upsilon", fmt_exact(c.upsilon));
    items.emplace_back("lr_q", fmt_exact(c.lr_q));
    items.emplace_back("lr_v", fmt_exact(c.lr_v));
    items.emplace_back("lr_pi", fmt_exact(c.lr_pi));
    items.emplace_back("alpha_mode", c.alpha_mode == AlphaMode::auto_tune
                                         ? std::string("auto")
                                         : "fixed(" + fmt_exact(c.alpha_value) + ")");
    items.emplace_back("beta_schedule", beta_schedule_to_string(c.beta_schedule));
    items.emplace_back("epochs", std::to_string(c.epochs));
    items.emplace_back("steps_per_epoch", std::to_string(c.steps_per_epoch));
    items.emplace_back("batch_size", std::to_string(c.batch_size));
    items.emplace_back("critic_mode", critic_mode_name(c.critic_mode));
    items.emplace_back("eval_episodes", std::to_string(c.eval_episodes));
    items.emplace_back("seed", std::to_string(c.seed));
    std::string hidden;
    for (std::size_t i = 0; i < c.hidden.size(); ++i)
        hidden += (i ? "," : "") + std::to_string(c.hidden[i]);
    items.emplace_back("hidden", hidden);
    items.emplace_back("penalty_samples", std::to_string(c.penalty_samples));
    items.emplace_back("twin_q", c.twin_q ? "true" : "false");
    items.emplace_back("phased", c.phased ? "true" : "false");
    return items;
}

inline std::string config_to_string(const TrainConfig& c) {
    std::string out;
    for (const auto& [k, v] : config_items(c)) out += k + " = " + v + "\n";
    return out;
}

}  // namespace dce
