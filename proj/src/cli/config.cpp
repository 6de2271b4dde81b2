#include "crsae/cli/config.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "crsae/cli/io.hpp"
#include "json.hpp"

namespace crsae::cli {

using nlohmann::json;

namespace {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void reject_unknown(const json& obj, const std::string& where, std::set<std::string> known) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (!known.contains(key)) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <class T>
void read_opt(const json& obj, const char* key, std::optional<T>& out, const std::string& where) {
    if (!obj.contains(key)) return;
    if (obj.at(key).is_null()) {
        out.reset();
        return;
    }
    T v{};
    read(obj, key, v, where);
    out = v;
}

NoiseConvention parse_noise(const std::string& s) {
    if (s == "per_sample") return NoiseConvention::per_sample;
    if (s == "rms") return NoiseConvention::rms;
    throw ConfigError("noise convention must be 'per_sample' or 'rms', got '" + s + "'");
}

std::string noise_name(NoiseConvention n) { return n == NoiseConvention::per_sample ? "per_sample" : "rms"; }

void parse_simulation(const json& j, SimConfig& s) {
    const std::string w = "simulation";
    reject_unknown(j, w, {"C", "K", "fs", "T0", "rate", "amplitudes", "snr_db", "noise_sigma",
                          "window", "electrodes", "seed", "correlation_range"});
    read(j, "C", s.C, w);
    read(j, "K", s.K, w);
    read(j, "fs", s.fs, w);
    read(j, "T0", s.T0, w);
    read(j, "rate", s.rate, w);
    read(j, "snr_db", s.snr_db, w);
    read_opt(j, "noise_sigma", s.noise_sigma, w);
    read(j, "window", s.window, w);
    read(j, "electrodes", s.electrodes, w);
    read(j, "seed", s.seed, w);
    read(j, "correlation_range", s.correlation_range, w);
    if (j.contains("amplitudes")) {
        std::vector<std::pair<double, double>> amps;
        read(j, "amplitudes", amps, w);
        s.amplitudes.clear();
        for (auto [m, sd] : amps) s.amplitudes.push_back({m, sd});
    }
}

void parse_train(const json& j, TrainOptions& t) {
    const std::string w = "train";
    reject_unknown(j, w, {"batch_size", "learning_rate", "max_epochs", "patience", "lambda",
                          "seed", "adam_beta1", "adam_beta2", "adam_eps", "lambda_decay",
                          "recompute_lipschitz", "arch", "init", "init_err_range",
                          "lr_range_test", "lcsc"});
    auto& c = t.train;
    read(j, "batch_size", c.batch_size, w);
    read(j, "learning_rate", c.learning_rate, w);
    read(j, "max_epochs", c.max_epochs, w);
    read(j, "patience", c.patience, w);
    read(j, "seed", c.seed, w);
    read(j, "adam_beta1", c.adam.beta1, w);
    read(j, "adam_beta2", c.adam.beta2, w);
    read(j, "adam_eps", c.adam.eps, w);
    read(j, "lambda_decay", c.lambda_decay, w);
    read(j, "recompute_lipschitz", c.recompute_lipschitz, w);
    read(j, "init_err_range", t.init_err_range, w);
    read(j, "lr_range_test", t.lr_range_test, w);
    if (j.contains("arch")) t.arch = parse_arch(j.at("arch").get<std::string>());
    if (j.contains("init")) t.init = parse_init(j.at("init").get<std::string>());
    if (j.contains("lambda")) {
        const auto& l = j.at("lambda");
        reject_unknown(l, "train.lambda", {"policy", "value", "noise"});
        if (l.contains("policy")) {
            const auto p = l.at("policy").get<std::string>();
            if (p == "fixed") {
                c.lambda_policy.kind = LambdaPolicy::Kind::fixed;
            } else if (p == "heuristic") {
                c.lambda_policy.kind = LambdaPolicy::Kind::heuristic;
            } else {
                throw ConfigError("train.lambda.policy must be 'fixed' or 'heuristic'");
            }
        }
        read(l, "value", c.lambda_policy.value, "train.lambda");
        if (l.contains("noise")) c.lambda_policy.noise = parse_noise(l.at("noise").get<std::string>());
    }
    if (j.contains("lcsc")) {
        const auto& l = j.at("lcsc");
        reject_unknown(l, "train.lcsc", {"iterations", "trainable_lambda", "tied"});
        read(l, "iterations", t.lcsc.iterations, "train.lcsc");
        read(l, "trainable_lambda", t.lcsc.trainable_lambda, "train.lcsc");
        read(l, "tied", t.lcsc.tied, "train.lcsc");
    }
}

}  // namespace

std::string arch_name(Arch a) { return a == Arch::crsae ? "crsae" : "lcsc3"; }

Arch parse_arch(const std::string& s) {
    if (s == "crsae") return Arch::crsae;
    if (s == "lcsc3") return Arch::lcsc3;
    throw ConfigError("arch must be 'crsae' or 'lcsc3', got '" + s + "'");
}

std::string init_name(InitKind k) {
    switch (k) {
        case InitKind::perturbed: return "perturbed";
        case InitKind::truth: return "true";
        case InitKind::random: return "random";
    }
    return "?";
}

InitKind parse_init(const std::string& s) {
    if (s == "perturbed") return InitKind::perturbed;
    if (s == "true") return InitKind::truth;
    if (s == "random") return InitKind::random;
    throw ConfigError("init must be 'perturbed', 'true' or 'random', got '" + s + "'");
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, "config", {"simulation", "split", "fista", "train", "sweep", "gradcheck"});

    ExperimentConfig cfg;
    if (j.contains("simulation")) parse_simulation(j.at("simulation"), cfg.simulation);
    if (j.contains("split")) {
        const auto& s = j.at("split");
        reject_unknown(s, "split", {"train", "val", "test"});
        read_opt(s, "train", cfg.split.train, "split");
        read_opt(s, "val", cfg.split.val, "split");
        read_opt(s, "test", cfg.split.test, "split");
    }
    if (j.contains("fista")) {
        const auto& f = j.at("fista");
        reject_unknown(f, "fista", {"T", "momentum", "L"});
        read(f, "T", cfg.fista.T, "fista");
        read(f, "momentum", cfg.fista.momentum, "fista");
        read_opt(f, "L", cfg.fista.L, "fista");
    }
    if (j.contains("train")) parse_train(j.at("train"), cfg.training);
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        reject_unknown(s, "sweep", {"snr_db", "seeds", "max_shift"});
        read(s, "snr_db", cfg.sweep.snr_db, "sweep");
        read(s, "seeds", cfg.sweep.seeds, "sweep");
        read(s, "max_shift", cfg.sweep.max_shift, "sweep");
    }
    if (j.contains("gradcheck")) {
        const auto& g = j.at("gradcheck");
        reject_unknown(g, "gradcheck", {"shapes", "step", "tolerance", "kink_margin"});
        read(g, "shapes", cfg.gradcheck.shapes, "gradcheck");
        read(g, "step", cfg.gradcheck.step, "gradcheck");
        read(g, "tolerance", cfg.gradcheck.tolerance, "gradcheck");
        read(g, "kink_margin", cfg.gradcheck.kink_margin, "gradcheck");
    }

    cfg.simulation.validate();
    cfg.training.train.validate();
    if (cfg.fista.T < 1) throw ConfigError("fista.T must be >= 1");
    if (cfg.fista.L && !(*cfg.fista.L > 0.0)) throw ConfigError("fista.L must be > 0");
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_file(path));
}

std::string to_json(const ExperimentConfig& cfg) {
    const auto& s = cfg.simulation;
    json amps = json::array();
    for (const auto& a : s.amplitudes) amps.push_back({a.mean, a.stddev});
    json sim = {{"C", s.C},
                {"K", s.K},
                {"fs", s.fs},
                {"T0", s.T0},
                {"rate", s.rate},
                {"amplitudes", amps},
                {"snr_db", s.snr_db},
                {"noise_sigma", s.noise_sigma ? json(*s.noise_sigma) : json(nullptr)},
                {"window", s.window},
                {"electrodes", s.electrodes},
                {"seed", s.seed},
                {"correlation_range", {s.correlation_range.first, s.correlation_range.second}}};
    auto opt = [](const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); };
    const auto& t = cfg.training.train;
    json train = {
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"max_epochs", t.max_epochs},
        {"patience", t.patience},
        {"lambda",
         {{"policy", t.lambda_policy.kind == LambdaPolicy::Kind::fixed ? "fixed" : "heuristic"},
          {"value", t.lambda_policy.value},
          {"noise", noise_name(t.lambda_policy.noise)}}},
        {"seed", t.seed},
        {"adam_beta1", t.adam.beta1},
        {"adam_beta2", t.adam.beta2},
        {"adam_eps", t.adam.eps},
        {"lambda_decay", t.lambda_decay},
        {"recompute_lipschitz", t.recompute_lipschitz},
        {"arch", arch_name(cfg.training.arch)},
        {"init", init_name(cfg.training.init)},
        {"init_err_range", {cfg.training.init_err_range.first, cfg.training.init_err_range.second}},
        {"lr_range_test", cfg.training.lr_range_test},
        {"lcsc",
         {{"iterations", cfg.training.lcsc.iterations},
          {"trainable_lambda", cfg.training.lcsc.trainable_lambda},
          {"tied", cfg.training.lcsc.tied}}}};
    json j = {
        {"simulation", sim},
        {"split", {{"train", opt(cfg.split.train)}, {"val", opt(cfg.split.val)}, {"test", opt(cfg.split.test)}}},
        {"fista", {{"T", cfg.fista.T}, {"momentum", cfg.fista.momentum}, {"L", cfg.fista.L ? json(*cfg.fista.L) : json(nullptr)}}},
        {"train", train},
        {"sweep", {{"snr_db", cfg.sweep.snr_db}, {"seeds", cfg.sweep.seeds}, {"max_shift", cfg.sweep.max_shift}}},
        {"gradcheck",
         {{"shapes", cfg.gradcheck.shapes},
          {"step", cfg.gradcheck.step},
          {"tolerance", cfg.gradcheck.tolerance},
          {"kink_margin", cfg.gradcheck.kink_margin}}}};
    return j.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(to_json(cfg))); }

Split resolve_split(const SplitSizes& sizes, std::size_t windows) {
    auto scaled = [&](double share) {
        return static_cast<std::size_t>(std::llround(static_cast<double>(windows) * share / 720.0));
    };
    Split s;
    s.test = sizes.test.value_or(scaled(20));
    s.val = sizes.val.value_or(scaled(70));
    if (sizes.train) {
        s.train = *sizes.train;
    } else {
        if (s.test + s.val >= windows) {
            throw std::invalid_argument("split leaves no training windows");
        }
        s.train = windows - s.val - s.test;
    }
    if (s.train + s.val + s.test > windows) {
        throw std::invalid_argument("split sizes " + std::to_string(s.train) + "/" +
                                    std::to_string(s.val) + "/" + std::to_string(s.test) +
                                    " exceed the " + std::to_string(windows) + " windows available");
    }
    if (s.train == 0 || s.val == 0) throw std::invalid_argument("train and val splits must be non-empty");
    return s;
}

}  // namespace crsae::cli
