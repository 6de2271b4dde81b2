#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crsae/cli/commands.hpp"
#include "crsae/cli/config.hpp"

using namespace crsae::cli;
namespace fs = std::filesystem;

namespace {

ExperimentConfig config_from(const std::string& path) {
    return path.empty() ? ExperimentConfig{} : load_config(path);
}

std::array<std::size_t, 4> parse_shape(const std::string& s) {
    std::vector<std::size_t> v;
    std::istringstream in(s);
    for (std::string part; std::getline(in, part, ',');) v.push_back(std::stoul(part));
    if (v.size() != 4) throw std::invalid_argument("--shape expects C,K,W,T, got '" + s + "'");
    return {v[0], v[1], v[2], v[3]};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Convolutional dictionary learning with an unrolled FISTA auto-encoder"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::string arch;

    auto* sim = app.add_subcommand("simulate", "simulate a dataset of windows and ground truth");
    sim->add_option("--config", config_path, "JSON experiment config");
    sim->add_option("--out", out_dir, "output directory")->required();
    sim->add_option("--seed", seed, "simulation seed (overrides the config)");

    std::string data_dir;
    std::string init;
    std::optional<double> lr;
    auto* tr = app.add_subcommand("train", "train a dictionary on a simulated dataset");
    tr->add_option("--config", config_path, "JSON experiment config");
    tr->add_option("--data", data_dir, "dataset directory written by simulate")->required();
    tr->add_option("--out", out_dir, "output directory")->required();
    tr->add_option("--seed", seed, "training seed (shuffling and init)");
    tr->add_option("--arch", arch, "crsae or lcsc3")->check(CLI::IsMember({"crsae", "lcsc3"}));
    tr->add_option("--init", init, "perturbed, true or random")->check(CLI::IsMember({"perturbed", "true", "random"}));
    tr->add_option("--lr", lr, "learning rate");
    tr->add_option("--jobs", jobs, "worker threads for batch gradients (env CRSAE_JOBS)");

    std::optional<std::size_t> max_cells;
    auto* sw = app.add_subcommand("sweep", "simulate and train over an SNR x seed grid");
    sw->add_option("--config", config_path, "JSON experiment config");
    sw->add_option("--out", out_dir, "output directory (resumable)")->required();
    sw->add_option("--seed", seed, "run a single seed instead of the configured list");
    sw->add_option("--arch", arch, "crsae or lcsc3")->check(CLI::IsMember({"crsae", "lcsc3"}));
    sw->add_option("--jobs", jobs, "cells run in parallel (env CRSAE_JOBS)");
    sw->add_option("--max-cells", max_cells, "stop after this many new cells");

    std::vector<std::string> shapes;
    bool corrupt = false;
    auto* gc = app.add_subcommand("gradcheck", "compare back-propagation with finite differences");
    gc->add_option("--config", config_path, "JSON experiment config");
    gc->add_option("--seed", seed, "instance seed");
    gc->add_option("--shape", shapes, "C,K,W,T (repeatable)");
    gc->add_flag("--corrupt-gradient", corrupt, "perturb the hand gradient (negative control)")->group("");

    std::string learned_path, truth_path;
    int max_shift = 0;
    auto* ev = app.add_subcommand("eval", "match learned filters against the truth");
    ev->add_option("--learned", learned_path, "learned filters tensor")->required();
    ev->add_option("--truth", truth_path, "true filters tensor")->required();
    ev->add_option("--out", out_dir, "output directory")->required();
    ev->add_option("--max-shift", max_shift, "circular shift search range")->check(CLI::NonNegativeNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            auto cfg = config_from(config_path);
            if (seed) cfg.simulation.seed = *seed;
            return cmd_simulate(cfg, out_dir, std::cout);
        }
        if (tr->parsed()) {
            auto cfg = config_from(config_path);
            if (seed) cfg.training.train.seed = *seed;
            if (!arch.empty()) cfg.training.arch = parse_arch(arch);
            if (!init.empty()) cfg.training.init = parse_init(init);
            if (lr) {
                cfg.training.train.learning_rate = *lr;
                cfg.training.lr_range_test = false;
            }
            cfg.training.train.validate();
            return cmd_train(cfg, data_dir, out_dir, resolve_jobs(jobs), std::cout);
        }
        if (sw->parsed()) {
            auto cfg = config_from(config_path);
            if (seed) cfg.sweep.seeds = {*seed};
            if (!arch.empty()) cfg.training.arch = parse_arch(arch);
            return cmd_sweep(cfg, out_dir, resolve_jobs(jobs), max_cells, std::cout);
        }
        if (gc->parsed()) {
            auto cfg = config_from(config_path);
            if (!shapes.empty()) {
                cfg.gradcheck.shapes.clear();
                for (const auto& s : shapes) cfg.gradcheck.shapes.push_back(parse_shape(s));
            }
            return cmd_gradcheck(cfg.gradcheck, seed.value_or(0), corrupt, std::cout);
        }
        if (ev->parsed()) return cmd_eval(learned_path, truth_path, out_dir, max_shift, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
