#include "crsae/cli/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <mutex>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "crsae/cli/io.hpp"
#include "crsae/conv_ops.hpp"
#include "crsae/gradient.hpp"
#include "crsae/parallel.hpp"
#include "json.hpp"

namespace crsae::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTool = "crsae 0.1.0";

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<SignalWindow> windows_of(const SplitData& s) { return s.windows; }

}  // namespace

unsigned resolve_jobs(std::optional<unsigned> flag) {
    if (flag) {
        if (*flag < 1) throw std::invalid_argument("--jobs must be >= 1");
        return *flag;
    }
    if (const char* env = std::getenv("CRSAE_JOBS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) {
            throw std::invalid_argument("CRSAE_JOBS must be a positive integer, got '" + std::string(env) + "'");
        }
        return static_cast<unsigned>(v);
    }
    return 1;
}

FilterBank initial_filters(const FilterBank& truth, const TrainOptions& opts) {
    std::seed_seq seq{opts.train.seed, std::uint64_t{3}};
    std::mt19937_64 rng(seq);
    switch (opts.init) {
        case InitKind::truth:
            return truth;
        case InitKind::perturbed:
            return init_perturbed_dictionary(truth, opts.init_err_range, rng);
        case InitKind::random: {
            std::normal_distribution<double> normal(0.0, 1.0);
            Matrix m(truth.count(), truth.length());
            for (std::size_t c = 0; c < m.rows(); ++c) {
                double n = 0.0;
                while (n == 0.0) {
                    for (double& v : m.row(c)) v = normal(rng);
                    n = std::sqrt(squared_norm(m.row(c)));
                }
                for (double& v : m.row(c)) v /= n;
            }
            return project_unit_ball(FilterBank(std::move(m)));
        }
    }
    throw std::logic_error("unknown init kind");
}

RunResult run_training(const Dataset& ds, const ExperimentConfig& cfg, unsigned threads) {
    const auto& opts = cfg.training;
    RunResult out{initial_filters(ds.truth, opts), {}, 0.0, 0.0, opts.train.learning_rate, {}};
    const auto train_windows = windows_of(ds.train);
    const auto val_windows = windows_of(ds.val);

    // Noise estimate n_j = y_j - H_0 x_j: observation noise plus the error of
    // the starting dictionary, with the true codes of the training split.
    out.lambda = resolve_lambda(opts.train.lambda_policy, train_windows, ds.train.codes, out.init);
    out.L = cfg.fista.L ? *cfg.fista.L
                        : estimate_lipschitz(project_unit_ball(out.init), ds.window_length).value;

    FistaConfig f;
    f.lambda = out.lambda;
    f.L = out.L;
    f.T = cfg.fista.T;
    f.momentum = cfg.fista.momentum;

    TrainConfig tc = opts.train;
    tc.threads = threads;
    if (opts.lr_range_test) {
        const auto grid = default_lr_grid();
        if (opts.arch == Arch::crsae) {
            out.lr_range = lr_range_test(train_windows, val_windows, out.init, f, tc, grid);
        } else {
            out.lr_range = lr_range_test(
                [&](const TrainConfig& one) {
                    return train_lcsc_baseline(train_windows, val_windows, out.init, f, one, opts.lcsc);
                },
                tc, grid);
        }
        out.learning_rate = out.lr_range->recommended;
        tc.learning_rate = out.learning_rate;
    }
    if (opts.arch == Arch::crsae) {
        out.report = train(train_windows, val_windows, out.init, f, tc, ds.truth);
    } else {
        out.report = train_lcsc_baseline(train_windows, val_windows, out.init, f, tc, opts.lcsc, ds.truth);
    }
    return out;
}

std::string history_csv(const TrainReport& report, std::size_t C) {
    std::ostringstream s;
    s << "epoch,train_loss,val_loss";
    for (std::size_t c = 1; c <= C; ++c) s << ",err_" << c;
    s << '\n';
    for (const auto& e : report.history) {
        s << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss);
        for (std::size_t c = 0; c < C; ++c) {
            s << ',';
            if (c < e.err.size()) s << format_double(e.err[c]);
        }
        s << '\n';
    }
    return s.str();
}

int cmd_simulate(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const auto ds = build_dataset(cfg);
    save_dataset(out, ds, cfg);
    log << "simulated " << ds.train.windows.size() + ds.val.windows.size() + ds.test.windows.size()
        << " windows of " << ds.window_length << " samples (train " << ds.train.windows.size()
        << ", val " << ds.val.windows.size() << ", test " << ds.test.windows.size() << ")\n";
    for (std::size_t e = 0; e < ds.achieved_snr_db.size(); ++e) {
        log << "electrode " << e << ": " << ds.events_per_electrode[e] << " events, SNR "
            << ds.achieved_snr_db[e] << " dB\n";
    }
    log << "wrote " << out.string() << '\n';
    return 0;
}

int cmd_train(const ExperimentConfig& cfg, const fs::path& data, const fs::path& out,
              unsigned jobs, std::ostream& log) {
    const auto ds = load_dataset(data);
    const auto run = run_training(ds, cfg, jobs);
    const auto& rep = run.report;
    const std::size_t C = ds.truth.count();

    fs::create_directories(out);
    write_tensor(out / "filters.tensor", to_tensor(rep.filters.matrix()));
    write_tensor(out / "init.tensor", to_tensor(run.init.matrix()));
    if (rep.encoder) write_tensor(out / "encoder.tensor", to_tensor(rep.encoder->matrix()));
    write_file_atomic(out / "history.csv", history_csv(rep, C));
    if (run.lr_range) {
        std::ostringstream s;
        s << "learning_rate,val_drop\n";
        for (std::size_t i = 0; i < run.lr_range->learning_rates.size(); ++i) {
            s << format_double(run.lr_range->learning_rates[i]) << ','
              << format_double(run.lr_range->drops[i]) << '\n';
        }
        write_file_atomic(out / "lr_range.csv", s.str());
    }

    const auto match = match_filters(ds.truth, rep.filters, 0, true);
    json errs = json::array();
    for (const auto& f : match.filters) errs.push_back(f.raw_err);
    json test_loss = nullptr;
    if (!ds.test.windows.empty()) {
        const auto& enc = rep.encoder ? *rep.encoder : rep.filters;
        test_loss = evaluate_loss(ds.test.windows, enc, rep.filters, rep.fista, jobs);
    }
    json manifest = {{"kind", "train"},
                     {"tool", kTool},
                     {"config", json::parse(to_json(cfg))},
                     {"config_hash", config_hash(cfg)},
                     {"dataset_manifest_hash", hex64(fnv1a64(read_file(data / "manifest.json")))},
                     {"arch", arch_name(cfg.training.arch)},
                     {"init", init_name(cfg.training.init)},
                     {"seed", cfg.training.train.seed},
                     {"learning_rate", run.learning_rate},
                     {"lambda", run.lambda},
                     {"lambda_final", rep.fista.lambda},
                     {"L", run.L},
                     {"T", rep.fista.T},
                     {"epochs_run", rep.history.back().epoch},
                     {"best_epoch", rep.best_epoch},
                     {"best_val_loss", rep.best_val_loss},
                     {"test_loss", test_loss},
                     {"recovery_err", errs},
                     {"mean_err", match.raw_mean_err},
                     {"max_err", match.raw_max_err}};
    write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");

    log << arch_name(cfg.training.arch) << ": best epoch " << rep.best_epoch << " of "
        << rep.history.back().epoch << ", val loss " << rep.best_val_loss << ", mean err "
        << match.raw_mean_err << ", max err " << match.raw_max_err << '\n';
    return 0;
}

namespace {

std::string cell_name(double snr, std::uint64_t seed) {
    return "snr_" + format_double(snr) + "_seed_" + std::to_string(seed);
}

struct CellRow {
    std::size_t filter = 0;  // 1-based
    double err = 0.0;
};

std::vector<CellRow> read_cell(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    std::vector<CellRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> parts;
        std::istringstream ls(line);
        for (std::string p; std::getline(ls, p, ',');) parts.push_back(p);
        if (parts.size() != 4) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        rows.push_back({std::stoul(parts[2]), parse_double(parts[3])});
    }
    return rows;
}

}  // namespace

int cmd_sweep(const ExperimentConfig& cfg, const fs::path& out, unsigned jobs,
              std::optional<std::size_t> max_new_cells, std::ostream& log) {
    if (cfg.sweep.snr_db.empty() || cfg.sweep.seeds.empty()) {
        throw std::invalid_argument("sweep needs at least one SNR and one seed");
    }
    fs::create_directories(out / "cells");
    const auto hash = config_hash(cfg);
    const auto manifest_path = out / "manifest.json";
    if (fs::exists(manifest_path)) {
        const auto old = json::parse(read_file(manifest_path));
        if (old.value("config_hash", "") != hash) {
            log << "error: " << out.string() << " holds a sweep with a different config (hash "
                << old.value("config_hash", "?") << ", now " << hash << ")\n";
            return 2;
        }
    }

    struct Cell {
        double snr;
        std::uint64_t seed;
        std::string name;
    };
    std::vector<Cell> cells, pending;
    for (double snr : cfg.sweep.snr_db) {
        for (auto seed : cfg.sweep.seeds) {
            cells.push_back({snr, seed, cell_name(snr, seed)});
            if (!fs::exists(out / "cells" / (cells.back().name + ".csv"))) pending.push_back(cells.back());
        }
    }
    if (max_new_cells && pending.size() > *max_new_cells) pending.resize(*max_new_cells);

    std::mutex mu;
    std::set<std::string> done;
    for (const auto& c : cells) {
        if (fs::exists(out / "cells" / (c.name + ".csv"))) done.insert(c.name);
    }
    auto write_manifest = [&] {
        json list = json::array();
        for (const auto& c : cells) {
            list.push_back({{"snr_db", c.snr}, {"seed", c.seed}, {"done", done.contains(c.name)}});
        }
        json m = {{"kind", "sweep"},
                  {"tool", kTool},
                  {"config", json::parse(to_json(cfg))},
                  {"config_hash", hash},
                  {"cells", list}};
        write_file_atomic(manifest_path, m.dump(2) + "\n");
    };
    write_manifest();

    const unsigned per_cell = pending.empty() ? 1 : std::max<unsigned>(1, jobs / static_cast<unsigned>(pending.size()));
    parallel_for(pending.size(), jobs, [&](std::size_t i) {
        const auto& cell = pending[i];
        auto cc = cfg;
        cc.simulation.snr_db = cell.snr;
        cc.simulation.noise_sigma.reset();
        cc.simulation.seed = cell.seed;
        cc.training.train.seed = cell.seed;
        const auto ds = build_dataset(cc);
        const auto run = run_training(ds, cc, per_cell);
        const auto match = match_filters(ds.truth, run.report.filters, static_cast<int>(cfg.sweep.max_shift), true);

        std::ostringstream csv;
        csv << "snr,seed,filter,err\n";
        for (const auto& f : match.filters) {
            csv << format_double(cell.snr) << ',' << cell.seed << ',' << f.true_index + 1 << ','
                << format_double(cfg.sweep.max_shift > 0 ? f.err : f.raw_err) << '\n';
        }
        json summary = {{"snr_db", cell.snr},
                        {"seed", cell.seed},
                        {"best_epoch", run.report.best_epoch},
                        {"best_val_loss", run.report.best_val_loss},
                        {"lambda", run.lambda},
                        {"L", run.L},
                        {"achieved_snr_db", ds.achieved_snr_db.empty() ? json(nullptr) : finite_or_null(ds.achieved_snr_db[0])}};
        write_file_atomic(out / "cells" / (cell.name + ".json"), summary.dump(2) + "\n");
        // the csv is the completion marker, so it goes last
        write_file_atomic(out / "cells" / (cell.name + ".csv"), csv.str());

        std::lock_guard lock(mu);
        done.insert(cell.name);
        write_manifest();
        log << "cell " << cell.name << ": mean err " << match.raw_mean_err << '\n';
    });

    if (done.size() < cells.size()) {
        log << "sweep incomplete: " << done.size() << " of " << cells.size()
            << " cells done; rerun to resume\n";
        return 0;
    }

    std::ostringstream all;
    all << "snr,seed,filter,err\n";
    std::vector<SweepEntry> entries;
    for (const auto& c : cells) {
        SweepEntry e{c.snr, c.seed, {}};
        for (const auto& r : read_cell(out / "cells" / (c.name + ".csv"))) {
            all << format_double(c.snr) << ',' << c.seed << ',' << r.filter << ',' << format_double(r.err) << '\n';
            e.report.filters.push_back({r.filter - 1, r.filter - 1, r.err, r.err, false, 0});
        }
        entries.push_back(std::move(e));
    }
    write_file_atomic(out / "sweep.csv", all.str());

    std::ostringstream agg;
    agg << "snr,filter,mean_err,std_err,count\n";
    for (const auto& a : sweep_aggregate(entries)) {
        agg << format_double(a.snr_db) << ','
            << (a.filter < 0 ? std::string("all") : std::to_string(a.filter + 1)) << ','
            << format_double(a.mean_err) << ',' << format_double(a.std_err) << ',' << a.count << '\n';
    }
    write_file_atomic(out / "aggregate.csv", agg.str());
    log << "sweep complete: " << cells.size() << " cells, wrote sweep.csv and aggregate.csv\n";
    return 0;
}

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opts, std::uint64_t seed, bool corrupt) {
    std::vector<GradcheckRow> rows;
    for (std::size_t i = 0; i < opts.shapes.size(); ++i) {
        const auto [C, K, W, T] = opts.shapes[i];
        if (C * K > 64 || W > 512 || T > 100) {
            throw std::invalid_argument("gradcheck shapes must be small (C*K <= 64, W <= 512, T <= 100)");
        }
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (attempt == 1000) throw std::runtime_error("gradcheck: no kink-free instance found");
            std::seed_seq seq{seed, std::uint64_t{i}, attempt};
            std::mt19937_64 rng(seq);
            Matrix m(C, K);
            for (double& v : m.flat()) v = normal(rng);
            const FilterBank h(std::move(m));
            std::vector<double> y(W);
            for (double& v : y) v = normal(rng);

            FistaConfig f;
            f.T = T;
            f.L = estimate_lipschitz(h, W).value;
            f.lambda = 0.1 * max_abs(apply_adjoint(h, y).flat());
            const auto enc = fista_encode(y, h, f, true);
            if (kink_distance(*enc.trace) <= opts.kink_margin) continue;

            auto bp = backprop_filter_gradient(y, h, f, *enc.trace, decode(h, enc.code));
            if (corrupt) {
                for (double& v : bp.flat()) v *= 1.0 + 1e-3;
            }
            const auto fd = finite_difference_gradient(y, h, f, opts.step);
            double worst = 0.0;
            for (std::size_t k = 0; k < bp.size(); ++k) {
                const double denom = std::max(std::abs(fd.flat()[k]), 1e-8);
                worst = std::max(worst, std::abs(bp.flat()[k] - fd.flat()[k]) / denom);
            }
            rows.push_back({opts.shapes[i], worst, worst <= opts.tolerance});
            break;
        }
    }
    return rows;
}

int cmd_gradcheck(const GradcheckOptions& opts, std::uint64_t seed, bool corrupt, std::ostream& log) {
    const auto rows = run_gradcheck(opts, seed, corrupt);
    bool ok = true;
    for (const auto& r : rows) {
        log << "C=" << r.shape[0] << " K=" << r.shape[1] << " W=" << r.shape[2] << " T=" << r.shape[3]
            << " max_rel_err=" << format_double(r.max_rel_err) << ' ' << (r.pass ? "PASS" : "FAIL") << '\n';
        ok = ok && r.pass;
    }
    return ok ? 0 : 1;
}

int cmd_eval(const fs::path& learned_path, const fs::path& truth_path, const fs::path& out,
             int max_shift, std::ostream& log) {
    const FilterBank learned(to_matrix(read_tensor(learned_path)));
    const FilterBank truth(to_matrix(read_tensor(truth_path)));
    const auto rep = match_filters(truth, learned, max_shift, true);

    fs::create_directories(out);
    json filters = json::array();
    std::ostringstream csv;
    csv << "filter,sample,true,learned\n";
    const auto K = static_cast<int>(truth.length());
    for (const auto& f : rep.filters) {
        filters.push_back({{"true_filter", f.true_index + 1},
                           {"learned_filter", f.learned_index + 1},
                           {"err", f.err},
                           {"raw_err", f.raw_err},
                           {"sign_flip", f.sign_flip},
                           {"shift", f.shift}});
        // learned filter aligned for overlay: same shift and sign, true filter's norm
        const auto h = truth.filter(f.true_index);
        const auto g = learned.filter(f.learned_index);
        const double scale = (f.sign_flip ? -1.0 : 1.0) * std::sqrt(squared_norm(h) / squared_norm(g));
        for (int k = 0; k < K; ++k) {
            const double v = g[static_cast<std::size_t>(((k - f.shift) % K + K) % K)] * scale;
            csv << f.true_index + 1 << ',' << k << ',' << format_double(h[static_cast<std::size_t>(k)])
                << ',' << format_double(v) << '\n';
        }
    }
    json report = {{"filters", filters},
                   {"mean_err", rep.mean_err},
                   {"max_err", rep.max_err},
                   {"raw_mean_err", rep.raw_mean_err},
                   {"raw_max_err", rep.raw_max_err},
                   {"max_shift", max_shift}};
    write_file_atomic(out / "report.json", report.dump(2) + "\n");
    write_file_atomic(out / "overlay.csv", csv.str());
    log << "mean err " << rep.raw_mean_err << ", max err " << rep.raw_max_err;
    if (max_shift > 0) log << " (shift-corrected mean " << rep.mean_err << ")";
    log << '\n';
    return 0;
}

}  // namespace crsae::cli
