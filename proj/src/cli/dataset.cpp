#include "crsae/cli/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "crsae/cli/io.hpp"
#include "crsae/conv_ops.hpp"
#include "crsae/simulator.hpp"
#include "crsae/trainer.hpp"
#include "json.hpp"

namespace crsae::cli {

using nlohmann::json;

namespace {

constexpr const char* kSplitNames[] = {"train", "val", "test"};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

Tensor windows_tensor(const SplitData& s, std::size_t W) {
    Tensor t{{s.windows.size(), W}, {}};
    t.data.reserve(s.windows.size() * W);
    for (const auto& w : s.windows) t.data.insert(t.data.end(), w.samples.begin(), w.samples.end());
    return t;
}

}  // namespace

Dataset build_dataset(const ExperimentConfig& cfg) {
    auto sim = simulate_dataset(cfg.simulation);
    const auto split = resolve_split(cfg.split, sim.windows.size());

    std::seed_seq seq{cfg.simulation.seed, std::uint64_t{2}};
    std::mt19937_64 rng(seq);
    const auto order = shuffled_indices(sim.windows.size(), rng);

    Dataset ds{sim.filters, cfg.simulation.window, {}, {}, {}, sim.achieved_snr_db,
               sim.noise_sigma, sim.events_per_electrode};
    SplitData* parts[] = {&ds.train, &ds.val, &ds.test};
    const std::size_t sizes[] = {split.train, split.val, split.test};
    std::size_t pos = 0;
    for (int p = 0; p < 3; ++p) {
        // sorted within a split so files read in recording order
        std::vector<std::size_t> idx(order.begin() + pos, order.begin() + pos + sizes[p]);
        std::sort(idx.begin(), idx.end());
        for (auto i : idx) {
            parts[p]->windows.push_back(sim.windows[i]);
            parts[p]->codes.push_back(sim.codes[i]);
        }
        pos += sizes[p];
    }
    return ds;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds, const ExperimentConfig& cfg) {
    std::filesystem::create_directories(dir);
    write_tensor(dir / "filters_true.tensor", to_tensor(ds.truth.matrix()));

    const SplitData* parts[] = {&ds.train, &ds.val, &ds.test};
    json split = json::object();
    std::ostringstream codes;
    codes << "window,channel,shift,amplitude\n";
    std::map<std::size_t, const CodeMatrix*> by_index;
    for (int p = 0; p < 3; ++p) {
        write_tensor(dir / ("windows_" + std::string(kSplitNames[p]) + ".tensor"),
                     windows_tensor(*parts[p], ds.window_length));
        json idx = json::array();
        for (std::size_t j = 0; j < parts[p]->windows.size(); ++j) {
            idx.push_back(parts[p]->windows[j].index);
            by_index[parts[p]->windows[j].index] = &parts[p]->codes[j];
        }
        split[kSplitNames[p]] = idx;
    }
    for (const auto& [index, code] : by_index) {
        for (std::size_t c = 0; c < code->channels(); ++c) {
            const auto row = code->row(c);
            for (std::size_t n = 0; n < row.size(); ++n) {
                if (row[n] != 0.0) {
                    codes << index << ',' << c << ',' << n << ',' << format_double(row[n]) << '\n';
                }
            }
        }
    }
    write_file_atomic(dir / "codes.csv", codes.str());

    json snr = json::array(), sigma = json::array();
    for (double v : ds.achieved_snr_db) snr.push_back(finite_or_null(v));
    for (double v : ds.noise_sigma) sigma.push_back(v);
    json manifest = {{"kind", "dataset"},
                     {"format_version", 1},
                     {"tool", "crsae 0.1.0"},
                     {"config", json::parse(to_json(cfg))},
                     {"config_hash", config_hash(cfg)},
                     {"seed", cfg.simulation.seed},
                     {"filters", {ds.truth.count(), ds.truth.length()}},
                     {"window_length", ds.window_length},
                     {"achieved_snr_db", snr},
                     {"noise_sigma", sigma},
                     {"events_per_electrode", ds.events_per_electrode},
                     {"split", split}};
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const json manifest = json::parse(read_file(dir / "manifest.json"));
    if (manifest.value("kind", "") != "dataset") {
        throw std::runtime_error(dir.string() + " does not hold a simulated dataset");
    }
    Dataset ds;
    ds.truth = FilterBank(to_matrix(read_tensor(dir / "filters_true.tensor")));
    ds.window_length = manifest.at("window_length").get<std::size_t>();
    for (const auto& v : manifest.at("achieved_snr_db")) {
        ds.achieved_snr_db.push_back(v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>());
    }
    ds.noise_sigma = manifest.at("noise_sigma").get<std::vector<double>>();
    ds.events_per_electrode = manifest.at("events_per_electrode").get<std::vector<std::size_t>>();

    const std::size_t W = ds.window_length;
    const std::size_t ne = code_length(W, ds.truth.length());
    SplitData* parts[] = {&ds.train, &ds.val, &ds.test};
    std::map<std::size_t, CodeMatrix*> by_index;
    for (int p = 0; p < 3; ++p) {
        const auto idx = manifest.at("split").at(kSplitNames[p]).get<std::vector<std::size_t>>();
        const auto t = read_tensor(dir / ("windows_" + std::string(kSplitNames[p]) + ".tensor"));
        if (t.dims.size() != 2 || t.dims[0] != idx.size() || (idx.size() > 0 && t.dims[1] != W)) {
            throw std::runtime_error("windows_" + std::string(kSplitNames[p]) +
                                     ".tensor does not match the manifest");
        }
        for (std::size_t j = 0; j < idx.size(); ++j) {
            parts[p]->windows.push_back(
                {std::vector<double>(t.data.begin() + j * W, t.data.begin() + (j + 1) * W), idx[j]});
            parts[p]->codes.emplace_back(ds.truth.count(), ne);
        }
    }
    for (auto* part : parts) {
        for (std::size_t j = 0; j < part->windows.size(); ++j) {
            by_index[part->windows[j].index] = &part->codes[j];
        }
    }

    std::istringstream codes(read_file(dir / "codes.csv"));
    std::string line;
    std::getline(codes, line);
    if (line != "window,channel,shift,amplitude") throw std::runtime_error("codes.csv: bad header");
    while (std::getline(codes, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string a, b, c, d;
        std::getline(row, a, ',');
        std::getline(row, b, ',');
        std::getline(row, c, ',');
        std::getline(row, d);
        const auto it = by_index.find(std::stoull(a));
        const auto ch = std::stoull(b);
        const auto sh = std::stoull(c);
        if (it == by_index.end() || ch >= ds.truth.count() || sh >= ne) {
            throw std::runtime_error("codes.csv: entry out of range: " + line);
        }
        (*it->second)(ch, sh) = parse_double(d);
    }
    return ds;
}

}  // namespace crsae::cli
