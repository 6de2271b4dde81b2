#include "crsae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace crsae {

double recovery_err(std::span<const double> h, std::span<const double> h_hat) {
    const double nh = squared_norm(h);
    const double ng = squared_norm(h_hat);
    if (nh == 0.0 || ng == 0.0) throw std::invalid_argument("recovery_err: zero filter");
    const double ip = dot(h, h_hat);
    const double rho2 = std::min(1.0, ip * ip / (nh * ng));
    return std::sqrt(std::max(0.0, 1.0 - rho2));
}

namespace {

struct PairScore {
    double err = 0.0;
    double raw_err = 0.0;
    bool sign_flip = false;
    int shift = 0;
};

PairScore score_pair(std::span<const double> h, std::span<const double> g, int max_shift) {
    PairScore best;
    best.raw_err = recovery_err(h, g);
    best.err = best.raw_err;
    best.sign_flip = dot(h, g) < 0.0;
    const auto K = static_cast<int>(g.size());
    std::vector<double> shifted(g.size());
    for (int s = -max_shift; s <= max_shift; ++s) {
        if (s == 0) continue;
        for (int i = 0; i < K; ++i) shifted[i] = g[((i - s) % K + K) % K];
        const double e = recovery_err(h, shifted);
        if (e < best.err) {
            best.err = e;
            best.shift = s;
            best.sign_flip = dot(h, shifted) < 0.0;
        }
    }
    return best;
}

}  // namespace

RecoveryReport match_filters(const FilterBank& truth, const FilterBank& learned, int max_shift,
                             bool allow_greedy) {
    if (truth.count() != learned.count() || truth.length() != learned.length()) {
        throw std::invalid_argument("match_filters: banks have different shapes");
    }
    if (max_shift < 0) throw std::invalid_argument("match_filters: max_shift must be >= 0");
    const std::size_t C = truth.count();
    if (C > kMaxExhaustiveFilters && !allow_greedy) {
        throw std::invalid_argument("match_filters: more than 6 filters needs the greedy fallback");
    }

    std::vector<PairScore> scores(C * C);
    for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t j = 0; j < C; ++j) {
            scores[i * C + j] = score_pair(truth.filter(i), learned.filter(j), max_shift);
        }
    }

    std::vector<std::size_t> assignment(C);
    if (C <= kMaxExhaustiveFilters) {
        std::vector<std::size_t> perm(C);
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            double total = 0.0;
            for (std::size_t i = 0; i < C; ++i) total += scores[i * C + perm[i]].err;
            if (total < best) {
                best = total;
                assignment = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        std::vector<bool> used_t(C, false), used_l(C, false);
        for (std::size_t round = 0; round < C; ++round) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t bi = 0, bj = 0;
            for (std::size_t i = 0; i < C; ++i) {
                if (used_t[i]) continue;
                for (std::size_t j = 0; j < C; ++j) {
                    if (!used_l[j] && scores[i * C + j].err < best) {
                        best = scores[i * C + j].err;
                        bi = i;
                        bj = j;
                    }
                }
            }
            used_t[bi] = used_l[bj] = true;
            assignment[bi] = bj;
        }
    }

    RecoveryReport report;
    for (std::size_t i = 0; i < C; ++i) {
        const auto& s = scores[i * C + assignment[i]];
        report.filters.push_back({i, assignment[i], s.err, s.raw_err, s.sign_flip, s.shift});
        report.mean_err += s.err;
        report.raw_mean_err += s.raw_err;
        report.max_err = std::max(report.max_err, s.err);
        report.raw_max_err = std::max(report.raw_max_err, s.raw_err);
    }
    report.mean_err /= static_cast<double>(C);
    report.raw_mean_err /= static_cast<double>(C);
    return report;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    sd = 0.0;
    if (v.size() < 2) return;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<SweepAggregate> sweep_aggregate(std::span<const SweepEntry> entries) {
    if (entries.empty()) throw std::invalid_argument("sweep_aggregate: no entries");
    std::map<double, std::map<int, std::vector<double>>> groups;
    for (const auto& e : entries) {
        auto& g = groups[e.snr_db];
        for (const auto& f : e.report.filters) {
            g[static_cast<int>(f.true_index)].push_back(f.raw_err);
            g[-1].push_back(f.raw_err);
        }
    }
    std::vector<SweepAggregate> out;
    for (const auto& [snr, by_filter] : groups) {
        for (const auto& [filter, values] : by_filter) {
            SweepAggregate row;
            row.snr_db = snr;
            row.filter = filter;
            row.count = values.size();
            mean_std(values, row.mean_err, row.std_err);
            out.push_back(row);
        }
    }
    return out;
}

}  // namespace crsae
