#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "core_model.hpp"
#include "csv.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace cascadefit {

inline constexpr std::uint64_t kMaxGeneratedNodes = 50'000'000;

// Depth H = floor(h) + Bernoulli(frac h); every node above the bottom level
// gets floor(b) + Bernoulli(frac b) children. Integer parameters draw nothing.
inline std::uint64_t generate_tree(const TreeParams& t, Rng& rng) {
    const int hf = static_cast<int>(std::floor(t.h));
    const double hfrac = t.h - hf;
    const int H = hf + (hfrac > 0.0 && rng.bernoulli(hfrac) ? 1 : 0);
    const auto bf = static_cast<std::uint64_t>(std::floor(t.b));
    const double bfrac = t.b - std::floor(t.b);

    std::uint64_t total = 1, width = 1;
    for (int level = 0; level < H; ++level) {
        std::uint64_t next = width * bf;
        if (bfrac > 0.0)
            for (std::uint64_t i = 0; i < width; ++i) next += rng.bernoulli(bfrac) ? 1 : 0;
        total += next;
        width = next;
        if (total > kMaxGeneratedNodes) throw NumericalError("generated tree exceeds node cap");
    }
    return total;
}

inline std::uint64_t generate_tree(const TreeParams& t, std::uint64_t seed) {
    Rng rng(seed);
    return generate_tree(t, rng);
}

struct StratumImpact {
    std::string key;
    TreeParams params;
    std::vector<double> sizes; // empirical group sizes, sampled with replacement
};

struct ImpactConfig {
    int replicates = 10000;
    std::uint64_t seed = 1;
    std::vector<StratumImpact> strata;
    int histogram_bins = 40;
};

struct HistogramBin {
    double lo = 0.0, hi = 0.0;
    std::size_t count = 0;
};

struct ReachDistribution {
    std::string key;
    std::vector<double> samples;
    double mean = 0.0;
    std::vector<HistogramBin> histogram;
};

inline std::vector<HistogramBin> fixed_histogram(const std::vector<double>& xs, int bins) {
    std::vector<HistogramBin> out;
    if (xs.empty() || bins < 1) return out;
    auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    double lo = *mn, hi = *mx;
    if (hi == lo) hi = lo + 1.0;
    double w = (hi - lo) / bins;
    for (int i = 0; i < bins; ++i) out.push_back({lo + i * w, i + 1 == bins ? hi : lo + (i + 1) * w, 0});
    for (double x : xs) {
        int i = std::min(bins - 1, static_cast<int>((x - lo) / w));
        ++out[i].count;
    }
    return out;
}

// Each replicate: one synthetic cascade, one size draw per node, summed.
// Replicate streams depend on the stratum key, not its position.
inline std::vector<ReachDistribution> estimate_reach(const ImpactConfig& cfg) {
    if (cfg.replicates < 1) throw InputError("replicates must be >= 1");
    std::vector<ReachDistribution> out;
    for (const auto& s : cfg.strata) {
        if (s.sizes.empty()) throw InputError("empty size sample for stratum '" + s.key + "'");
        const std::uint64_t stream = derive_seed(cfg.seed, fnv1a(s.key));
        ReachDistribution d;
        d.key = s.key;
        d.samples = parallel_map(static_cast<std::size_t>(cfg.replicates), [&](std::size_t r) {
            Rng rng(derive_seed(stream, r));
            std::uint64_t nodes = generate_tree(s.params, rng);
            double reach = 0.0;
            for (std::uint64_t i = 0; i < nodes; ++i) reach += s.sizes[rng.below(s.sizes.size())];
            return reach;
        });
        for (double x : d.samples) d.mean += x;
        d.mean /= static_cast<double>(d.samples.size());
        d.histogram = fixed_histogram(d.samples, cfg.histogram_bins);
        out.push_back(std::move(d));
    }
    return out;
}

inline void write_reach_csv(std::ostream& os, const std::vector<ReachDistribution>& ds) {
    csv::write_row(os, {"stratum", "replicate", "reach"});
    for (const auto& d : ds)
        for (std::size_t r = 0; r < d.samples.size(); ++r) csv::write_row(os, {d.key, std::to_string(r), csv::num(d.samples[r])});
}

inline void write_reach_summary_csv(std::ostream& os, const std::vector<ReachDistribution>& ds) {
    csv::write_row(os, {"stratum", "mean", "q05", "q25", "q50", "q75", "q95"});
    for (const auto& d : ds) {
        auto sorted = d.samples;
        std::sort(sorted.begin(), sorted.end());
        std::vector<std::string> row = {d.key, csv::fixed(d.mean, 3)};
        for (double q : kQuantileLevels) row.push_back(csv::fixed(quantile_sorted(sorted, q), 3));
        csv::write_row(os, row);
    }
}

inline void write_reach_histogram_csv(std::ostream& os, const std::vector<ReachDistribution>& ds) {
    csv::write_row(os, {"stratum", "bin_lo", "bin_hi", "count"});
    for (const auto& d : ds)
        for (const auto& b : d.histogram) csv::write_row(os, {d.key, csv::num(b.lo), csv::num(b.hi), std::to_string(b.count)});
}

} // namespace cascadefit
