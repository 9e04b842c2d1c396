#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "core_model.hpp"
#include "csv.hpp"
#include "ingest.hpp"
#include "parallel.hpp"
#include "reconstruct.hpp"

namespace cascadefit {

struct SampledTreeExpectations {
    double e_nodes = 0.0;
    double e_edges = 0.0;
    double e_isolated = 0.0;
    double e_maxlevel = 0.0;
    double e_minlevel = 0.0; // shallowest sampled level, 0 when nothing is sampled
};

namespace detail {

// complete b-ary tree of integer depth H, each node seen with prob p
inline SampledTreeExpectations expectations_int(double p, double b, int H) {
    const double q = 1.0 - p;
    std::vector<double> s(H + 1);
    for (int k = 0; k <= H; ++k) s[k] = std::pow(b, k);
    double N = 0.0;
    for (double x : s) N += x;

    SampledTreeExpectations e;
    e.e_nodes = p * N;
    e.e_edges = p * p * (N - 1.0);
    if (H == 0) {
        e.e_isolated = p;
    } else {
        double internal = 0.0;
        for (int k = 1; k < H; ++k) internal += s[k];
        e.e_isolated = p * std::pow(q, b) + internal * p * std::pow(q, b + 1.0) + s[H] * p * q;
    }

    // P(Lmax <= d) = q^(nodes below level d); nothing sampled counts as level 0
    std::vector<double> tail(H + 1, 0.0);
    for (int d = H - 1; d >= 0; --d) tail[d] = tail[d + 1] + s[d + 1];
    double prev = std::pow(q, N);
    for (int d = 0; d <= H; ++d) {
        double cdf = std::pow(q, tail[d]);
        e.e_maxlevel += d * (cdf - prev);
        prev = cdf;
    }
    // P(Lmin = d) = q^(nodes above level d) * (1 - q^(s_d))
    double head = 0.0;
    for (int d = 0; d <= H; ++d) {
        e.e_minlevel += d * std::pow(q, head) * (1.0 - std::pow(q, s[d]));
        head += s[d];
    }
    return e;
}

inline SampledTreeExpectations lerp(const SampledTreeExpectations& a, const SampledTreeExpectations& b, double f) {
    auto mix = [f](double x, double y) { return (1.0 - f) * x + f * y; };
    return {mix(a.e_nodes, b.e_nodes), mix(a.e_edges, b.e_edges), mix(a.e_isolated, b.e_isolated),
            mix(a.e_maxlevel, b.e_maxlevel), mix(a.e_minlevel, b.e_minlevel)};
}

} // namespace detail

inline SampledTreeExpectations expectations(double p, const TreeParams& t) {
    if (!(p > 0.0 && p <= 1.0)) throw InputError("sampling probability must be in (0,1]");
    int H = static_cast<int>(std::floor(t.h));
    double f = t.h - H;
    auto lo = detail::expectations_int(p, t.b, H);
    if (f == 0.0) return lo;
    return detail::lerp(lo, detail::expectations_int(p, t.b, H + 1), f);
}

enum class LevelStatistic {
    MaxLevel, // hop-based depth of the reconstructed forest vs E[Lmax]
    Span      // time-calibrated level span vs E[Lmax] - E[Lmin]
};

struct FitOptions {
    double b_min = 1.05, b_max = 16.0, b_step = 0.05;
    double h_min = 1.0, h_max = 24.0, h_step = 0.25;
    int refine = 10; // refinement pass at step/refine around the coarse optimum, 0 disables
    bool conditional = true; // condition expectations on >= 2 sampled nodes
    LevelStatistic level = LevelStatistic::Span;
    std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0}; // nodes, edges, isolated, level

    void validate() const {
        for (double w : weights)
            if (!(w >= 0.0)) throw InputError("statistic weights must be >= 0");
        if (weights[0] + weights[1] + weights[2] + weights[3] <= 0.0) throw InputError("all statistic weights are zero");
        if (!(b_min >= 1.0 && b_max >= b_min && b_step > 0.0)) throw InputError("invalid b search range");
        if (!(h_min >= 0.0 && h_max >= h_min && h_step > 0.0)) throw InputError("invalid h search range");
        if (refine < 0) throw InputError("refine must be >= 0");
    }
};

// nodes, edges, isolated, level
using StatVector = std::array<double, 4>;

struct ObservedStats {
    double nodes = 0.0, edges = 0.0, isolated = 0.0, level = 0.0;
    StatVector vec() const { return {nodes, edges, isolated, level}; }
};

inline ObservedStats observe(const CascadeStats& s) {
    return {double(s.n_nodes), double(s.n_edges), double(s.n_isolated), double(s.max_level)};
}

// level = number of hop delays between the first and last observed adoption
inline ObservedStats observe(const CascadeStats& s, const Cascade& c, double hop_delay) {
    if (!(hop_delay > 0.0)) throw InputError("hop delay must be positive");
    ObservedStats o = observe(s);
    double span = c.adoptions.empty() ? 0.0 : c.adoptions.back().time - c.adoptions.front().time;
    o.level = std::round(span / hop_delay);
    return o;
}

// Expected statistic vector the fitter matches against.
inline StatVector model_vector(double p, const TreeParams& t, const FitOptions& opt) {
    auto e = expectations(p, t);
    double level = opt.level == LevelStatistic::Span ? e.e_maxlevel - e.e_minlevel : e.e_maxlevel;
    if (!opt.conditional) return {e.e_nodes, e.e_edges, e.e_isolated, level};
    const double N = tree_size(t), q = 1.0 - p;
    double p0 = std::pow(q, N);
    double p1 = N * p * std::pow(q, N - 1.0);
    double p2 = std::max(1.0 - p0 - p1, std::numeric_limits<double>::min());
    // fewer than two sampled nodes have zero edges and zero span; a single
    // sampled node is one isolated node sitting at a uniformly chosen level
    double lvl = level / p2;
    if (opt.level == LevelStatistic::MaxLevel) {
        double mean_depth = 0.0;
        for (int l = 1; l <= static_cast<int>(std::ceil(t.h)); ++l) mean_depth += l * level_count(t, l);
        lvl = (e.e_maxlevel - p1 * mean_depth / N) / p2;
    }
    return {(e.e_nodes - p1) / p2, e.e_edges / p2, (e.e_isolated - p1) / p2, lvl};
}

struct FitResult {
    TreeParams params;
    double objective = 0.0;
    StatVector residuals{}; // (E - obs) / max(obs, 1)
};

inline double discrepancy(const StatVector& expected, const StatVector& obs, const StatVector& weights = {1, 1, 1, 1},
                          StatVector* resid = nullptr) {
    double F = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        double r = (expected[i] - obs[i]) / std::max(obs[i], 1.0);
        if (resid) (*resid)[i] = r;
        F += weights[i] * r * r;
    }
    return F;
}

// Grid-search estimator for one sampling rate; the coarse table is built
// once and shared by every fit.
class Fitter {
public:
    Fitter(double p, FitOptions opt = {}) : p_(p), opt_(opt) {
        if (!(p > 0.0 && p <= 1.0)) throw InputError("sampling probability must be in (0,1]");
        opt_.validate();
        nb_ = static_cast<int>(std::floor((opt_.b_max - opt_.b_min) / opt_.b_step + 1e-9)) + 1;
        nh_ = static_cast<int>(std::floor((opt_.h_max - opt_.h_min) / opt_.h_step + 1e-9)) + 1;
        table_.resize(static_cast<std::size_t>(nb_) * nh_);
        for (int i = 0; i < nb_; ++i)
            for (int j = 0; j < nh_; ++j) table_[idx(i, j)] = model_vector(p_, {b_at(i), h_at(j)}, opt_);
    }

    double p() const { return p_; }
    const FitOptions& options() const { return opt_; }
    int coarse_b_count() const { return nb_; }
    int coarse_h_count() const { return nh_; }
    double b_at(int i) const { return opt_.b_min + i * opt_.b_step; }
    double h_at(int j) const { return opt_.h_min + j * opt_.h_step; }
    const StatVector& coarse(int i, int j) const { return table_[idx(i, j)]; }

    FitResult fit(const ObservedStats& obs) const {
        if (obs.nodes < 2.0) throw InputError("cascade too small to fit");
        const auto o = obs.vec();
        int bi = 0, bj = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < nb_; ++i)
            for (int j = 0; j < nh_; ++j) {
                double F = discrepancy(table_[idx(i, j)], o, opt_.weights);
                if (F < best) {
                    best = F;
                    bi = i;
                    bj = j;
                }
            }
        if (!std::isfinite(best)) throw NumericalError("fit objective not finite on the search grid");
        FitResult r;
        r.params = TreeParams(b_at(bi), h_at(bj));
        r.objective = best;
        if (opt_.refine > 0) {
            const double db = opt_.b_step / opt_.refine, dh = opt_.h_step / opt_.refine;
            const double b0 = r.params.b, h0 = r.params.h;
            for (int u = -opt_.refine; u <= opt_.refine; ++u)
                for (int v = -opt_.refine; v <= opt_.refine; ++v) {
                    if (u == 0 && v == 0) continue;
                    double b = b0 + u * db, h = h0 + v * dh;
                    if (b < opt_.b_min - 1e-12 || b > opt_.b_max + 1e-12 || h < opt_.h_min - 1e-12 ||
                        h > opt_.h_max + 1e-12)
                        continue;
                    double F = discrepancy(model_vector(p_, {b, h}, opt_), o, opt_.weights);
                    if (F < r.objective) {
                        r.objective = F;
                        r.params = TreeParams(b, h);
                    }
                }
        }
        discrepancy(model_vector(p_, r.params, opt_), o, opt_.weights, &r.residuals);
        return r;
    }

private:
    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * nh_ + j; }

    double p_;
    FitOptions opt_;
    int nb_ = 0, nh_ = 0;
    std::vector<StatVector> table_;
};

struct StratumSummary {
    std::string key;
    double mu_b = 0.0, sigma_b = 0.0, mu_h = 0.0, sigma_h = 0.0;
    int n = 0;
};

struct FitOutcome {
    std::optional<FitResult> result;
    std::string error; // set when the fit failed
};

inline std::vector<FitOutcome> fit_all(const Fitter& fitter, const std::vector<ObservedStats>& obs) {
    return parallel_map(obs.size(), [&](std::size_t i) {
        FitOutcome o;
        try {
            o.result = fitter.fit(obs[i]);
        } catch (const Error& e) {
            o.error = e.what();
        }
        return o;
    });
}

struct StratifiedFit {
    std::vector<StratumSummary> strata; // sorted by key
    std::vector<std::string> warnings;
};

// Aggregates per-cascade fits into (mean, population sd) per key.
inline StratifiedFit summarize_strata(const std::vector<std::string>& keys, const std::vector<FitOutcome>& fits) {
    if (keys.size() != fits.size()) throw InputError("summarize_strata: size mismatch");
    std::map<std::string, std::vector<TreeParams>> groups;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        auto& g = groups[keys[i]];
        if (fits[i].result) g.push_back(fits[i].result->params);
    }
    StratifiedFit out;
    for (const auto& [key, ps] : groups) {
        if (ps.empty()) {
            out.warnings.push_back("stratum '" + key + "' has no fittable cascades; omitted");
            continue;
        }
        StratumSummary s;
        s.key = key;
        s.n = static_cast<int>(ps.size());
        for (const auto& t : ps) {
            s.mu_b += t.b;
            s.mu_h += t.h;
        }
        s.mu_b /= s.n;
        s.mu_h /= s.n;
        for (const auto& t : ps) {
            s.sigma_b += (t.b - s.mu_b) * (t.b - s.mu_b);
            s.sigma_h += (t.h - s.mu_h) * (t.h - s.mu_h);
        }
        s.sigma_b = std::sqrt(s.sigma_b / s.n);
        s.sigma_h = std::sqrt(s.sigma_h / s.n);
        out.strata.push_back(s);
    }
    return out;
}

inline StratifiedFit fit_stratified(const Fitter& fitter, const std::vector<std::string>& keys,
                                    const std::vector<ObservedStats>& obs) {
    return summarize_strata(keys, fit_all(fitter, obs));
}

inline void write_fits_csv(std::ostream& os, const std::vector<MessageId>& ids, const std::vector<FitOutcome>& fits) {
    csv::write_row(os, {"message_id", "b", "h", "objective"});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& f = fits[i];
        if (f.result)
            csv::write_row(os, {ids[i].str(), csv::fixed(f.result->params.b, 4), csv::fixed(f.result->params.h, 4),
                                csv::num(f.result->objective)});
        else
            csv::write_row(os, {ids[i].str(), "NA", "NA", "NA"});
    }
}

inline void write_strata_csv(std::ostream& os, const std::vector<StratumSummary>& strata) {
    csv::write_row(os, {"stratum", "mu_b", "sigma_b", "mu_h", "sigma_h", "n"});
    for (const auto& s : strata)
        csv::write_row(os, {s.key, csv::fixed(s.mu_b, 4), csv::fixed(s.sigma_b, 4), csv::fixed(s.mu_h, 4),
                            csv::fixed(s.sigma_h, 4), std::to_string(s.n)});
}

} // namespace cascadefit
