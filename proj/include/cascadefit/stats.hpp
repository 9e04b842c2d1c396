#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <set>
#include <tuple>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "core_model.hpp"
#include "csv.hpp"
#include "ingest.hpp"

namespace cascadefit {

enum class RankSumMethod { Exact, NormalApprox };

struct RankSumResult {
    double statistic = 0.0; // rank sum of x
    double p_value = 1.0;
    RankSumMethod method = RankSumMethod::Exact;
};

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// One-sided Wilcoxon rank-sum test of "x stochastically greater than y".
// Midranks for ties. Exact null distribution when |x|+|y| <= exact_threshold,
// otherwise normal approximation with tie-corrected variance and a 0.5
// continuity correction.
inline RankSumResult rank_sum_test(const std::vector<double>& x, const std::vector<double>& y, int exact_threshold = 12) {
    if (x.empty() || y.empty()) throw InputError("rank_sum_test: empty sample");
    const std::size_t m = x.size(), n = y.size(), N = m + n;
    std::vector<std::pair<double, int>> pooled;
    pooled.reserve(N);
    for (double v : x) pooled.emplace_back(v, 0);
    for (double v : y) pooled.emplace_back(v, 1);
    std::sort(pooled.begin(), pooled.end());

    // doubled midranks stay integral
    std::vector<long> rank2(N);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < N;) {
        std::size_t j = i;
        while (j < N && pooled[j].first == pooled[i].first) ++j;
        long r2 = static_cast<long>(i + 1 + j); // (i+1) + j = first + last rank
        for (std::size_t k = i; k < j; ++k) rank2[k] = r2;
        double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    long w2 = 0;
    for (std::size_t k = 0; k < N; ++k)
        if (pooled[k].second == 0) w2 += rank2[k];

    RankSumResult r;
    r.statistic = w2 / 2.0;
    if (static_cast<int>(N) <= exact_threshold) {
        r.method = RankSumMethod::Exact;
        long total2 = std::accumulate(rank2.begin(), rank2.end(), 0L);
        // ways[k][s]: subsets of size k with doubled rank sum s
        std::vector<std::vector<double>> ways(m + 1, std::vector<double>(total2 + 1, 0.0));
        ways[0][0] = 1.0;
        for (std::size_t k = 0; k < N; ++k)
            for (std::size_t c = std::min(k + 1, m); c >= 1; --c)
                for (long s = total2; s >= rank2[k]; --s) ways[c][s] += ways[c - 1][s - rank2[k]];
        double all = 0.0, upper = 0.0;
        for (long s = 0; s <= total2; ++s) {
            all += ways[m][s];
            if (s >= w2) upper += ways[m][s];
        }
        r.p_value = upper / all;
    } else {
        r.method = RankSumMethod::NormalApprox;
        double dm = static_cast<double>(m), dn = static_cast<double>(n), dN = static_cast<double>(N);
        double mu = dm * (dN + 1.0) / 2.0;
        double var = dm * dn / 12.0 * ((dN + 1.0) - tie_term / (dN * (dN - 1.0)));
        if (var <= 0.0)
            r.p_value = r.statistic > mu ? 0.0 : 1.0;
        else
            r.p_value = normal_sf((r.statistic - mu - 0.5) / std::sqrt(var));
    }
    r.p_value = std::clamp(r.p_value, 0.0, 1.0);
    return r;
}

struct RegressionRow {
    double response = 0.0;
    int forwarding = 0; // bucket 0..5, 5 meaning >=5
    Modality modality = Modality::Text;
    ContentType content = ContentType::ViralNormal;
};

struct RegressionResult {
    std::vector<std::string> terms; // "(Intercept)" first
    std::vector<double> estimates, standard_errors, p_values;
    std::map<std::string, std::string> reference_levels;
    std::string response_name;
    int n = 0, df = 0;
    bool normal_approx = false; // p-values from N(0,1) rather than t (df > 200)

    std::size_t index(const std::string& term) const {
        auto it = std::find(terms.begin(), terms.end(), term);
        if (it == terms.end()) throw InputError("no term '" + term + "'");
        return static_cast<std::size_t>(it - terms.begin());
    }
    double estimate(const std::string& term) const { return estimates[index(term)]; }
    double se(const std::string& term) const { return standard_errors[index(term)]; }
    double p(const std::string& term) const { return p_values[index(term)]; }
};

inline std::string forwarding_term(int b) { return "forwarding_score[" + forwarding_label(b) + "]"; }
inline std::string modality_term(Modality m) { return "modality[" + std::string(to_string(m)) + "]"; }
inline std::string content_term(ContentType c) { return "content_type[" + std::string(to_string(c)) + "]"; }

// OLS with treatment-coded dummies; reference levels forwarding 0, text,
// viral_normal. Only levels that occur in the data get a column. Rows are put
// in a canonical order first so the result does not depend on input order.
inline RegressionResult ols_regression(std::vector<RegressionRow> rows, const std::string& response_name) {
    if (rows.size() < 2) throw InputError("regression needs at least 2 rows");
    std::sort(rows.begin(), rows.end(), [](const RegressionRow& a, const RegressionRow& b) {
        return std::tie(a.forwarding, a.modality, a.content, a.response) <
               std::tie(b.forwarding, b.modality, b.content, b.response);
    });

    std::array<bool, 6> fwd{};
    std::array<bool, 3> mod{};
    std::array<bool, 5> con{};
    for (const auto& r : rows) {
        if (r.forwarding < 0 || r.forwarding > 5) throw InputError("forwarding bucket out of range");
        fwd[r.forwarding] = true;
        mod[static_cast<int>(r.modality)] = true;
        con[static_cast<int>(r.content)] = true;
    }
    RegressionResult res;
    res.response_name = response_name;
    res.reference_levels = {{"forwarding_score", "0"}, {"modality", "text"}, {"content_type", "viral_normal"}};
    res.terms.push_back("(Intercept)");
    std::vector<std::function<double(const RegressionRow&)>> cols;
    cols.push_back([](const RegressionRow&) { return 1.0; });
    for (int b = 1; b <= 5; ++b)
        if (fwd[b]) {
            res.terms.push_back(forwarding_term(b));
            cols.push_back([b](const RegressionRow& r) { return r.forwarding == b ? 1.0 : 0.0; });
        }
    for (auto m : {Modality::Image, Modality::Video})
        if (mod[static_cast<int>(m)]) {
            res.terms.push_back(modality_term(m));
            cols.push_back([m](const RegressionRow& r) { return r.modality == m ? 1.0 : 0.0; });
        }
    for (auto c : {ContentType::Misinformation, ContentType::Hateful, ContentType::Propaganda, ContentType::Unlabeled})
        if (con[static_cast<int>(c)]) {
            res.terms.push_back(content_term(c));
            cols.push_back([c](const RegressionRow& r) { return r.content == c ? 1.0 : 0.0; });
        }

    const Eigen::Index n = static_cast<Eigen::Index>(rows.size()), k = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd X(n, k);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) = rows[i].response;
        for (Eigen::Index j = 0; j < k; ++j) X(i, j) = cols[j](rows[i]);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) {
        std::string names;
        for (Eigen::Index j = qr.rank(); j < k; ++j) {
            if (!names.empty()) names += ", ";
            names += res.terms[qr.colsPermutation().indices()(j)];
        }
        throw NumericalError("rank-deficient design; collinear terms: " + names);
    }

    Eigen::MatrixXd XtX = X.transpose() * X;
    Eigen::VectorXd Xty = X.transpose() * y;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
    Eigen::VectorXd beta = ldlt.solve(Xty);
    Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    double rss = (y - X * beta).squaredNorm();

    res.n = static_cast<int>(n);
    res.df = static_cast<int>(n - k);
    res.normal_approx = res.df > 200;
    double sigma2 = res.df > 0 ? rss / res.df : std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index j = 0; j < k; ++j) {
        double est = beta(j);
        double se = std::sqrt(sigma2 * std::max(inv(j, j), 0.0));
        double p;
        if (std::isnan(se)) {
            p = std::numeric_limits<double>::quiet_NaN();
        } else if (se == 0.0) {
            p = est == 0.0 ? 1.0 : 0.0;
        } else {
            double t = std::abs(est / se);
            if (res.normal_approx) {
                p = 2.0 * normal_sf(t);
            } else {
                boost::math::students_t dist(res.df);
                p = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
            }
        }
        res.estimates.push_back(est);
        res.standard_errors.push_back(se);
        res.p_values.push_back(std::clamp(p, 0.0, 1.0));
        if (std::isnan(p)) res.p_values.back() = p;
    }
    return res;
}

inline void write_regression_csv(std::ostream& os, const RegressionResult& r) {
    csv::write_row(os, {"term", "estimate", "se", "p"});
    for (std::size_t i = 0; i < r.terms.size(); ++i)
        csv::write_row(os, {r.terms[i], csv::num(r.estimates[i]), csv::num(r.standard_errors[i]), csv::num(r.p_values[i])});
}

// linear interpolation between order statistics (R type 7)
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw InputError("quantile of empty sample");
    double pos = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline constexpr std::array<double, 5> kQuantileLevels = {0.05, 0.25, 0.50, 0.75, 0.95};

struct SizeSample {
    std::vector<double> sizes; // one entry per (cascade, traversed group)
    std::array<double, 5> quantiles{};
};

template <class KeyFn>
std::map<std::string, SizeSample> group_size_distribution(const std::vector<Cascade>& cascades,
                                                          const GroupCatalog& catalog, KeyFn key) {
    std::set<std::string> missing;
    std::map<std::string, SizeSample> out;
    for (const auto& c : cascades) {
        auto& s = out[key(c)];
        for (const auto& a : c.adoptions) {
            auto it = catalog.find(a.group);
            if (it == catalog.end())
                missing.insert(a.group.str());
            else
                s.sizes.push_back(static_cast<double>(it->second.size));
        }
    }
    if (!missing.empty()) {
        std::string ids;
        for (const auto& m : missing) ids += (ids.empty() ? "" : ", ") + m;
        throw InputError("groups missing from catalog: " + ids);
    }
    for (auto& [k, s] : out) {
        auto sorted = s.sizes;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < kQuantileLevels.size(); ++i) s.quantiles[i] = quantile_sorted(sorted, kQuantileLevels[i]);
    }
    return out;
}

} // namespace cascadefit
