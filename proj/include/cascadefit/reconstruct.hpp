#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "core_model.hpp"
#include "csv.hpp"
#include "ingest.hpp"

namespace cascadefit {

struct TransmissionModel {
    double alpha = 1.0;   // decay scale, time units
    double beta = 0.5;    // transmission success probability
    double epsilon = 0.01; // external-influence likelihood

    void validate() const {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("alpha must be positive");
        if (!(beta > 0.0 && beta < 1.0)) throw InputError("beta must be in (0,1)");
        if (!(epsilon > 0.0 && epsilon < beta)) throw InputError("epsilon must be in (0, beta)");
    }
};

inline double edge_weight(const TransmissionModel& m, double delta) {
    if (!(delta > 0.0)) throw InputError("edge_weight: delay must be positive (time order violated)");
    return m.beta * std::exp(-delta / m.alpha);
}

namespace detail {
inline std::vector<double> consecutive_gaps(const std::vector<Cascade>& cascades) {
    std::vector<double> gaps;
    for (const auto& c : cascades)
        for (std::size_t i = 1; i < c.adoptions.size(); ++i) gaps.push_back(c.adoptions[i].time - c.adoptions[i - 1].time);
    return gaps;
}
} // namespace detail

struct ModelOverrides {
    std::optional<double> alpha, beta, epsilon;
};

// alpha: mean inter-adoption gap; beta: 0.5; epsilon: 0.1*beta*exp(-d99/alpha)
// with d99 the 99th percentile gap. Overrides replace individual defaults.
inline TransmissionModel default_model(const std::vector<Cascade>& cascades, const ModelOverrides& ov = {}) {
    TransmissionModel m;
    auto gaps = detail::consecutive_gaps(cascades);
    double mean = 0.0;
    for (double g : gaps) mean += g;
    if (!gaps.empty()) mean /= static_cast<double>(gaps.size());
    m.alpha = ov.alpha ? *ov.alpha : (mean > 0.0 ? mean : 1.0);
    m.beta = ov.beta ? *ov.beta : 0.5;
    if (ov.epsilon) {
        m.epsilon = *ov.epsilon;
    } else {
        double d99 = 0.0;
        if (!gaps.empty()) {
            std::sort(gaps.begin(), gaps.end());
            double pos = 0.99 * static_cast<double>(gaps.size() - 1);
            auto lo = static_cast<std::size_t>(std::floor(pos));
            auto hi = std::min(lo + 1, gaps.size() - 1);
            d99 = gaps[lo] + (pos - lo) * (gaps[hi] - gaps[lo]);
        }
        m.epsilon = 0.1 * m.beta * std::exp(-d99 / m.alpha);
        if (!(m.epsilon > 0.0)) m.epsilon = std::numeric_limits<double>::min();
    }
    m.validate();
    return m;
}

// External-parent weight for fitting sampled cascades: beta times the prior
// odds (1-p)/p that an adopter's true parent went unobserved, kept below beta.
inline double sampling_aware_epsilon(double beta, double p) {
    double odds = (1.0 - p) / p;
    return beta * std::clamp(odds, 1e-12, 1.0 - 1e-9);
}

struct ForestNode {
    GroupId group;
    double time = 0.0;
    int parent = -1; // index into nodes, -1 = EXTERNAL
    double attach_loglik = 0.0;
};

struct DiffusionForest {
    MessageId message;
    std::vector<ForestNode> nodes; // adoption order

    bool is_external(std::size_t i) const { return nodes[i].parent < 0; }
};

// Candidate parents of v: earlier adopters, optionally restricted to an
// undirected candidate network.
struct ParentRestriction {
    const GroupOverlapNetwork* network = nullptr;
    bool allows(const GroupId& u, const GroupId& v) const { return !network || network->contains(u, v); }
};

// Maximum-likelihood tree: each node takes the strictly earlier adopter with
// the largest weight, or EXTERNAL when no weight exceeds epsilon. Equal
// weights go to the earlier adopter, then the smaller GroupId.
inline DiffusionForest mle_tree(const Cascade& c, const TransmissionModel& m, ParentRestriction restrict = {}) {
    DiffusionForest f;
    f.message = c.message;
    f.nodes.reserve(c.adoptions.size());
    for (std::size_t v = 0; v < c.adoptions.size(); ++v) {
        const auto& av = c.adoptions[v];
        int best = -1;
        double best_w = m.epsilon;
        for (std::size_t u = 0; u < v; ++u) {
            const auto& au = c.adoptions[u];
            if (!(au.time < av.time) || !restrict.allows(au.group, av.group)) continue;
            double w = edge_weight(m, av.time - au.time);
            bool better = w > best_w;
            if (!better && best >= 0 && w == best_w) {
                const auto& ab = c.adoptions[best];
                better = au.time < ab.time || (au.time == ab.time && au.group < ab.group);
            }
            if (better) {
                best = static_cast<int>(u);
                best_w = w;
            }
        }
        f.nodes.push_back({av.group, av.time, best, std::log(best_w)});
    }
    return f;
}

struct CascadeStats {
    int n_nodes = 0;
    int n_edges = 0;
    int n_isolated = 0;
    int max_level = 0;
    int depth = 0;
    int max_breadth = 0;
};

inline std::vector<int> forest_levels(const DiffusionForest& f) {
    std::vector<int> level(f.nodes.size(), 0);
    for (std::size_t i = 0; i < f.nodes.size(); ++i) {
        int p = f.nodes[i].parent;
        if (p >= 0) {
            if (static_cast<std::size_t>(p) >= i) throw InputError("forest parent does not precede child");
            level[i] = level[p] + 1;
        }
    }
    return level;
}

inline CascadeStats cascade_stats(const DiffusionForest& f) {
    CascadeStats s;
    s.n_nodes = static_cast<int>(f.nodes.size());
    auto level = forest_levels(f);
    std::vector<int> children(f.nodes.size(), 0);
    for (const auto& n : f.nodes)
        if (n.parent >= 0) {
            ++s.n_edges;
            ++children[n.parent];
        }
    std::map<int, int> per_level;
    for (std::size_t i = 0; i < f.nodes.size(); ++i) {
        if (f.nodes[i].parent < 0 && children[i] == 0) ++s.n_isolated;
        s.depth = std::max(s.depth, level[i]);
        ++per_level[level[i]];
    }
    for (const auto& [l, k] : per_level) s.max_breadth = std::max(s.max_breadth, k);
    s.max_level = s.depth;
    return s;
}

// (x, P(X >= x)) over the distinct sorted values
inline std::vector<std::pair<double, double>> ccdf(std::vector<double> values) {
    if (values.empty()) throw InputError("ccdf of empty sample");
    std::sort(values.begin(), values.end());
    std::vector<std::pair<double, double>> out;
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        if (i == 0 || values[i] != values[i - 1]) out.emplace_back(values[i], (n - static_cast<double>(i)) / n);
    return out;
}

struct NetworkInference {
    std::vector<std::pair<GroupId, GroupId>> edges; // insertion order
    std::vector<double> gains;
    std::vector<double> loglik; // loglik[0] is the external-only network
    std::vector<DiffusionForest> forests;
};

namespace detail {

struct NetinfState {
    std::vector<GroupId> ids;
    std::map<GroupId, int> index;
    // per cascade: group index and time per position
    std::vector<std::vector<std::pair<int, double>>> casc;
    std::vector<int> cascades_with; // #cascades containing node
    int id_of(const GroupId& g) {
        auto [it, fresh] = index.emplace(g, static_cast<int>(ids.size()));
        if (fresh) {
            ids.push_back(g);
            cascades_with.push_back(0);
        }
        return it->second;
    }
};

} // namespace detail

// Total log-likelihood of the cascades under a directed network, recomputed
// from scratch: each node scores max(log eps, best network parent's
// log w - log(1-beta)); every out-edge of an infected node adds log(1-beta).
inline double network_loglik(const std::vector<Cascade>& cascades, const TransmissionModel& m,
                             const std::vector<std::pair<GroupId, GroupId>>& edges) {
    std::set<std::pair<GroupId, GroupId>> E(edges.begin(), edges.end());
    std::map<GroupId, int> outdeg;
    for (const auto& [u, v] : E) ++outdeg[u];
    const double l1b = std::log1p(-m.beta);
    double L = 0.0;
    for (const auto& c : cascades) {
        for (std::size_t v = 0; v < c.adoptions.size(); ++v) {
            double best = std::log(m.epsilon);
            for (std::size_t u = 0; u < v; ++u) {
                if (!(c.adoptions[u].time < c.adoptions[v].time)) continue;
                if (!E.count({c.adoptions[u].group, c.adoptions[v].group})) continue;
                best = std::max(best, std::log(edge_weight(m, c.adoptions[v].time - c.adoptions[u].time)) - l1b);
            }
            L += best;
            auto it = outdeg.find(c.adoptions[v].group);
            if (it != outdeg.end()) L += l1b * it->second;
        }
    }
    return L;
}

// Greedy marginal-gain edge addition starting from the external-only network.
// Stops after k edges, when no candidate remains, or when the best gain <= 0.
inline NetworkInference infer_network(const std::vector<Cascade>& cascades, const TransmissionModel& m, int k,
                                      ParentRestriction restrict = {}) {
    if (k < 1) throw InputError("edge budget must be >= 1");
    m.validate();
    detail::NetinfState st;
    for (const auto& c : cascades) {
        if (c.adoptions.size() < 2) throw InputError("infer_network: cascade shorter than 2");
        std::vector<std::pair<int, double>> row;
        for (const auto& a : c.adoptions) {
            int id = st.id_of(a.group);
            row.emplace_back(id, a.time);
        }
        for (const auto& [id, t] : row) ++st.cascades_with[id];
        st.casc.push_back(std::move(row));
    }

    const double l1b = std::log1p(-m.beta);
    const double leps = std::log(m.epsilon);

    // candidate (u,v) -> list of (cascade, position of v, log w - log(1-beta))
    struct Hit {
        int c, pos;
        double score;
    };
    std::map<std::pair<int, int>, std::vector<Hit>> cand;
    for (int ci = 0; ci < static_cast<int>(st.casc.size()); ++ci) {
        const auto& row = st.casc[ci];
        for (int v = 0; v < static_cast<int>(row.size()); ++v)
            for (int u = 0; u < v; ++u) {
                if (!(row[u].second < row[v].second)) continue;
                if (!restrict.allows(st.ids[row[u].first], st.ids[row[v].first])) continue;
                double s = std::log(edge_weight(m, row[v].second - row[u].second)) - l1b;
                cand[{row[u].first, row[v].first}].push_back({ci, v, s});
            }
    }

    std::vector<std::vector<double>> cur(st.casc.size());
    double total = 0.0;
    for (std::size_t ci = 0; ci < st.casc.size(); ++ci) {
        cur[ci].assign(st.casc[ci].size(), leps);
        total += leps * static_cast<double>(st.casc[ci].size());
    }

    struct Cand {
        int u, v;
        const std::vector<Hit>* hits;
        double gain;
        bool used;
    };
    std::vector<Cand> cs;
    for (const auto& [uv, hits] : cand) cs.push_back({uv.first, uv.second, &hits, 0.0, false});
    auto gain_of = [&](const Cand& x) {
        double g = l1b * st.cascades_with[x.u];
        for (const auto& h : *x.hits) g += std::max(0.0, h.score - cur[h.c][h.pos]);
        return g;
    };
    for (auto& x : cs) x.gain = gain_of(x);
    std::map<int, std::vector<std::size_t>> by_target;
    for (std::size_t i = 0; i < cs.size(); ++i) by_target[cs[i].v].push_back(i);

    NetworkInference out;
    out.loglik.push_back(total);
    std::set<std::pair<GroupId, GroupId>> chosen;
    for (int step = 0; step < k; ++step) {
        std::size_t best = cs.size();
        for (std::size_t i = 0; i < cs.size(); ++i) {
            if (cs[i].used) continue;
            if (best == cs.size() || cs[i].gain > cs[best].gain) {
                best = i;
            } else if (cs[i].gain == cs[best].gain) {
                auto key = [&](std::size_t j) { return std::pair{st.ids[cs[j].u], st.ids[cs[j].v]}; };
                if (key(i) < key(best)) best = i;
            }
        }
        if (best == cs.size() || !(cs[best].gain > 0.0)) break;
        Cand& e = cs[best];
        e.used = true;
        total += e.gain;
        for (const auto& h : *e.hits) cur[h.c][h.pos] = std::max(cur[h.c][h.pos], h.score);
        for (std::size_t j : by_target[e.v])
            if (!cs[j].used) cs[j].gain = gain_of(cs[j]);
        out.edges.emplace_back(st.ids[e.u], st.ids[e.v]);
        out.gains.push_back(e.gain);
        out.loglik.push_back(total);
        chosen.insert(out.edges.back());
    }

    // forests under the inferred network
    for (const auto& c : cascades) {
        DiffusionForest f;
        f.message = c.message;
        for (std::size_t v = 0; v < c.adoptions.size(); ++v) {
            const auto& av = c.adoptions[v];
            int bp = -1;
            double bs = leps;
            for (std::size_t u = 0; u < v; ++u) {
                const auto& au = c.adoptions[u];
                if (!(au.time < av.time) || !chosen.count({au.group, av.group})) continue;
                double s = std::log(edge_weight(m, av.time - au.time)) - l1b;
                bool better = s > bs;
                if (!better && bp >= 0 && s == bs) {
                    const auto& ab = c.adoptions[bp];
                    better = au.time < ab.time || (au.time == ab.time && au.group < ab.group);
                }
                if (better) {
                    bp = static_cast<int>(u);
                    bs = s;
                }
            }
            f.nodes.push_back({av.group, av.time, bp, bs});
        }
        out.forests.push_back(std::move(f));
    }
    return out;
}

inline void write_forests_csv(std::ostream& os, const std::vector<DiffusionForest>& forests) {
    csv::write_row(os, {"message_id", "child_group", "parent_group", "level"});
    for (const auto& f : forests) {
        auto level = forest_levels(f);
        for (std::size_t i = 0; i < f.nodes.size(); ++i) {
            const auto& n = f.nodes[i];
            csv::write_row(os, {f.message.str(), n.group.str(), n.parent < 0 ? "EXTERNAL" : f.nodes[n.parent].group.str(),
                                std::to_string(level[i])});
        }
    }
}

inline void write_stats_csv(std::ostream& os, const std::vector<DiffusionForest>& forests,
                            const std::vector<CascadeStats>& stats) {
    csv::write_row(os, {"message_id", "n_nodes", "n_edges", "n_isolated", "max_level", "depth", "max_breadth"});
    for (std::size_t i = 0; i < forests.size(); ++i) {
        const auto& s = stats[i];
        csv::write_row(os, {forests[i].message.str(), std::to_string(s.n_nodes), std::to_string(s.n_edges),
                            std::to_string(s.n_isolated), std::to_string(s.max_level), std::to_string(s.depth),
                            std::to_string(s.max_breadth)});
    }
}

} // namespace cascadefit
