#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "core_model.hpp"
#include "ingest.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace cascadefit {

struct SimConfig {
    int n_nodes = 2000;
    double edge_prob = 20.0 / 1999.0; // mean degree 20
    double delay_rate = 1.0;          // lambda
    double trans_scale = 0.8;         // rho
    double trans_decay = 2.0;         // tau
    double max_duration = 0.38;       // D
    int n_cascades = 100;
    std::uint64_t seed = 20240521;

    void validate() const {
        auto need = [](bool ok, const char* what) {
            if (!ok) throw InputError(std::string("invalid sim config: ") + what);
        };
        need(n_nodes >= 1, "n_nodes must be positive");
        need(edge_prob > 0 && edge_prob <= 1, "edge_prob must be in (0,1]");
        need(delay_rate > 0, "delay_rate must be positive");
        need(trans_scale > 0 && trans_scale <= 1, "trans_scale must be in (0,1]");
        need(trans_decay > 0, "trans_decay must be positive");
        need(max_duration > 0, "max_duration must be positive");
        need(n_cascades >= 1, "n_cascades must be positive");
    }
};

inline void to_json(nlohmann::json& j, const SimConfig& c) {
    j = {{"n_nodes", c.n_nodes},           {"edge_prob", c.edge_prob},     {"delay_rate", c.delay_rate},
         {"trans_scale", c.trans_scale},   {"trans_decay", c.trans_decay}, {"max_duration", c.max_duration},
         {"n_cascades", c.n_cascades},     {"seed", c.seed}};
}

// missing keys keep their defaults
inline void from_json(const nlohmann::json& j, SimConfig& c) {
    try {
        c.n_nodes = j.value("n_nodes", c.n_nodes);
        c.edge_prob = j.value("edge_prob", c.edge_prob);
        c.delay_rate = j.value("delay_rate", c.delay_rate);
        c.trans_scale = j.value("trans_scale", c.trans_scale);
        c.trans_decay = j.value("trans_decay", c.trans_decay);
        c.max_duration = j.value("max_duration", c.max_duration);
        c.n_cascades = j.value("n_cascades", c.n_cascades);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("sim config: ") + e.what());
    }
}

struct Network {
    struct Arc {
        int to;
        double delay;
    };
    int n = 0;
    std::vector<std::vector<Arc>> adj;
    std::size_t edge_count = 0;

    void add_edge(int u, int v, double delay) {
        adj[u].push_back({v, delay});
        adj[v].push_back({u, delay});
        ++edge_count;
    }
};

inline Network make_network(int n) {
    Network g;
    g.n = n;
    g.adj.resize(n);
    return g;
}

// Erdos-Renyi G(n, edge_prob); each edge keeps one Exp(lambda) delay for good.
inline Network generate_network(const SimConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 0));
    Network g = make_network(cfg.n_nodes);
    for (int u = 0; u < cfg.n_nodes; ++u)
        for (int v = u + 1; v < cfg.n_nodes; ++v)
            if (rng.bernoulli(cfg.edge_prob)) {
                double d;
                do { d = rng.exponential(cfg.delay_rate); } while (d <= 0.0);
                g.add_edge(u, v, d);
            }
    return g;
}

struct Infection {
    int node = 0;
    double time = 0.0;
    int parent = -1; // -1 for the root
};

struct TrueCascade {
    int root = 0;
    std::vector<Infection> infections; // in infection order, root first
};

// Independent cascade with fixed edge delays: when u is settled it tries each
// unsettled neighbour once, succeeding with prob rho*exp(-delay/tau). A node
// takes its time and parent from the earliest successful transmitter.
inline TrueCascade simulate_cascade(const Network& g, const SimConfig& cfg, int root, Rng& rng) {
    if (root < 0 || root >= g.n) throw InputError("root not in graph");
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> best(g.n, inf);
    std::vector<char> done(g.n, 0);
    using Item = std::tuple<double, int, int>; // time, node, parent
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    best[root] = 0.0;
    pq.emplace(0.0, root, -1);

    TrueCascade tc;
    tc.root = root;
    while (!pq.empty()) {
        auto [t, u, par] = pq.top();
        pq.pop();
        if (done[u]) continue;
        done[u] = 1;
        tc.infections.push_back({u, t, par});
        for (const auto& a : g.adj[u]) {
            if (done[a.to]) continue;
            if (!rng.bernoulli(cfg.trans_scale * std::exp(-a.delay / cfg.trans_decay))) continue;
            double tv = t + a.delay;
            if (tv <= cfg.max_duration && tv < best[a.to]) {
                best[a.to] = tv;
                pq.emplace(tv, a.to, u);
            }
        }
    }
    return tc;
}

// Cascade i uses its own derived stream, so the set is thread-count independent.
inline std::vector<TrueCascade> simulate_cascades(const Network& g, const SimConfig& cfg, std::uint64_t stream) {
    return parallel_map(static_cast<std::size_t>(cfg.n_cascades), [&](std::size_t i) {
        Rng rng(derive_seed(stream, i));
        int root = static_cast<int>(rng.below(static_cast<std::uint64_t>(g.n)));
        return simulate_cascade(g, cfg, root, rng);
    });
}

struct CascadeShape {
    double mean_children = 0.0; // over non-leaf nodes
    int depth = 0;
};

inline CascadeShape shape_of(const TrueCascade& c) {
    std::vector<int> level(c.infections.size(), 0), children(c.infections.size(), 0);
    // parents always precede children in infection order
    std::vector<std::pair<int, std::size_t>> pos;
    pos.reserve(c.infections.size());
    for (std::size_t i = 0; i < c.infections.size(); ++i) pos.emplace_back(c.infections[i].node, i);
    std::sort(pos.begin(), pos.end());
    auto find = [&](int node) {
        auto it = std::lower_bound(pos.begin(), pos.end(), std::pair<int, std::size_t>{node, 0});
        return it->second;
    };
    CascadeShape s;
    for (std::size_t i = 0; i < c.infections.size(); ++i) {
        int p = c.infections[i].parent;
        if (p < 0) continue;
        std::size_t pi = find(p);
        level[i] = level[pi] + 1;
        ++children[pi];
        s.depth = std::max(s.depth, level[i]);
    }
    int internal = 0, total = 0;
    for (int k : children)
        if (k > 0) {
            ++internal;
            total += k;
        }
    s.mean_children = internal ? static_cast<double>(total) / internal : 0.0;
    return s;
}

// Ground truth averaged over cascades with at least one transmission.
inline TreeParams true_params(const std::vector<TrueCascade>& cascades) {
    if (cascades.empty()) throw InputError("true_params: empty cascade list");
    double sb = 0.0, sh = 0.0;
    int m = 0;
    for (const auto& c : cascades) {
        if (c.infections.size() < 2) continue;
        auto s = shape_of(c);
        sb += s.mean_children;
        sh += s.depth;
        ++m;
    }
    if (m == 0) throw NumericalError("no internal nodes");
    return TreeParams(sb / m, sh / m);
}

// Complete-tree cascade drawn from the model itself: depth floor(h) +
// Bernoulli(frac h), floor(b) + Bernoulli(frac b) children per node (the
// same convention as impact::generate_tree). Level l adopts at l*hop_delay
// plus a uniform jitter below jitter*hop_delay.
inline TrueCascade simulate_tree_cascade(const TreeParams& t, double hop_delay, double jitter, Rng& rng) {
    if (!(hop_delay > 0.0) || !(jitter >= 0.0 && jitter < 1.0)) throw InputError("invalid hop delay or jitter");
    const int hf = static_cast<int>(std::floor(t.h));
    const int H = hf + (t.h - hf > 0.0 && rng.bernoulli(t.h - hf) ? 1 : 0);
    const int bf = static_cast<int>(std::floor(t.b));
    const double bfrac = t.b - bf;
    TrueCascade c;
    c.infections.push_back({0, 0.0, -1});
    std::size_t begin = 0, end = 1;
    for (int level = 1; level <= H; ++level) {
        for (std::size_t i = begin; i < end; ++i) {
            int k = bf + (bfrac > 0.0 && rng.bernoulli(bfrac) ? 1 : 0);
            for (int j = 0; j < k; ++j) {
                int node = static_cast<int>(c.infections.size());
                c.infections.push_back({node, (level + jitter * rng.uniform()) * hop_delay, c.infections[i].node});
            }
        }
        begin = end;
        end = c.infections.size();
        if (end > 5'000'000) throw NumericalError("tree cascade too large");
    }
    return c;
}

inline GroupId node_group(int node) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "g%06d", node);
    return GroupId(buf);
}

// Keeps each infected node independently with prob p; parents are dropped.
// The result may hold fewer than two adoptions.
inline Cascade sample_cascade(const TrueCascade& c, double p, std::uint64_t seed, MessageId message) {
    if (!(p > 0.0 && p <= 1.0)) throw InputError("sampling rate must be in (0,1]");
    Rng rng(seed);
    Cascade out;
    out.message = std::move(message);
    for (const auto& inf : c.infections) {
        bool keep = p >= 1.0 || rng.bernoulli(p);
        if (keep) out.adoptions.push_back({node_group(inf.node), inf.time});
    }
    std::stable_sort(out.adoptions.begin(), out.adoptions.end(), [](const Adoption& a, const Adoption& b) {
        return a.time != b.time ? a.time < b.time : a.group < b.group;
    });
    return out;
}

} // namespace cascadefit
