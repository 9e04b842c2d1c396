#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "core_model.hpp"
#include "impact.hpp"
#include "ingest.hpp"
#include "netsim.hpp"
#include "reconstruct.hpp"
#include "stats.hpp"
#include "treefit.hpp"

namespace cascadefit {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr)) throw Error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct PipelineConfig {
    double p = 0.02;
    std::optional<double> alpha, beta, epsilon;
    std::optional<double> hop_delay; // time per tree level; defaults to alpha
    std::string mode = "mle-tree";   // or "netinf"
    int edge_budget = 0;             // netinf; 0 = one per non-first adoption
    std::vector<std::string> stratify_by;
    bool overlap_network = false;
    std::uint64_t seed = 1;
    int replicates = 10000;
    int exact_threshold = 12;
    bool pooled_sizes = false;
    FitOptions search;
    // statistic weights; unset means all four with an explicit epsilon, else
    // nodes and level only (see fit_options)
    std::optional<std::array<double, 4>> weights;

    void validate() const {
        if (!(p > 0.0 && p <= 1.0)) throw InputError("p must be in (0,1]");
        if (mode != "mle-tree" && mode != "netinf") throw InputError("mode must be mle-tree or netinf");
        if (edge_budget < 0) throw InputError("edge_budget must be >= 0");
        if (replicates < 1) throw InputError("replicates must be >= 1");
        search.validate();
        if (weights) {
            FitOptions o = search;
            o.weights = *weights;
            o.validate();
        }
    }
};

namespace detail {
template <class T>
json opt_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}
template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& v) {
    if (j.contains(key) && !j[key].is_null()) v = j[key].get<T>();
}
} // namespace detail

inline json to_json(const PipelineConfig& c) {
    return {{"p", c.p},
            {"alpha", detail::opt_json(c.alpha)},
            {"beta", detail::opt_json(c.beta)},
            {"epsilon", detail::opt_json(c.epsilon)},
            {"hop_delay", detail::opt_json(c.hop_delay)},
            {"mode", c.mode},
            {"edge_budget", c.edge_budget},
            {"stratify_by", c.stratify_by},
            {"overlap_network", c.overlap_network},
            {"seed", c.seed},
            {"replicates", c.replicates},
            {"exact_threshold", c.exact_threshold},
            {"pooled_sizes", c.pooled_sizes},
            {"search",
             {{"b_min", c.search.b_min},
              {"b_max", c.search.b_max},
              {"b_step", c.search.b_step},
              {"h_min", c.search.h_min},
              {"h_max", c.search.h_max},
              {"h_step", c.search.h_step},
              {"refine", c.search.refine},
              {"conditional", c.search.conditional},
              {"level", c.search.level == LevelStatistic::Span ? "span" : "max_level"},
              {"weights", detail::opt_json(c.weights)}}}};
}

inline PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig c;
    try {
        c.p = j.value("p", c.p);
        detail::read_opt(j, "alpha", c.alpha);
        detail::read_opt(j, "beta", c.beta);
        detail::read_opt(j, "epsilon", c.epsilon);
        detail::read_opt(j, "hop_delay", c.hop_delay);
        c.mode = j.value("mode", c.mode);
        c.edge_budget = j.value("edge_budget", c.edge_budget);
        c.stratify_by = j.value("stratify_by", c.stratify_by);
        c.overlap_network = j.value("overlap_network", c.overlap_network);
        c.seed = j.value("seed", c.seed);
        c.replicates = j.value("replicates", c.replicates);
        c.exact_threshold = j.value("exact_threshold", c.exact_threshold);
        c.pooled_sizes = j.value("pooled_sizes", c.pooled_sizes);
        if (j.contains("search")) {
            const auto& s = j["search"];
            c.search.b_min = s.value("b_min", c.search.b_min);
            c.search.b_max = s.value("b_max", c.search.b_max);
            c.search.b_step = s.value("b_step", c.search.b_step);
            c.search.h_min = s.value("h_min", c.search.h_min);
            c.search.h_max = s.value("h_max", c.search.h_max);
            c.search.h_step = s.value("h_step", c.search.h_step);
            c.search.refine = s.value("refine", c.search.refine);
            c.search.conditional = s.value("conditional", c.search.conditional);
            auto lvl = s.value("level", std::string("span"));
            if (lvl != "span" && lvl != "max_level") throw InputError("search.level must be span or max_level");
            c.search.level = lvl == "span" ? LevelStatistic::Span : LevelStatistic::MaxLevel;
            detail::read_opt(s, "weights", c.weights);
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    return c;
}

struct SimType {
    std::string name;
    double max_duration = 0.38;
    ContentType content = ContentType::Unlabeled;
};

// Everything simulate/validate need; defaults are the calibrated validation setup.
struct SimSuite {
    SimConfig base;
    std::vector<SimType> types = {{"long", 0.38, ContentType::Unlabeled}, {"short", 0.23, ContentType::Unlabeled}};
    std::vector<double> sampling_rates = {0.02, 0.03, 0.04, 0.05};
    double observe_rate = 1.0; // rate used by simulate when exporting events
    int pilot_cascades = 60;
    bool full_observation_row = true;
};

inline json to_json(const SimSuite& s) {
    json base;
    to_json(base, s.base);
    json types = json::array();
    for (const auto& t : s.types)
        types.push_back({{"name", t.name}, {"max_duration", t.max_duration}, {"content_type", to_string(t.content)}});
    base["types"] = types;
    base["sampling_rates"] = s.sampling_rates;
    base["observe_rate"] = s.observe_rate;
    base["pilot_cascades"] = s.pilot_cascades;
    base["full_observation_row"] = s.full_observation_row;
    return base;
}

inline SimSuite sim_suite_from_json(const json& j) {
    static const std::set<std::string> known = {"n_nodes",     "edge_prob",     "delay_rate",     "trans_scale",
                                                "trans_decay", "max_duration",  "n_cascades",     "seed",
                                                "types",       "sampling_rates", "observe_rate", "pilot_cascades",
                                                "full_observation_row"};
    if (!j.is_object()) throw InputError("sim config must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw InputError("sim config: unknown key '" + k + "'");
    SimSuite s;
    from_json(j, s.base);
    try {
        if (j.contains("types")) {
            s.types.clear();
            for (const auto& t : j["types"]) {
                SimType st;
                st.name = t.at("name").get<std::string>();
                st.max_duration = t.value("max_duration", s.base.max_duration);
                auto c = parse_content(t.value("content_type", std::string("unlabeled")));
                if (!c) throw InputError("unknown content_type in sim type '" + st.name + "'");
                st.content = *c;
                s.types.push_back(st);
            }
        }
        s.sampling_rates = j.value("sampling_rates", s.sampling_rates);
        s.observe_rate = j.value("observe_rate", s.observe_rate);
        s.pilot_cascades = j.value("pilot_cascades", s.pilot_cascades);
        s.full_observation_row = j.value("full_observation_row", s.full_observation_row);
    } catch (const json::exception& e) {
        throw InputError(std::string("sim config: ") + e.what());
    }
    if (s.types.empty()) throw InputError("sim config: no cascade types");
    for (double r : s.sampling_rates)
        if (!(r > 0.0 && r <= 1.0)) throw InputError("sampling rates must be in (0,1]");
    if (!(s.observe_rate > 0.0 && s.observe_rate <= 1.0)) throw InputError("observe_rate must be in (0,1]");
    if (s.pilot_cascades < 1) throw InputError("pilot_cascades must be >= 1");
    for (const auto& t : s.types) {
        SimConfig c = s.base;
        c.max_duration = t.max_duration;
        c.validate();
    }
    return s;
}

inline json load_json_file(const fs::path& p) {
    auto text = read_file(p);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(p.string() + ": " + e.what());
    }
}

// Collects every output in memory; files and the manifest are written at
// the end by a single writer.
class Run {
public:
    Run(std::string command, json config) : command_(std::move(command)), config_(std::move(config)) {}

    void input(const fs::path& p) { inputs_.push_back({p.string(), sha256_hex(read_file(p))}); }
    void output(const std::string& name, std::string contents) { files_[name] = std::move(contents); }
    void warn(std::string msg) {
        std::cerr << "warning: " << msg << '\n';
        warnings_.push_back(std::move(msg));
    }
    void note(const std::string& key, json value) { notes_[key] = std::move(value); }
    const std::map<std::string, std::string>& files() const { return files_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    void write(const fs::path& dir) const {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
        json outs = json::object();
        for (const auto& [name, data] : files_) {
            put(dir / name, data);
            outs[name] = sha256_hex(data);
        }
        json ins = json::array();
        for (const auto& [path, hash] : inputs_) ins.push_back({{"path", path}, {"sha256", hash}});
        json m = {{"command", command_}, {"config", config_}, {"inputs", ins},
                  {"outputs", outs},     {"warnings", warnings_}};
        if (!notes_.empty()) m["notes"] = notes_;
        put(dir / "manifest.json", m.dump(2) + "\n");
    }

private:
    static void put(const fs::path& p, const std::string& data) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + p.string());
        out << data;
        if (!out) throw InputError("cannot write " + p.string());
    }

    std::string command_;
    json config_;
    std::vector<std::pair<std::string, std::string>> inputs_;
    std::map<std::string, std::string> files_;
    std::vector<std::string> warnings_;
    json notes_ = json::object();
};

template <class F>
std::string render(F&& f) {
    std::ostringstream os;
    f(os);
    return os.str();
}

struct Dataset {
    std::vector<LabeledEvent> events;
    BuildResult built;
};

// Row-level errors are fatal at the driver level; rows are named.
inline Dataset load_dataset(const fs::path& events_path, Run& run) {
    run.input(events_path);
    auto loaded = load_events_file(events_path);
    if (!loaded.errors.empty()) {
        std::string msg = events_path.string() + ": " + std::to_string(loaded.errors.size()) + " malformed row(s)";
        for (std::size_t i = 0; i < loaded.errors.size() && i < 10; ++i) {
            const auto& e = loaded.errors[i];
            msg += "\n  row " + std::to_string(e.row) + (e.field.empty() ? "" : " [" + e.field + "]") + ": " + e.message;
        }
        throw InputError(msg);
    }
    Dataset d;
    d.events = std::move(loaded.events);
    d.built = build_cascades(d.events);
    if (d.built.cascades.empty()) run.warn("no cascade spans two or more groups");
    if (!d.built.report.ties.empty())
        run.warn(std::to_string(d.built.report.ties.size()) + " timestamp tie(s) ordered by group id");
    return d;
}

inline std::string stratum_key(const Cascade& c, const std::string& key) {
    if (key == "content_type") return std::string(to_string(c.content));
    if (key == "modality") return std::string(to_string(c.modality));
    if (key == "forwarding_score") return forwarding_label(forwarding_bucket(c.forwarding_score));
    auto it = c.extra.find(key);
    if (it == c.extra.end() || it->second.empty())
        throw InputError("cascade " + c.message.str() + " has no value for stratification key '" + key + "'");
    return it->second;
}

inline std::optional<GroupOverlapNetwork> overlap_from(const PipelineConfig& cfg, const std::optional<fs::path>& groups) {
    if (!cfg.overlap_network) return std::nullopt;
    if (!groups) throw InputError("--overlap-network needs a groups file with member ids");
    return build_overlap_network(load_groups_file(*groups));
}

inline std::vector<DiffusionForest> reconstruct_all(const std::vector<Cascade>& cascades, const TransmissionModel& m,
                                                    const PipelineConfig& cfg, const GroupOverlapNetwork* net) {
    ParentRestriction r{net};
    if (cfg.mode == "netinf") {
        if (cascades.empty()) return {};
        int k = cfg.edge_budget;
        if (k == 0)
            for (const auto& c : cascades) k += static_cast<int>(c.size()) - 1;
        return infer_network(cascades, m, std::max(k, 1), r).forests;
    }
    return parallel_map(cascades.size(), [&](std::size_t i) { return mle_tree(cascades[i], m, r); });
}

inline ModelOverrides overrides(const PipelineConfig& cfg) { return {cfg.alpha, cfg.beta, cfg.epsilon}; }

// Model used to reconstruct before fitting: epsilon follows the sampling
// rate unless set explicitly.
inline TransmissionModel fitting_model(const std::vector<Cascade>& cascades, const PipelineConfig& cfg) {
    auto ov = overrides(cfg);
    double beta = ov.beta.value_or(0.5);
    if (!ov.epsilon) ov.epsilon = sampling_aware_epsilon(beta, cfg.p);
    return default_model(cascades, ov);
}

// With the sampling-aware epsilon nearly every adopter is attached to
// EXTERNAL, so edges and isolated count carry no information beyond the node
// count while their expectations still assume the true parent links; they are
// left out of the objective unless epsilon was chosen by the user.
inline FitOptions fit_options(const PipelineConfig& cfg) {
    FitOptions o = cfg.search;
    if (cfg.weights)
        o.weights = *cfg.weights;
    else if (!cfg.epsilon)
        o.weights = {1.0, 0.0, 0.0, 1.0};
    o.validate();
    return o;
}

struct FittedSet {
    TransmissionModel model;
    double hop_delay = 1.0;
    std::vector<CascadeStats> stats;
    std::vector<FitOutcome> fits;
};

inline FittedSet fit_cascades(const std::vector<Cascade>& cascades, const PipelineConfig& cfg,
                              const GroupOverlapNetwork* net, Run& run) {
    FittedSet fs;
    fs.model = fitting_model(cascades, cfg);
    fs.hop_delay = cfg.hop_delay.value_or(fs.model.alpha);
    auto forests = reconstruct_all(cascades, fs.model, cfg, net);
    std::vector<ObservedStats> obs;
    for (std::size_t i = 0; i < forests.size(); ++i) {
        fs.stats.push_back(cascade_stats(forests[i]));
        obs.push_back(cfg.search.level == LevelStatistic::Span ? observe(fs.stats[i], cascades[i], fs.hop_delay)
                                                               : observe(fs.stats[i]));
    }
    Fitter fitter(cfg.p, fit_options(cfg));
    fs.fits = fit_all(fitter, obs);
    for (std::size_t i = 0; i < fs.fits.size(); ++i)
        if (!fs.fits[i].result) run.warn("fit failed for " + cascades[i].message.str() + ": " + fs.fits[i].error);
    run.note("fitting_model", {{"alpha", fs.model.alpha}, {"beta", fs.model.beta}, {"epsilon", fs.model.epsilon},
                               {"hop_delay", fs.hop_delay}, {"statistic_weights", fitter.options().weights}});
    return fs;
}

inline std::vector<std::string> strata_keys(const PipelineConfig& cfg, bool all_standard) {
    std::vector<std::string> keys;
    if (all_standard) keys = {"content_type", "modality", "forwarding_score"};
    for (const auto& k : cfg.stratify_by)
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    if (keys.empty()) keys.push_back("content_type");
    return keys;
}

inline void emit_strata(const std::vector<Cascade>& cascades, const FittedSet& fs, const std::vector<std::string>& keys,
                        Run& run) {
    for (const auto& key : keys) {
        std::vector<std::string> labels;
        for (const auto& c : cascades) labels.push_back(stratum_key(c, key));
        auto sf = summarize_strata(labels, fs.fits);
        for (const auto& w : sf.warnings) run.warn(key + ": " + w);
        run.output("strata_" + key + ".csv", render([&](std::ostream& os) { write_strata_csv(os, sf.strata); }));
    }
}

inline std::vector<MessageId> ids_of(const std::vector<Cascade>& cascades) {
    std::vector<MessageId> ids;
    for (const auto& c : cascades) ids.push_back(c.message);
    return ids;
}

inline const std::vector<std::pair<ContentType, ContentType>>& wilcoxon_pairs() {
    using C = ContentType;
    static const std::vector<std::pair<C, C>> pairs = {
        {C::Misinformation, C::Unlabeled},   {C::Hateful, C::Unlabeled},          {C::Propaganda, C::Unlabeled},
        {C::Misinformation, C::ViralNormal}, {C::Hateful, C::ViralNormal},        {C::Propaganda, C::ViralNormal},
        {C::Hateful, C::Misinformation},     {C::Propaganda, C::Misinformation}, {C::Propaganda, C::Hateful}};
    return pairs;
}

// Wilcoxon tables over fitted breadth (b) and depth (h) by content type, and
// the two virality regressions.
inline void emit_tests(const std::vector<Cascade>& cascades, const FittedSet& fs, const PipelineConfig& cfg, Run& run) {
    std::map<ContentType, std::vector<double>> bs, hs;
    std::vector<RegressionRow> rb, rh;
    for (std::size_t i = 0; i < cascades.size(); ++i) {
        if (!fs.fits[i].result) continue;
        const auto& c = cascades[i];
        const auto& t = fs.fits[i].result->params;
        bs[c.content].push_back(t.b);
        hs[c.content].push_back(t.h);
        int fb = forwarding_bucket(c.forwarding_score);
        rb.push_back({t.b, fb, c.modality, c.content});
        rh.push_back({t.h, fb, c.modality, c.content});
    }
    for (auto [name, samples] : {std::pair{"breadth", &bs}, std::pair{"depth", &hs}}) {
        std::string out = render([&](std::ostream& os) {
            csv::write_row(os, {"comparison", "statistic", "p_value"});
            for (auto [x, y] : wilcoxon_pairs()) {
                auto ix = samples->find(x), iy = samples->find(y);
                if (ix == samples->end() || iy == samples->end()) continue;
                auto r = rank_sum_test(ix->second, iy->second, cfg.exact_threshold);
                csv::write_row(os, {std::string(to_string(x)) + " - " + std::string(to_string(y)), csv::num(r.statistic),
                                    csv::num(r.p_value)});
            }
        });
        run.output(std::string("wilcoxon_") + name + ".csv", out);
    }
    for (auto [name, rows] : {std::pair{"b", &rb}, std::pair{"h", &rh}}) {
        try {
            auto r = ols_regression(*rows, name);
            run.output(std::string("regression_") + name + ".csv",
                       render([&](std::ostream& os) { write_regression_csv(os, r); }));
            if (r.normal_approx) run.note(std::string("regression_") + name, "p-values use the normal approximation (df > 200)");
        } catch (const Error& e) {
            run.warn(std::string("regression on ") + name + " skipped: " + e.what());
        }
    }
}

inline void emit_ccdfs(const std::vector<Cascade>& cascades, const PipelineConfig& cfg, const GroupOverlapNetwork* net,
                       Run& run) {
    if (cascades.empty()) return;
    auto model = default_model(cascades, overrides(cfg));
    auto forests = reconstruct_all(cascades, model, cfg, net);
    std::map<std::string, std::vector<double>> breadth, depth;
    for (std::size_t i = 0; i < forests.size(); ++i) {
        auto s = cascade_stats(forests[i]);
        auto k = std::string(to_string(cascades[i].content));
        breadth[k].push_back(s.max_breadth);
        depth[k].push_back(s.depth);
    }
    for (auto [name, m] : {std::pair{"breadth", &breadth}, std::pair{"depth", &depth}})
        run.output(std::string("ccdf_") + name + ".csv", render([&](std::ostream& os) {
                       csv::write_row(os, {"stratum", "x", "ccdf"});
                       for (const auto& [k, v] : *m)
                           for (auto [x, p] : ccdf(v)) csv::write_row(os, {k, csv::num(x), csv::num(p)});
                   }));
}

inline void emit_impact(const std::vector<StratumSummary>& strata, const std::map<std::string, SizeSample>& sizes,
                        const std::vector<double>& pooled, const PipelineConfig& cfg, Run& run) {
    ImpactConfig ic;
    ic.replicates = cfg.replicates;
    ic.seed = cfg.seed;
    for (const auto& s : strata) {
        StratumImpact si{s.key, TreeParams(s.mu_b, s.mu_h), pooled};
        if (!cfg.pooled_sizes) {
            auto it = sizes.find(s.key);
            if (it == sizes.end() || it->second.sizes.empty()) {
                run.warn("no group sizes for stratum '" + s.key + "'; using pooled sizes");
            } else {
                si.sizes = it->second.sizes;
            }
        }
        if (si.sizes.empty()) throw InputError("no group sizes available for stratum '" + s.key + "'");
        ic.strata.push_back(std::move(si));
    }
    auto reach = estimate_reach(ic);
    run.output("reach.csv", render([&](std::ostream& os) { write_reach_csv(os, reach); }));
    run.output("reach_summary.csv", render([&](std::ostream& os) { write_reach_summary_csv(os, reach); }));
    run.output("reach_histogram.csv", render([&](std::ostream& os) { write_reach_histogram_csv(os, reach); }));
}

inline std::vector<double> catalog_sizes(const GroupCatalog& cat) {
    std::vector<double> out;
    for (const auto& [g, info] : cat) out.push_back(static_cast<double>(info.size));
    return out;
}

// ---------------------------------------------------------------- commands

inline Run cmd_simulate(const fs::path& config_path, std::optional<std::uint64_t> seed) {
    auto suite = sim_suite_from_json(load_json_file(config_path));
    if (seed) suite.base.seed = *seed;
    Run run("simulate", to_json(suite));
    run.input(config_path);
    auto g = generate_network(suite.base);

    std::vector<LabeledEvent> events;
    json truth = json::object();
    for (std::size_t k = 0; k < suite.types.size(); ++k) {
        const auto& type = suite.types[k];
        SimConfig cfg = suite.base;
        cfg.max_duration = type.max_duration;
        auto cascades = simulate_cascades(g, cfg, derive_seed(cfg.seed, 1 + k));
        json t = {{"n_cascades", cascades.size()}};
        try {
            auto tp = true_params(cascades);
            t["b"] = tp.b;
            t["h"] = tp.h;
        } catch (const NumericalError&) {
            t["b"] = nullptr;
            t["h"] = nullptr;
            run.warn("type '" + type.name + "': no cascade transmitted beyond its root");
        }
        std::size_t exported = 0;
        for (std::size_t i = 0; i < cascades.size(); ++i) {
            char id[64];
            std::snprintf(id, sizeof id, "%s-%04zu", type.name.c_str(), i);
            auto sc = sample_cascade(cascades[i], suite.observe_rate, derive_seed(derive_seed(cfg.seed, 300 + k), i),
                                     MessageId(id));
            if (sc.size() < 2) continue;
            ++exported;
            for (const auto& a : sc.adoptions) {
                LabeledEvent e;
                e.message = sc.message;
                e.group = a.group;
                e.time = a.time;
                e.content = type.content;
                e.extra["sim_type"] = type.name;
                events.push_back(std::move(e));
            }
        }
        t["exported_cascades"] = exported;
        truth[type.name] = t;
    }
    if (events.empty()) run.warn("zero events after the two-group filter");
    run.output("events.csv", render([&](std::ostream& os) { write_events_csv(os, events); }));
    run.output("truth.json", truth.dump(2) + "\n");
    return run;
}

struct ValidationRow {
    std::string type;
    double rate = 0.0;
    TreeParams truth;
    double b_hat = 0.0, h_hat = 0.0;
    int n_fitted = 0;
    double hop_delay = 0.0;
    double rel_b() const { return std::abs(b_hat - truth.b) / truth.b; }
    double rel_h() const { return std::abs(h_hat - truth.h) / truth.h; }
};

// Time per tree level, estimated on an independent fully observed pilot run:
// total first-to-last span over total reconstructed depth, with candidate
// parents restricted to contact-network neighbours.
inline double calibrate_hop_delay(const Network& g, const SimConfig& cfg, int pilot_cascades, std::uint64_t stream) {
    SimConfig pc = cfg;
    pc.n_cascades = pilot_cascades;
    auto pilot = simulate_cascades(g, pc, stream);
    GroupOverlapNetwork contact;
    std::vector<Cascade> observed;
    for (std::size_t i = 0; i < pilot.size(); ++i) {
        auto c = sample_cascade(pilot[i], 1.0, 0, MessageId("pilot-" + std::to_string(i)));
        if (c.size() >= 2) observed.push_back(std::move(c));
    }
    if (observed.empty()) throw NumericalError("pilot run produced no multi-node cascades");
    std::set<int> touched;
    for (const auto& c : pilot)
        for (const auto& inf : c.infections) touched.insert(inf.node);
    for (int u : touched)
        for (const auto& a : g.adj[u])
            if (touched.count(a.to) && u < a.to) contact.add(node_group(u), node_group(a.to));
    // argmax is the latest earlier neighbour for any alpha; a wide alpha keeps
    // weights from underflowing below the negligible external weight
    double widest = 0.0;
    for (const auto& c : observed) widest = std::max(widest, c.adoptions.back().time - c.adoptions.front().time);
    TransmissionModel model{std::max(widest, 1e-9), 0.5, std::numeric_limits<double>::min()};
    double span = 0.0, depth = 0.0;
    for (const auto& c : observed) {
        auto f = mle_tree(c, model, ParentRestriction{&contact});
        span += c.adoptions.back().time - c.adoptions.front().time;
        depth += cascade_stats(f).depth;
    }
    if (!(depth > 0.0)) throw NumericalError("pilot run has zero reconstructed depth");
    return span / depth;
}

inline std::vector<ValidationRow> run_validation(const SimSuite& suite, const PipelineConfig& pcfg) {
    auto g = generate_network(suite.base);
    std::vector<ValidationRow> rows;
    for (std::size_t k = 0; k < suite.types.size(); ++k) {
        SimConfig cfg = suite.base;
        cfg.max_duration = suite.types[k].max_duration;
        auto cascades = simulate_cascades(g, cfg, derive_seed(cfg.seed, 1 + k));
        auto truth = true_params(cascades);
        double hop = pcfg.hop_delay ? *pcfg.hop_delay
                                    : calibrate_hop_delay(g, cfg, suite.pilot_cascades, derive_seed(cfg.seed, 101 + k));
        auto rates = suite.sampling_rates;
        if (suite.full_observation_row) rates.push_back(1.0);
        for (std::size_t r = 0; r < rates.size(); ++r) {
            PipelineConfig c = pcfg;
            c.p = rates[r];
            c.hop_delay = hop;
            std::uint64_t stream = derive_seed(derive_seed(cfg.seed, 200 + k), r);
            std::vector<Cascade> observed;
            for (std::size_t i = 0; i < cascades.size(); ++i) {
                auto sc = sample_cascade(cascades[i], c.p, derive_seed(stream, i),
                                         MessageId(suite.types[k].name + "-" + std::to_string(i)));
                if (sc.size() >= 2) observed.push_back(std::move(sc));
            }
            ValidationRow row{suite.types[k].name, c.p, truth, 0.0, 0.0, 0, hop};
            if (!observed.empty()) {
                Run scratch("validate", json::object());
                auto fs = fit_cascades(observed, c, nullptr, scratch);
                for (const auto& f : fs.fits)
                    if (f.result) {
                        row.b_hat += f.result->params.b;
                        row.h_hat += f.result->params.h;
                        ++row.n_fitted;
                    }
                if (row.n_fitted) {
                    row.b_hat /= row.n_fitted;
                    row.h_hat /= row.n_fitted;
                }
            }
            rows.push_back(row);
        }
    }
    return rows;
}

inline std::string validation_table(const std::vector<ValidationRow>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-8s %-6s %7s %7s %9s %7s %7s %9s %5s\n", "type", "p", "b", "b_hat", "rel_err",
                  "h", "h_hat", "rel_err", "n");
    out += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-8s %-6.2f %7.3f %7.3f %9.3f %7.3f %7.3f %9.3f %5d\n", r.type.c_str(), r.rate,
                      r.truth.b, r.b_hat, r.rel_b(), r.truth.h, r.h_hat, r.rel_h(), r.n_fitted);
        out += buf;
    }
    return out;
}

inline Run cmd_validate(const fs::path& config_path, const PipelineConfig& pcfg, std::optional<std::uint64_t> seed) {
    auto suite = sim_suite_from_json(load_json_file(config_path));
    if (seed) suite.base.seed = *seed;
    json cfg = to_json(suite);
    cfg["pipeline"] = to_json(pcfg);
    Run run("validate", cfg);
    run.input(config_path);
    auto rows = run_validation(suite, pcfg);
    run.output("validation.csv", render([&](std::ostream& os) {
                   csv::write_row(os, {"type", "sampling_rate", "b", "b_hat", "rel_err_b", "h", "h_hat", "rel_err_h",
                                       "n_fitted", "hop_delay"});
                   for (const auto& r : rows)
                       csv::write_row(os, {r.type, csv::fixed(r.rate, 2), csv::fixed(r.truth.b, 3), csv::fixed(r.b_hat, 3),
                                           csv::fixed(r.rel_b(), 3), csv::fixed(r.truth.h, 3), csv::fixed(r.h_hat, 3),
                                           csv::fixed(r.rel_h(), 3), std::to_string(r.n_fitted),
                                           csv::num(r.hop_delay)});
               }));
    run.output("validation.txt", validation_table(rows));
    return run;
}

struct DataInputs {
    fs::path events;
    std::optional<fs::path> groups;
};

inline Run cmd_reconstruct(const DataInputs& in, const PipelineConfig& cfg) {
    cfg.validate();
    Run run("reconstruct", to_json(cfg));
    auto d = load_dataset(in.events, run);
    if (in.groups) run.input(*in.groups);
    auto net = overlap_from(cfg, in.groups);
    const auto& cs = d.built.cascades;
    auto model = cs.empty() ? TransmissionModel{} : default_model(cs, overrides(cfg));
    auto forests = reconstruct_all(cs, model, cfg, net ? &*net : nullptr);
    std::vector<CascadeStats> stats;
    for (const auto& f : forests) stats.push_back(cascade_stats(f));
    run.note("model", {{"alpha", model.alpha}, {"beta", model.beta}, {"epsilon", model.epsilon}});
    run.output("forests.csv", render([&](std::ostream& os) { write_forests_csv(os, forests); }));
    run.output("cascade_stats.csv", render([&](std::ostream& os) { write_stats_csv(os, forests, stats); }));
    run.output("drop_report.json", d.built.report.to_json().dump(2) + "\n");
    emit_ccdfs(cs, cfg, net ? &*net : nullptr, run);
    return run;
}

inline Run cmd_fit(const DataInputs& in, const PipelineConfig& cfg) {
    cfg.validate();
    Run run("fit", to_json(cfg));
    auto d = load_dataset(in.events, run);
    if (in.groups) run.input(*in.groups);
    auto net = overlap_from(cfg, in.groups);
    const auto& cs = d.built.cascades;
    auto fs = fit_cascades(cs, cfg, net ? &*net : nullptr, run);
    run.output("fits.csv", render([&](std::ostream& os) { write_fits_csv(os, ids_of(cs), fs.fits); }));
    if (!cs.empty()) emit_strata(cs, fs, strata_keys(cfg, false), run);
    return run;
}

inline Run cmd_stats(const DataInputs& in, const PipelineConfig& cfg) {
    cfg.validate();
    Run run("stats", to_json(cfg));
    auto d = load_dataset(in.events, run);
    std::optional<GroupCatalog> cat;
    if (in.groups) {
        run.input(*in.groups);
        cat = load_groups_file(*in.groups);
    }
    auto net = overlap_from(cfg, in.groups);
    const auto& cs = d.built.cascades;
    auto fs = fit_cascades(cs, cfg, net ? &*net : nullptr, run);
    emit_tests(cs, fs, cfg, run);
    if (cat) {
        auto sizes = group_size_distribution(cs, *cat, [](const Cascade& c) { return std::string(to_string(c.content)); });
        run.output("group_sizes.csv", render([&](std::ostream& os) {
                       csv::write_row(os, {"stratum", "n", "q05", "q25", "q50", "q75", "q95"});
                       for (const auto& [k, s] : sizes) {
                           std::vector<std::string> row = {k, std::to_string(s.sizes.size())};
                           for (double q : s.quantiles) row.push_back(csv::num(q));
                           csv::write_row(os, row);
                       }
                   }));
    }
    return run;
}

inline std::vector<StratumSummary> load_strata_csv(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open " + p.string());
    auto recs = csv::read(in);
    if (recs.empty()) throw InputError(p.string() + ": empty strata file");
    const auto& h = recs.front().fields;
    auto col = [&](const std::string& name) {
        auto it = std::find(h.begin(), h.end(), name);
        if (it == h.end()) throw InputError(p.string() + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - h.begin());
    };
    auto ks = col("stratum"), bs = col("mu_b"), hs = col("mu_h");
    std::vector<StratumSummary> out;
    for (std::size_t r = 1; r < recs.size(); ++r) {
        const auto& f = recs[r].fields;
        auto b = csv::parse_double(f.at(bs)), hh = csv::parse_double(f.at(hs));
        if (f.size() != h.size() || !b || !hh)
            throw InputError(p.string() + ": bad row on line " + std::to_string(recs[r].line));
        StratumSummary s;
        s.key = f[ks];
        s.mu_b = *b;
        s.mu_h = *hh;
        out.push_back(s);
    }
    return out;
}

inline Run cmd_impact(const fs::path& strata_path, const DataInputs& in, const PipelineConfig& cfg) {
    cfg.validate();
    Run run("impact", to_json(cfg));
    run.input(strata_path);
    if (!in.groups) throw InputError("impact needs a groups file");
    run.input(*in.groups);
    auto cat = load_groups_file(*in.groups);
    auto strata = load_strata_csv(strata_path);
    std::map<std::string, SizeSample> sizes;
    if (!in.events.empty()) {
        auto d = load_dataset(in.events, run);
        auto key = strata_keys(cfg, false).front();
        sizes = group_size_distribution(d.built.cascades, cat, [&](const Cascade& c) { return stratum_key(c, key); });
    }
    PipelineConfig c = cfg;
    if (in.events.empty()) c.pooled_sizes = true;
    emit_impact(strata, sizes, catalog_sizes(cat), c, run);
    return run;
}

inline Run cmd_analyze(const DataInputs& in, const PipelineConfig& cfg) {
    cfg.validate();
    Run run("analyze", to_json(cfg));
    auto d = load_dataset(in.events, run);
    std::optional<GroupCatalog> cat;
    if (in.groups) {
        run.input(*in.groups);
        cat = load_groups_file(*in.groups);
    }
    auto net = overlap_from(cfg, in.groups);
    const GroupOverlapNetwork* np = net ? &*net : nullptr;
    const auto& cs = d.built.cascades;

    run.output("dataset_summary.csv", render([&](std::ostream& os) {
                   csv::write_row(os, {"factor", "level", "messages", "groups"});
                   for (const auto& s : summarize_dataset(d.events))
                       csv::write_row(os, {s.factor, s.level, std::to_string(s.messages), std::to_string(s.groups)});
               }));
    run.output("drop_report.json", d.built.report.to_json().dump(2) + "\n");
    if (cs.empty()) return run;

    auto fs = fit_cascades(cs, cfg, np, run);
    run.output("fits.csv", render([&](std::ostream& os) { write_fits_csv(os, ids_of(cs), fs.fits); }));
    emit_strata(cs, fs, strata_keys(cfg, true), run);
    emit_tests(cs, fs, cfg, run);
    emit_ccdfs(cs, cfg, np, run);

    if (cat) {
        std::vector<std::string> labels;
        for (const auto& c : cs) labels.push_back(std::string(to_string(c.content)));
        auto strata = summarize_strata(labels, fs.fits).strata;
        auto sizes = group_size_distribution(cs, *cat, [](const Cascade& c) { return std::string(to_string(c.content)); });
        emit_impact(strata, sizes, catalog_sizes(*cat), cfg, run);
    } else {
        run.warn("no groups file; reach estimation skipped");
    }
    return run;
}

} // namespace cascadefit
