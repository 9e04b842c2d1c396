#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <cascadefit/pipeline.hpp>

using namespace cascadefit;

namespace {

struct Flags {
    std::string config, events, groups, out_dir, strata;
    std::optional<double> p, alpha, beta, epsilon, hop_delay;
    std::optional<std::string> mode;
    std::vector<std::string> stratify_by;
    bool overlap = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> replicates, edge_budget;
};

void add_model_flags(CLI::App* sc, Flags& f) {
    sc->add_option("--p", f.p, "sampling probability of a group (default 0.02)");
    sc->add_option("--alpha", f.alpha, "transmission decay scale (default: mean inter-adoption gap)");
    sc->add_option("--beta", f.beta, "transmission probability (default 0.5)");
    sc->add_option("--epsilon", f.epsilon, "external-influence weight");
    sc->add_option("--hop-delay", f.hop_delay, "time per tree level for the depth statistic (default: alpha)");
    sc->add_option("--mode", f.mode, "mle-tree | netinf")->check(CLI::IsMember({"mle-tree", "netinf"}));
    sc->add_option("--edge-budget", f.edge_budget, "netinf edge budget (0 = automatic)");
    sc->add_option("--stratify-by", f.stratify_by, "extra stratification column(s)");
    sc->add_flag("--overlap-network", f.overlap, "restrict parents to groups sharing a member");
    sc->add_option("--replicates", f.replicates, "reach Monte Carlo replicates");
}

void add_data_flags(CLI::App* sc, Flags& f, bool events_required) {
    auto* e = sc->add_option("--events", f.events, "event file (CSV or JSONL)")->check(CLI::ExistingFile);
    if (events_required) e->required();
    sc->add_option("--groups", f.groups, "groups file group_id,size[,member_ids]")->check(CLI::ExistingFile);
    sc->add_option("--config", f.config, "pipeline config JSON")->check(CLI::ExistingFile);
}

PipelineConfig pipeline_config(const Flags& f, bool config_is_pipeline) {
    PipelineConfig c;
    if (config_is_pipeline && !f.config.empty()) c = pipeline_config_from_json(load_json_file(f.config));
    if (f.p) c.p = *f.p;
    if (f.alpha) c.alpha = f.alpha;
    if (f.beta) c.beta = f.beta;
    if (f.epsilon) c.epsilon = f.epsilon;
    if (f.hop_delay) c.hop_delay = f.hop_delay;
    if (f.mode) c.mode = *f.mode;
    if (f.edge_budget) c.edge_budget = *f.edge_budget;
    if (!f.stratify_by.empty()) c.stratify_by = f.stratify_by;
    if (f.overlap) c.overlap_network = true;
    if (f.seed) c.seed = *f.seed;
    if (f.replicates) c.replicates = *f.replicates;
    c.validate();
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascade reconstruction and complete-tree (b,h) estimation.\n"
                 "Thread count: " + std::string(kThreadsEnv) + " environment variable."};
    app.require_subcommand(1);
    Flags f;

    auto* sim = app.add_subcommand("simulate", "simulate cascades and export events plus ground truth");
    auto* val = app.add_subcommand("validate", "simulate, sample, reconstruct, fit; report (b,h) recovery");
    for (auto* sc : {sim, val}) {
        sc->add_option("--config", f.config, "simulation config JSON")->required()->check(CLI::ExistingFile);
    }
    add_model_flags(val, f);
    auto* rec = app.add_subcommand("reconstruct", "per-cascade diffusion forests and statistics");
    auto* fit = app.add_subcommand("fit", "per-cascade (b,h) fits and stratum summaries");
    auto* st = app.add_subcommand("stats", "Wilcoxon tables, regressions, group-size quantiles");
    auto* imp = app.add_subcommand("impact", "population-reach Monte Carlo from stratum parameters");
    auto* ana = app.add_subcommand("analyze", "every results artifact in one run");
    for (auto* sc : {rec, fit, st, ana}) {
        add_data_flags(sc, f, true);
        add_model_flags(sc, f);
    }
    add_data_flags(imp, f, false);
    add_model_flags(imp, f);
    imp->add_option("--strata", f.strata, "strata CSV with stratum,mu_b,mu_h")->required()->check(CLI::ExistingFile);
    for (auto* sc : {sim, val, rec, fit, st, imp, ana}) {
        sc->add_option("--seed", f.seed, "random seed");
        sc->add_option("--out-dir", f.out_dir, "output directory")->required();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        std::optional<fs::path> groups;
        if (!f.groups.empty()) groups = fs::path(f.groups);
        DataInputs in{f.events, groups};
        std::optional<Run> run;
        if (sim->parsed()) {
            run = cmd_simulate(f.config, f.seed);
        } else if (val->parsed()) {
            run = cmd_validate(f.config, pipeline_config(f, false), f.seed);
            std::cout << run->files().at("validation.txt");
        } else if (rec->parsed()) {
            run = cmd_reconstruct(in, pipeline_config(f, true));
        } else if (fit->parsed()) {
            run = cmd_fit(in, pipeline_config(f, true));
        } else if (st->parsed()) {
            run = cmd_stats(in, pipeline_config(f, true));
        } else if (imp->parsed()) {
            run = cmd_impact(f.strata, in, pipeline_config(f, true));
        } else if (ana->parsed()) {
            run = cmd_analyze(in, pipeline_config(f, true));
        }
        run->write(f.out_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
