#include <gtest/gtest.h>

#include <cascadefit/pipeline.hpp>

#include "fixtures.hpp"

using namespace cascadefit;
namespace fs = std::filesystem;
using fs::path;

namespace {

std::map<std::string, double> column_by_stratum(const std::string& csv_text, const std::string& column) {
    std::istringstream in(csv_text);
    auto recs = csv::read(in);
    const auto& h = recs.at(0).fields;
    auto c = std::find(h.begin(), h.end(), column) - h.begin();
    std::map<std::string, double> out;
    for (std::size_t r = 1; r < recs.size(); ++r) out[recs[r].fields[0]] = *csv::parse_double(recs[r].fields[c]);
    return out;
}

path write_config(const path& dir, const std::string& name, const std::string& body) {
    auto p = dir / name;
    std::ofstream(p) << body;
    return p;
}

struct TwoPopulations : ::testing::Test {
    static inline path dir, events, groups;
    static void SetUpTestSuite() {
        dir = fixture::scratch_dir("two_pop");
        events = dir / "events.csv";
        groups = dir / "groups.csv";
        int n = fixture::write_tree_events(events,
                                           {{ContentType::Hateful, {4, 6}, 120, "x"},
                                            {ContentType::ViralNormal, {3, 5}, 400, "y"}},
                                           0.05, 77);
        fixture::write_groups(groups, n, true);
    }
    static PipelineConfig config(double p) {
        PipelineConfig c;
        c.p = p;
        c.hop_delay = 1.0;
        c.replicates = 200;
        return c;
    }
};

} // namespace

TEST(Simulate, SameSeedSameBytes) {
    auto dir = fixture::scratch_dir("sim");
    auto cfg = write_config(dir, "sim.json", R"({"n_nodes": 300, "n_cascades": 20})");
    auto a = cmd_simulate(cfg, 5), b = cmd_simulate(cfg, 5), c = cmd_simulate(cfg, 6);
    EXPECT_EQ(a.files(), b.files());
    EXPECT_NE(a.files().at("events.csv"), c.files().at("events.csv"));
    a.write(dir / "a");
    b.write(dir / "b");
    EXPECT_EQ(fixture::dir_contents(dir / "a"), fixture::dir_contents(dir / "b"));
}

TEST(Simulate, IsolatedRootWarnsAndExportsNothing) {
    auto dir = fixture::scratch_dir("sim_iso");
    auto cfg = write_config(dir, "sim.json", R"({"n_nodes": 50, "edge_prob": 1e-9, "n_cascades": 1})");
    auto r = cmd_simulate(cfg, 1);
    EXPECT_EQ(r.files().at("events.csv").find('\n') + 1, r.files().at("events.csv").size()); // header only
    bool warned = false;
    for (const auto& w : r.warnings()) warned = warned || w.find("zero events") != std::string::npos;
    EXPECT_TRUE(warned);
}

TEST(Validate, ThreadCountDoesNotChangeOutput) {
    auto dir = fixture::scratch_dir("val");
    auto cfg = write_config(dir, "sim.json",
                            R"({"n_nodes": 300, "edge_prob": 0.05, "n_cascades": 30, "pilot_cascades": 10})");
    setenv(kThreadsEnv, "1", 1);
    auto a = cmd_validate(cfg, {}, 3);
    setenv(kThreadsEnv, "4", 1);
    auto b = cmd_validate(cfg, {}, 3);
    unsetenv(kThreadsEnv);
    EXPECT_EQ(a.files(), b.files());
}

TEST_F(TwoPopulations, HarmfulStratumWiderDeeperAndSignificant) {
    auto run = cmd_analyze({events, groups}, config(0.05));
    auto mu_b = column_by_stratum(run.files().at("strata_content_type.csv"), "mu_b");
    auto mu_h = column_by_stratum(run.files().at("strata_content_type.csv"), "mu_h");
    EXPECT_GT(mu_b.at("hateful"), mu_b.at("viral_normal"));
    EXPECT_GT(mu_h.at("hateful"), mu_h.at("viral_normal"));
    for (auto name : {"wilcoxon_breadth.csv", "wilcoxon_depth.csv"}) {
        auto p = column_by_stratum(run.files().at(name), "p_value");
        EXPECT_LT(p.at("hateful - viral_normal"), 0.05) << name;
    }
    for (auto name : {"fits.csv", "strata_modality.csv", "strata_forwarding_score.csv", "regression_b.csv",
                      "regression_h.csv", "ccdf_breadth.csv", "ccdf_depth.csv", "reach_summary.csv",
                      "dataset_summary.csv", "drop_report.json"})
        EXPECT_TRUE(run.files().count(name)) << name;
}

TEST_F(TwoPopulations, LargerAssumedSamplingRateGivesSmallerBreadth) {
    auto lo = cmd_fit({events, groups}, config(0.01));
    auto hi = cmd_fit({events, groups}, config(0.05));
    auto b_lo = column_by_stratum(lo.files().at("strata_content_type.csv"), "mu_b");
    auto b_hi = column_by_stratum(hi.files().at("strata_content_type.csv"), "mu_b");
    EXPECT_GT(b_lo.at("hateful"), b_hi.at("hateful"));
    EXPECT_GT(b_lo.at("viral_normal"), b_hi.at("viral_normal"));
}

TEST(Overlap, CompleteOverlapNetworkIsVacuous) {
    auto dir = fixture::scratch_dir("overlap");
    auto events = dir / "events.csv", groups = dir / "groups.csv";
    int n = fixture::write_tree_events(events, {{ContentType::Hateful, {3, 5}, 60, "x"}, {ContentType::Unlabeled, {2, 5}, 60, "y"}},
                                       0.1, 12);
    fixture::write_groups(groups, n, true);
    PipelineConfig plain;
    plain.hop_delay = 1.0;
    auto restricted = plain;
    restricted.overlap_network = true;
    auto a = cmd_reconstruct({events, groups}, plain), b = cmd_reconstruct({events, groups}, restricted);
    EXPECT_EQ(a.files(), b.files());
    auto fa = cmd_fit({events, groups}, plain), fb = cmd_fit({events, groups}, restricted);
    EXPECT_EQ(fa.files(), fb.files());
    // with no shared members every adopter falls back to EXTERNAL
    fixture::write_groups(groups, n, false);
    EXPECT_NE(cmd_reconstruct({events, groups}, restricted).files().at("forests.csv"), a.files().at("forests.csv"));
}

TEST_F(TwoPopulations, StratifyByExtraColumn) {
    auto c = config(0.05);
    c.stratify_by = {"cohort"};
    auto run = cmd_fit({events, groups}, c);
    auto mu = column_by_stratum(run.files().at("strata_cohort.csv"), "mu_b");
    EXPECT_EQ(mu.size(), 2u);
    c.stratify_by = {"no_such_column"};
    EXPECT_THROW(cmd_fit({events, groups}, c), InputError);
}

TEST_F(TwoPopulations, ImpactFromStrataFile) {
    auto out = dir / "fit_out";
    cmd_fit({events, groups}, config(0.05)).write(out);
    auto run = cmd_impact(out / "strata_content_type.csv", {events, groups}, config(0.05));
    auto mean = column_by_stratum(run.files().at("reach_summary.csv"), "mean");
    EXPECT_GT(mean.at("hateful"), mean.at("viral_normal"));
}

TEST(Cli, ExitCodes) {
    auto dir = fixture::scratch_dir("cli");
    auto good = dir / "good.csv";
    std::ofstream(good) << "message_id,group_id,timestamp,modality,content_type,forwarding_score\n"
                           "m1,a,0,text,hateful,0\nm1,b,1,text,hateful,0\nm1,c,2.5,text,hateful,1\n";
    auto bad = dir / "bad.csv";
    std::ofstream(bad) << "message_id,group_id,timestamp,modality,content_type,forwarding_score\n"
                          "m1,a,0,text,hateful,-1\n";
    std::string out = " --out-dir " + (dir / "o").string();
    EXPECT_EQ(fixture::run_cli("fit --events " + good.string() + out), 0);
    EXPECT_EQ(fixture::run_cli("fit --events " + bad.string() + out), 1);
    EXPECT_EQ(fixture::run_cli("fit --events " + (dir / "missing.csv").string() + out), 1);
    EXPECT_EQ(fixture::run_cli("fit --p 1.5 --events " + good.string() + out), 1);
    EXPECT_EQ(fixture::run_cli("bogus"), 1);
    EXPECT_TRUE(fs::exists(dir / "o" / "manifest.json"));
}

TEST(Cli, RegressionFailureIsNotFatal) {
    // a single cascade cannot support a regression; the run warns and succeeds
    auto dir = fixture::scratch_dir("cli_stats");
    auto ev = dir / "one.csv";
    std::ofstream(ev) << "message_id,group_id,timestamp,modality,content_type,forwarding_score\n"
                         "m1,a,0,text,hateful,0\nm1,b,1,text,hateful,0\n";
    EXPECT_EQ(fixture::run_cli("stats --events " + ev.string() + " --out-dir " + (dir / "o").string()), 0);
}
