#pragma once

// Synthetic inputs shared by the pipeline tests and the acceptance binary.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <cascadefit/pipeline.hpp>

namespace fixture {

namespace fs = std::filesystem;
using namespace cascadefit;

inline fs::path scratch_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("cascadefit_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

struct Population {
    ContentType content;
    TreeParams params;
    int cascades;
    std::string cohort = "a";
};

// Complete-tree cascades with one time unit per level, sampled at rate p.
// Modality and forwarding score cycle with the cascade index.
// Returns the number of distinct group ids used (g000000 ... ).
inline int write_tree_events(const fs::path& path, const std::vector<Population>& pops, double p,
                             std::uint64_t seed) {
    std::vector<LabeledEvent> events;
    int max_node = 0, serial = 0;
    for (std::size_t k = 0; k < pops.size(); ++k) {
        Rng rng(derive_seed(seed, k));
        for (int i = 0; i < pops[k].cascades; ++i) {
            auto tc = simulate_tree_cascade(pops[k].params, 1.0, 0.2, rng);
            for (const auto& inf : tc.infections) max_node = std::max(max_node, inf.node);
            auto c = sample_cascade(tc, p, rng.below(1ULL << 62), MessageId("m" + std::to_string(serial++)));
            for (const auto& a : c.adoptions) {
                LabeledEvent e;
                e.message = c.message;
                e.group = a.group;
                e.time = a.time;
                e.content = pops[k].content;
                e.modality = static_cast<Modality>(i % 3);
                e.forwarding_score = static_cast<std::int64_t>(i % 7);
                e.extra["cohort"] = pops[k].cohort;
                events.push_back(std::move(e));
            }
        }
    }
    std::ofstream out(path, std::ios::binary);
    write_events_csv(out, events);
    return max_node + 1;
}

// Sizes cycle through a few values; with shared_member every group lists
// the same member, which makes the overlap network complete.
inline void write_groups(const fs::path& path, int n_groups, bool shared_member) {
    std::ofstream out(path, std::ios::binary);
    out << "group_id,size,member_ids\n";
    for (int g = 0; g < n_groups; ++g)
        out << node_group(g).str() << ',' << (5 + (g * 37) % 200) << ',' << (shared_member ? "u0;u" + std::to_string(g + 1) : "u" + std::to_string(g + 1)) << '\n';
}

inline std::string slurp(const fs::path& p) { return read_file(p); }

// every file in a run directory, by name
inline std::map<std::string, std::string> dir_contents(const fs::path& d) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(d)) out[e.path().filename().string()] = read_file(e.path());
    return out;
}

inline int run_cli(const std::string& args, const std::string& env = "") {
    std::string cmd = env + (env.empty() ? "" : " ") + CASCADEFIT_CLI + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace fixture
