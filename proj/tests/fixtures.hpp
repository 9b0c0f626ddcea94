// Shared fixtures for the unit and acceptance tests: temp directories,
// scripted-policy step builders, and the six-round golden replay schedule.
#pragma once

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coevo/evolution.hpp"
#include "coevo/oracle.hpp"
#include "coevo/policy.hpp"
#include "coevo/sandbox.hpp"
#include "coevo/skills.hpp"
#include "coevo/verifier.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using nlohmann::json;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
};

inline void write_file(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

// --- scripted step builders -------------------------------------------------

inline std::string gen_commands(const std::vector<std::string>& cmds, bool complete = true,
                                const std::string& analysis = "") {
    json arr = json::array();
    for (const auto& c : cmds) arr.push_back({{"keystrokes", c}, {"duration", 0.0}});
    json j{{"commands", arr}, {"task_complete", complete}};
    if (!analysis.empty()) j["analysis"] = analysis;
    return j.dump();
}

inline std::string gen_noop_rollout() { return gen_commands({}, true); }

inline std::string gen_skill_edit(const std::optional<std::string>& doc,
                                  const std::map<std::string, std::optional<std::string>>& edits) {
    json e = json::object();
    if (doc) e["doc"] = *doc;
    json em = json::object();
    for (const auto& [p, c] : edits) {
        if (c) em[p] = *c;
        else em[p] = nullptr;
    }
    e["edits"] = em;
    return json{{"skill_edit", e}}.dump();
}

inline std::string ver_suite(const std::string& manifest) {
    return json{{"suite", manifest}}.dump();
}

// file_exists manifest over `targets`, ids a01, a02, ...
inline std::string file_exists_manifest(const std::vector<std::string>& targets) {
    std::string out;
    int i = 0;
    for (const auto& t : targets) {
        char id[16];
        std::snprintf(id, sizeof(id), "a%02d", ++i);
        out += std::string(id) + "\tfile_exists\t" + t + "\t\n";
    }
    return out;
}

inline std::vector<std::string> numbered(const std::string& prefix, int from, int to) {
    std::vector<std::string> v;
    for (int i = from; i <= to; ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%s%02d", prefix.c_str(), i);
        v.emplace_back(buf);
    }
    return v;
}

inline std::string meta_doc() {
    return "---\nname: skill-creator\ndescription: skill authoring guidance\n---\n\n"
           "Write utility functions in scripts/ and document the workflow.\n";
}

inline coevo::skills::SkillBundle meta_bundle() {
    return coevo::skills::make_bundle(meta_doc(), {});
}

// Target policy that completes immediately; for suites graded on bundle files.
inline coevo::policy::PolicyHandle gen_noop_target() {
    return coevo::policy::make_scripted(std::vector<std::string>{gen_noop_rollout()},
                                        coevo::policy::Role::generator);
}

// Target solver for oracle re-execution: runs every installed bundle script.
inline coevo::policy::PolicyHandle solver_policy() {
    return coevo::policy::make_scripted(
        std::vector<std::string>{gen_commands(
            {"for f in skills/*/scripts/*.sh; do [ -f \"$f\" ] && sh \"$f\"; done; true"})},
        coevo::policy::Role::generator);
}

// --- the six-round golden replay schedule ------------------------------------
//
// Round 1  surrogate 0/15   -> diagnostic, refine        (V1 -> V2)
// Round 2  surrogate 15/15  -> checklist block, refine   (V2 -> V3)
// Round 3  surrogate 15/15  -> oracle 3/4, escalate to 20
// Round 4  surrogate 20/20  -> oracle 3/4, escalate to 22
// Round 5  surrogate 19/22  -> diagnostic, refine        (V3 -> V4)
// Round 6  surrogate 22/22  -> oracle 4/4, done_perfect

struct GoldenRun {
    coevo::sandbox::TaskSpec spec;
    coevo::policy::PolicyHandle gen;
    coevo::policy::PolicyHandle ver;
    coevo::policy::PolicyHandle target;
    coevo::oracle::HiddenSuiteRef suite;
    coevo::evolution::EvolutionConfig cfg;
};

inline GoldenRun make_golden_run() {
    GoldenRun g;
    g.spec.task_id = "golden-transit";
    g.spec.instruction = "Derive the transit period from the light-curve data and write the "
                         "analysis output files.";
    g.spec.output_globs = {"*"};
    g.spec.timeout_s = 30.0;

    const std::string doc_v1 =
        "---\nname: evo-transit\ndescription: transit period analysis workflow\n---\n\n"
        "Run the solve script to produce the analysis outputs.\n";

    std::vector<std::string> gen_steps{
        // initial skill V1 (version 0): buggy, produces one output only
        gen_skill_edit(doc_v1, {{"scripts/solve.sh", "touch golden_g1\n"}}),
        // round 1 rollout: produces nothing the suite checks
        gen_commands({"true"}),
        // round 1 refine -> V2: script now covers three of four outputs
        gen_skill_edit(std::nullopt,
                       {{"scripts/solve.sh", "touch golden_g1 golden_g2 golden_g3\n"}}),
        // round 2 rollout: satisfy the 15-assertion suite, checklist incomplete
        gen_commands({"touch f01 f02 f03 f04 f05 f06 f07 f08 f09 f10 f11 f12 f13 f14 f15",
                      "printf -- '- [x] P1\\n- [ ] P2\\n' > progress.md"}),
        // round 2 refine (checklist block) -> V3
        gen_skill_edit(std::nullopt, {{"references/notes.md", "track the progress file\n"}}),
        // round 3 rollout: complete the checklist
        gen_commands({"printf -- '- [x] P1\\n- [x] P2\\n' > progress.md"}),
        // round 4 rollout: satisfy the escalated 20-assertion suite
        gen_commands({"touch f16 f17 f18 f19 f20"}),
        // round 5 rollout: the 22-assertion suite finds three gaps
        gen_commands({"true"}),
        // round 5 refine -> V4: script now covers all four oracle outputs
        gen_skill_edit(std::nullopt,
                       {{"scripts/solve.sh", "touch golden_g1 golden_g2 golden_g3 golden_g4\n"}}),
        // round 6 rollout: close the gaps
        gen_commands({"touch x20 x21 x22"}),
    };
    g.gen = coevo::policy::make_scripted(gen_steps, coevo::policy::Role::generator);

    auto f_targets = numbered("f", 1, 15);
    auto suite_v0 = file_exists_manifest(f_targets);
    auto suite_v1 = file_exists_manifest(numbered("f", 1, 20));
    auto v2_targets = numbered("f", 1, 19);
    v2_targets.push_back("x20");
    v2_targets.push_back("x21");
    v2_targets.push_back("x22");
    auto suite_v2 = file_exists_manifest(v2_targets);
    g.ver = coevo::policy::make_scripted(
        std::vector<std::string>{ver_suite(suite_v0), ver_suite(suite_v1), ver_suite(suite_v2)},
        coevo::policy::Role::verifier);

    g.target = solver_policy();
    g.suite = coevo::oracle::seal_suite_manifest(
        file_exists_manifest({"golden_g1", "golden_g2", "golden_g3", "golden_g4"}));
    g.spec.oracle_suite = g.suite.suite_id;

    g.cfg.max_oracle_evals = 5;
    g.cfg.max_refinements = 15;
    g.cfg.timeout_multiplier = 5.0;
    return g;
}

inline coevo::evolution::EvolutionOutcome run_golden(coevo::sandbox::Sandbox& sb) {
    auto g = make_golden_run();
    coevo::oracle::OracleSession session(g.suite, g.cfg.max_oracle_evals, g.target, sb);
    return coevo::evolution::run_evolution(g.spec, g.cfg, g.gen, g.ver, session, sb,
                                           meta_bundle());
}

// Convenience counts over a trajectory.
inline int count_kind(const coevo::trace::Trajectory& t, coevo::trace::EventKind k) {
    int n = 0;
    for (const auto& e : t)
        if (e.kind == k) ++n;
    return n;
}

}  // namespace fixtures
