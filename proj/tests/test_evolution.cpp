#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "coevo/errors.hpp"
#include "coevo/evolution.hpp"
#include "coevo/seal.hpp"
#include "fixtures.hpp"

using namespace coevo;
using namespace coevo::evolution;
namespace fs = std::filesystem;
using fixtures::count_kind;
using trace::EventKind;

namespace {

std::string err_code(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

const std::vector<std::string> kItems = {"P1", "P1b", "P2", "P3", "P4", "P5", "P6"};

std::string snap_doc(const std::string& name) {
    return "---\nname: " + name + "\ndescription: test bundle\n---\n\nbody\n";
}

}  // namespace

TEST_CASE("mode names round-trip") {
    for (auto m : {Mode::full, Mode::no_verifier, Mode::no_evolution, Mode::no_skill})
        CHECK(mode_from(to_string(m)) == m);
    CHECK(err_code([] { mode_from("verifierless"); }) == "BadMode");
}

TEST_CASE("config validation rejects out-of-range knobs") {
    EvolutionConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto bad = [&](auto mutate) {
        EvolutionConfig c = cfg;
        mutate(c);
        return err_code([&] { c.validate(); });
    };
    CHECK(bad([](EvolutionConfig& c) { c.max_oracle_evals = 0; }) == "BadConfig");
    CHECK(bad([](EvolutionConfig& c) { c.max_refinements = 0; }) == "BadConfig");
    CHECK(bad([](EvolutionConfig& c) { c.beta = 0.0; }) == "BadConfig");
    CHECK(bad([](EvolutionConfig& c) { c.beta = 1.5; }) == "BadConfig");
    CHECK(bad([](EvolutionConfig& c) { c.timeout_multiplier = 0.0; }) == "BadConfig");
    CHECK(bad([](EvolutionConfig& c) { c.window_bytes = 0; }) == "BadConfig");
}

TEST_CASE("checklist parsing: explicit items override the defaults") {
    auto all = checklist_from_text(
        "- [x] P1\n- [x] P1b\n- [x] P2\n- [x] P3\n- [x] P4\n- [x] P5\n- [x] P6\n", kItems);
    CHECK(all.complete);
    CHECK(all.missing.empty());

    auto one = checklist_from_text(
        "- [x] P1\n- [x] P1b\n- [x] P2\n- [x] P3\n- [ ] P4\n- [x] P5\n- [x] P6\n", kItems);
    CHECK_FALSE(one.complete);
    CHECK(one.missing == std::vector<std::string>{"P4"});

    // capital X counts as checked; prose lines are ignored
    auto capital = checklist_from_text("progress notes\n- [X] P1\n", kItems);
    CHECK(capital.complete);

    // no checklist items at all: every default item is missing
    auto none = checklist_from_text("just prose, no checkboxes\n", kItems);
    CHECK_FALSE(none.complete);
    CHECK(none.missing == kItems);
}

TEST_CASE("checklist gate reads the progress file from rollout outputs") {
    sandbox::RolloutArtifacts art;
    auto absent = checklist_gate(art, "progress.md", kItems);
    CHECK(absent.missing == kItems);

    art.outputs["progress.md"] = "- [x] P1\n- [ ] P2\n";
    auto partial = checklist_gate(art, "progress.md", kItems);
    CHECK(partial.missing == std::vector<std::string>{"P2"});
}

TEST_CASE("golden replay: six verification rounds, three oracle rounds, early exit") {
    seal::clear_for_testing();
    fixtures::TempDir tmp("evo-golden");
    sandbox::Sandbox sb(tmp.path);
    auto out = fixtures::run_golden(sb);

    CHECK(out.state.status == Status::done_perfect);
    CHECK(out.final_score == Rational(1, 1));
    CHECK(out.state.n == 3);
    CHECK(out.state.r == 3);
    CHECK(out.state.j == 2);
    CHECK(out.state.i == 3);
    CHECK(out.final.version == 3);

    CHECK(count_kind(out.trace, EventKind::skill_generated) == 4);
    CHECK(count_kind(out.trace, EventKind::rollout_done) == 6);
    CHECK(count_kind(out.trace, EventKind::suite_run) == 6);
    CHECK(count_kind(out.trace, EventKind::diagnostic_appended) == 2);
    CHECK(count_kind(out.trace, EventKind::checklist_blocked) == 1);
    CHECK(count_kind(out.trace, EventKind::oracle_evaluated) == 3);
    CHECK(count_kind(out.trace, EventKind::bit_appended) == 2);
    CHECK(count_kind(out.trace, EventKind::suite_escalated) == 2);
    CHECK(count_kind(out.trace, EventKind::snapshot_saved) == 1);
    CHECK(count_kind(out.trace, EventKind::early_exit) == 1);

    // surrogate schedule, in order
    std::vector<std::pair<std::string, std::string>> suite_runs;
    std::vector<std::string> suite_versions;
    std::vector<std::string> scores;
    std::vector<std::string> bits;
    for (const auto& e : out.trace) {
        if (e.kind == EventKind::suite_run) {
            suite_runs.emplace_back(e.payload.at("passed"), e.payload.at("total"));
            suite_versions.push_back(e.payload.at("suite_version"));
        }
        if (e.kind == EventKind::oracle_evaluated) scores.push_back(e.payload.at("score"));
        if (e.kind == EventKind::bit_appended) bits.push_back(e.payload.at("bit"));
    }
    CHECK(suite_runs == std::vector<std::pair<std::string, std::string>>{
                            {"0", "15"}, {"15", "15"}, {"15", "15"},
                            {"20", "20"}, {"19", "22"}, {"22", "22"}});
    // the suite is locked across refinements and bumps only on escalation
    CHECK(suite_versions == std::vector<std::string>{"0", "0", "0", "1", "2", "2"});
    CHECK(scores == std::vector<std::string>{"3/4", "3/4", "1/1"});
    CHECK(bits == std::vector<std::string>{"1", "1"});

    // the early exit terminates the trace
    CHECK(out.trace.back().kind == EventKind::early_exit);

    // step counters are strictly monotone from 1
    for (std::size_t k = 0; k < out.trace.size(); ++k)
        CHECK(out.trace[k].step == static_cast<int>(k) + 1);
    seal::clear_for_testing();
}

TEST_CASE("golden replay writes a trace log and summary when log_dir is set") {
    seal::clear_for_testing();
    fixtures::TempDir tmp("evo-golden-log");
    sandbox::Sandbox sb(tmp.path / "envs");

    auto g = fixtures::make_golden_run();
    g.cfg.log_dir = tmp.path / "logs";
    oracle::OracleSession session(g.suite, g.cfg.max_oracle_evals, g.target, sb);
    auto out = run_evolution(g.spec, g.cfg, g.gen, g.ver, session, sb, fixtures::meta_bundle());
    CHECK(out.state.status == Status::done_perfect);

    auto logged = trace::load_log(tmp.path / "logs" / "golden-transit.trace");
    CHECK(logged.size() == out.trace.size());
    // oracle rows are sealed on disk
    auto text = fixtures::read_file(tmp.path / "logs" / "golden-transit.trace");
    CHECK(text.find("sealed=1") != std::string::npos);
    CHECK(text.find("3/4") == std::string::npos);
    auto summary =
        fixtures::read_file(tmp.path / "logs" / "golden-transit.evolution_summary.md");
    CHECK(summary.find("status: done_perfect") != std::string::npos);
    CHECK(summary.find("oracle evaluations: 3") != std::string::npos);
    seal::clear_for_testing();
}

TEST_CASE("no_verifier ablation refines on the opaque bit alone") {
    seal::clear_for_testing();
    fixtures::TempDir tmp("evo-noviz");
    sandbox::Sandbox sb(tmp.path);

    sandbox::TaskSpec spec;
    spec.task_id = "snap-task";
    spec.instruction = "produce the mark files";
    spec.output_globs = {"*"};
    spec.timeout_s = 30.0;

    // hidden suite checks the installed bundle's own files in the fresh env
    std::vector<std::string> targets;
    for (const auto& s : fixtures::numbered("s", 1, 10))
        targets.push_back("skills/evo-snap/marks/" + s);
    auto ref = oracle::seal_suite_manifest(fixtures::file_exists_manifest(targets));
    spec.oracle_suite = ref.suite_id;

    std::map<std::string, std::optional<std::string>> v0_files;
    for (const auto& s : fixtures::numbered("s", 1, 5)) v0_files["marks/" + s] = "m";
    std::map<std::string, std::optional<std::string>> v1_edits;
    for (const auto& s : fixtures::numbered("s", 6, 8)) v1_edits["marks/" + s] = "m";
    std::map<std::string, std::optional<std::string>> v2_edits;
    for (const auto& s : fixtures::numbered("s", 9, 10)) v2_edits["marks/" + s] = "m";

    auto gen = policy::make_scripted(
        std::vector<std::string>{
            fixtures::gen_skill_edit(snap_doc("evo-snap"), v0_files),
            fixtures::gen_noop_rollout(),
            fixtures::gen_skill_edit(std::nullopt, v1_edits),
            fixtures::gen_noop_rollout(),
            fixtures::gen_skill_edit(std::nullopt, v2_edits),
            fixtures::gen_noop_rollout(),
        },
        policy::Role::generator);

    EvolutionConfig cfg;
    cfg.mode = Mode::no_verifier;
    oracle::OracleSession session(ref, cfg.max_oracle_evals, fixtures::gen_noop_target(), sb);
    auto out = run_evolution(spec, cfg, gen, nullptr, session, sb, fixtures::meta_bundle());

    CHECK(out.state.status == Status::done_perfect);
    CHECK(out.state.n == 3);
    CHECK(out.final_score == Rational(1, 1));
    CHECK(out.final.version == 2);
    // no surrogate machinery ran at all
    CHECK(count_kind(out.trace, EventKind::suite_run) == 0);
    CHECK(count_kind(out.trace, EventKind::suite_escalated) == 0);
    CHECK(count_kind(out.trace, EventKind::diagnostic_appended) == 0);
    CHECK(count_kind(out.trace, EventKind::checklist_blocked) == 0);
    CHECK(count_kind(out.trace, EventKind::snapshot_saved) == 2);
    CHECK(count_kind(out.trace, EventKind::bit_appended) == 2);
    CHECK(count_kind(out.trace, EventKind::skill_generated) == 3);
    seal::clear_for_testing();
}

TEST_CASE("no_evolution ablation: one skill, one oracle round") {
    seal::clear_for_testing();
    fixtures::TempDir tmp("evo-noev");
    sandbox::Sandbox sb(tmp.path);

    sandbox::TaskSpec spec;
    spec.task_id = "one-shot";
    spec.instruction = "single evaluation";
    spec.output_globs = {"*"};
    spec.timeout_s = 30.0;

    auto ref = oracle::seal_suite_manifest("h1\tfile_exists\tskills/evo-one/SKILL.md\t\n");
    spec.oracle_suite = ref.suite_id;

    auto gen = policy::make_scripted(
        std::vector<std::string>{fixtures::gen_skill_edit(snap_doc("evo-one"), {})},
        policy::Role::generator);

    EvolutionConfig cfg;
    cfg.mode = Mode::no_evolution;
    oracle::OracleSession session(ref, cfg.max_oracle_evals, fixtures::gen_noop_target(), sb);
    auto out = run_evolution(spec, cfg, gen, nullptr, session, sb, fixtures::meta_bundle());

    CHECK(out.state.status == Status::done_perfect);
    CHECK(out.state.n == 1);
    CHECK(out.state.r == 0);
    CHECK(count_kind(out.trace, EventKind::skill_generated) == 1);
    CHECK(count_kind(out.trace, EventKind::oracle_evaluated) == 1);
    CHECK(count_kind(out.trace, EventKind::rollout_done) == 0);
    seal::clear_for_testing();
}

TEST_CASE("no_skill ablation: bare policy, zero skill events") {
    seal::clear_for_testing();
    fixtures::TempDir tmp("evo-noskill");
    sandbox::Sandbox sb(tmp.path);

    sandbox::TaskSpec spec;
    spec.task_id = "bare";
    spec.instruction = "bare evaluation";
    spec.output_globs = {"*"};
    spec.timeout_s = 30.0;

    auto ref = oracle::seal_suite_manifest(
        "h1\tfile_exists\tmade.txt\t\nh2\tfile_exists\tnot_made.txt\t\n");
    spec.oracle_suite = ref.suite_id;

    auto target = policy::make_scripted(
        std::vector<std::string>{fixtures::gen_commands({"touch made.txt"})},
        policy::Role::generator);
    // never consulted in no_skill mode; one placeholder step keeps the handle valid
    auto gen = policy::make_scripted(std::vector<std::string>{fixtures::gen_noop_rollout()},
                                     policy::Role::generator);

    EvolutionConfig cfg;
    cfg.mode = Mode::no_skill;
    oracle::OracleSession session(ref, cfg.max_oracle_evals, target, sb);
    auto out = run_evolution(spec, cfg, gen, nullptr, session, sb, fixtures::meta_bundle());

    CHECK(out.state.status == Status::done_budget);
    CHECK(out.final_score == Rational(1, 2));
    CHECK(out.state.n == 1);
    CHECK(count_kind(out.trace, EventKind::skill_generated) == 0);
    CHECK(count_kind(out.trace, EventKind::oracle_evaluated) == 1);
    seal::clear_for_testing();
}

TEST_CASE("refinement budget exhaustion under a never-passing suite") {
    seal::clear_for_testing();
    fixtures::TempDir tmp("evo-budget");
    sandbox::Sandbox sb(tmp.path);

    sandbox::TaskSpec spec;
    spec.task_id = "stuck";
    spec.instruction = "satisfy the impossible suite";
    spec.output_globs = {"*"};
    spec.timeout_s = 30.0;

    auto ref = oracle::seal_suite_manifest("h1\tfile_exists\tgoal.txt\t\n");
    spec.oracle_suite = ref.suite_id;

    const int M = 3;
    std::vector<std::string> gen_steps{fixtures::gen_skill_edit(snap_doc("evo-stuck"), {})};
    for (int k = 0; k < M; ++k) {
        gen_steps.push_back(fixtures::gen_noop_rollout());
        gen_steps.push_back(fixtures::gen_skill_edit(std::nullopt, {}));
    }
    auto gen = policy::make_scripted(gen_steps, policy::Role::generator);
    auto ver = policy::make_scripted(
        std::vector<std::string>{fixtures::ver_suite("a01\tfile_exists\tnever_there\t\n")},
        policy::Role::verifier);

    EvolutionConfig cfg;
    cfg.max_refinements = M;
    oracle::OracleSession session(ref, cfg.max_oracle_evals, fixtures::gen_noop_target(), sb);
    auto out = run_evolution(spec, cfg, gen, ver, session, sb, fixtures::meta_bundle());

    CHECK(out.state.status == Status::done_budget);
    CHECK(out.state.r == M);
    CHECK(out.state.n == 0);
    CHECK(count_kind(out.trace, EventKind::diagnostic_appended) == M);
    CHECK(count_kind(out.trace, EventKind::oracle_evaluated) == 0);
    // no progress was ever scored, so the initial version remains the best
    CHECK(out.final.version == 0);
    CHECK(out.final_score == Rational(0, 1));
    seal::clear_for_testing();
}

TEST_CASE("checklist stall: every refinement spent on checklist blocks") {
    seal::clear_for_testing();
    fixtures::TempDir tmp("evo-stall");
    sandbox::Sandbox sb(tmp.path);

    fs::create_directories(tmp.path / "fixture");
    fixtures::write_file(tmp.path / "fixture" / "base_file.txt", "present");

    sandbox::TaskSpec spec;
    spec.task_id = "stall";
    spec.instruction = "finish the checklist";
    spec.fixture = tmp.path / "fixture";
    spec.output_globs = {"*"};
    spec.timeout_s = 30.0;

    auto ref = oracle::seal_suite_manifest("h1\tfile_exists\tgoal.txt\t\n");
    spec.oracle_suite = ref.suite_id;

    const int M = 2;
    std::vector<std::string> gen_steps{fixtures::gen_skill_edit(snap_doc("evo-stall"), {})};
    for (int k = 0; k < M; ++k) {
        gen_steps.push_back(fixtures::gen_noop_rollout());  // never writes progress.md
        gen_steps.push_back(fixtures::gen_skill_edit(std::nullopt, {}));
    }
    auto gen = policy::make_scripted(gen_steps, policy::Role::generator);
    auto ver = policy::make_scripted(
        std::vector<std::string>{fixtures::ver_suite("a01\tfile_exists\tbase_file.txt\t\n")},
        policy::Role::verifier);

    EvolutionConfig cfg;
    cfg.max_refinements = M;
    oracle::OracleSession session(ref, cfg.max_oracle_evals, fixtures::gen_noop_target(), sb);
    auto out = run_evolution(spec, cfg, gen, ver, session, sb, fixtures::meta_bundle());

    CHECK(out.state.status == Status::done_checklist_stall);
    CHECK(out.state.r == M);
    CHECK(count_kind(out.trace, EventKind::checklist_blocked) == M);
    CHECK(count_kind(out.trace, EventKind::diagnostic_appended) == 0);
    CHECK(out.state.n == 0);
    seal::clear_for_testing();
}

TEST_CASE("context cap terminates the run after the triggering rollout") {
    seal::clear_for_testing();
    fixtures::TempDir tmp("evo-cap");
    sandbox::Sandbox sb(tmp.path);

    sandbox::TaskSpec spec;
    spec.task_id = "cap";
    spec.instruction = "small task, very chatty policy";
    spec.output_globs = {"*"};
    spec.timeout_s = 30.0;

    auto ref = oracle::seal_suite_manifest("h1\tfile_exists\tgoal.txt\t\n");
    spec.oracle_suite = ref.suite_id;

    auto gen = policy::make_scripted(
        std::vector<std::string>{
            fixtures::gen_skill_edit(snap_doc("evo-cap"), {}),
            fixtures::gen_commands({}, true, std::string(8000, 'a')),
        },
        policy::Role::generator);

    EvolutionConfig cfg;
    cfg.window_bytes = 10000;
    oracle::OracleSession session(ref, cfg.max_oracle_evals, fixtures::gen_noop_target(), sb);
    auto out = run_evolution(spec, cfg, gen, nullptr, session, sb, fixtures::meta_bundle());

    CHECK(out.state.status == Status::done_context);
    CHECK(count_kind(out.trace, EventKind::context_cap_hit) == 1);
    CHECK(out.trace.back().kind == EventKind::context_cap_hit);
    CHECK(out.state.n == 0);
    seal::clear_for_testing();
}

TEST_CASE("engine contract: step before initialize and double initialize throw") {
    seal::clear_for_testing();
    fixtures::TempDir tmp("evo-contract");
    sandbox::Sandbox sb(tmp.path);
    sandbox::TaskSpec spec;
    spec.task_id = "c";
    spec.instruction = "i";
    spec.output_globs = {"*"};
    auto ref = oracle::seal_suite_manifest("h1\tfile_exists\tg.txt\t\n");
    auto gen = policy::make_scripted(
        std::vector<std::string>{fixtures::gen_skill_edit(snap_doc("evo-c"), {}),
                                 fixtures::gen_skill_edit(snap_doc("evo-c"), {})},
        policy::Role::generator);
    EvolutionConfig cfg;
    oracle::OracleSession session(ref, 1, fixtures::gen_noop_target(), sb);

    EvolutionEngine engine(spec, cfg, gen, nullptr, session, sb, fixtures::meta_bundle());
    CHECK(err_code([&] { engine.step(); }) == "ContractViolation");
    engine.initialize();
    CHECK(err_code([&] { engine.initialize(); }) == "ContractViolation");

    // role mix-up is rejected at construction
    auto ver = policy::make_scripted(std::vector<std::string>{"{}"}, policy::Role::verifier);
    CHECK(err_code([&] {
              EvolutionEngine bad(spec, cfg, ver, nullptr, session, sb, fixtures::meta_bundle());
          }) == "WrongRole");
    seal::clear_for_testing();
}
