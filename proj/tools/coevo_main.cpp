// Command-line front end: evolution runs, benchmark/transfer evaluation,
// trace statistics, bundle validation, replay checks, and report export.

#include <fnmatch.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coevo/errors.hpp"
#include "coevo/eval.hpp"
#include "coevo/evolution.hpp"
#include "coevo/oracle.hpp"
#include "coevo/policy.hpp"
#include "coevo/sandbox.hpp"
#include "coevo/skills.hpp"
#include "coevo/trace.hpp"

namespace fs = std::filesystem;
using namespace coevo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitTaskFailure = 2;
constexpr int kExitInternal = 3;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail("FileNotFound", "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Fallback skill-creator bundle for runs that do not supply one on disk.
const char* kBuiltinMetaDoc =
    "---\n"
    "name: skill-creator\n"
    "description: Guidance for drafting and refining reusable skill bundles.\n"
    "---\n"
    "\n"
    "Create skills as small portable bundles: utility functions in scripts/,\n"
    "workflow documented in SKILL.md, frontmatter with name and description,\n"
    "no references to external documentation paths.\n";

skills::SkillBundle load_meta_skill(const std::string& meta_dir, const fs::path& scripted_dir) {
    if (!meta_dir.empty()) return skills::load_bundle(meta_dir);
    if (!scripted_dir.empty() && fs::is_directory(scripted_dir / "meta-skill"))
        return skills::load_bundle(scripted_dir / "meta-skill");
    return skills::make_bundle(kBuiltinMetaDoc, {});
}

// Flat key=value (or key: value) config overlay for evolve.
void apply_config_file(evolution::EvolutionConfig& cfg, const fs::path& file) {
    std::istringstream in(read_file(file));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto sep = line.find_first_of("=:");
        if (sep == std::string::npos) fail("BadConfig", "expected key=value: " + line);
        std::string key = line.substr(0, sep);
        std::string value = line.substr(sep + 1);
        while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.erase(0, 1);
        if (key == "N" || key == "K" || key == "max_oracle_evals")
            cfg.max_oracle_evals = std::stoi(value);
        else if (key == "M" || key == "max_refinements")
            cfg.max_refinements = std::stoi(value);
        else if (key == "beta")
            cfg.beta = std::stod(value);
        else if (key == "timeout_multiplier")
            cfg.timeout_multiplier = std::stod(value);
        else if (key == "window_bytes")
            cfg.window_bytes = std::stoull(value);
        else if (key == "seed")
            cfg.seed = std::stoull(value);
        else if (key == "mode")
            cfg.mode = evolution::mode_from(value);
        else if (key == "checklist_gate")
            cfg.checklist_gate_enabled = (value == "1" || value == "true" || value == "on");
        else if (key == "progress_path")
            cfg.progress_path = value;
        else
            fail("BadConfig", "unknown config key " + key);
    }
}

struct ScriptedRun {
    sandbox::TaskSpec spec;
    policy::PolicyHandle gen;
    policy::PolicyHandle ver;
    policy::PolicyHandle target;
    oracle::HiddenSuiteRef suite;
    skills::SkillBundle meta;
};

// Layout of a scripted run directory:
//   task.spec     task document (optional when passed on the command line)
//   gen/          numbered generator responses
//   ver/          numbered verifier responses
//   target/       numbered target responses for oracle re-execution
//                 (falls back to a fresh generator session)
//   oracle.suite  hidden-suite manifest
//   meta-skill/   skill-creator bundle (optional)
ScriptedRun load_scripted_run(const fs::path& dir, const std::string& spec_arg,
                              const std::string& meta_dir) {
    ScriptedRun run;
    if (!spec_arg.empty())
        run.spec = sandbox::load_task_spec(spec_arg);
    else if (fs::exists(dir / "task.spec"))
        run.spec = sandbox::load_task_spec(dir / "task.spec");
    else
        fail("BadConfig", "no task spec given and none in " + dir.string());
    run.gen = policy::load_scripted_dir(dir / "gen", policy::Role::generator);
    run.ver = policy::load_scripted_dir(dir / "ver", policy::Role::verifier);
    run.target = fs::is_directory(dir / "target")
                     ? policy::load_scripted_dir(dir / "target", policy::Role::generator)
                     : run.gen->fresh_session();
    run.suite = oracle::seal_suite_file(dir / "oracle.suite");
    run.spec.oracle_suite = run.suite.suite_id;
    run.meta = load_meta_skill(meta_dir, dir);
    return run;
}

int cmd_evolve(const std::string& spec_arg, const std::string& config_file,
               const std::string& mode, std::uint64_t seed, const std::string& scripted_dir,
               const std::string& meta_dir, const std::string& workdir,
               const std::string& log_dir) {
    evolution::EvolutionConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    if (!mode.empty()) cfg.mode = evolution::mode_from(mode);
    cfg.seed = seed;
    if (!log_dir.empty()) cfg.log_dir = log_dir;
    cfg.validate();

    if (scripted_dir.empty())
        fail("BadConfig", "evolve requires --scripted <dir> (remote backends: see README)");
    auto run = load_scripted_run(scripted_dir, spec_arg, meta_dir);

    fs::path root = workdir.empty() ? fs::temp_directory_path() / "coevo-run" : fs::path(workdir);
    fs::create_directories(root);
    sandbox::Sandbox sb(root);
    oracle::OracleSession session(run.suite, cfg.max_oracle_evals, run.target, sb);

    auto outcome =
        evolution::run_evolution(run.spec, cfg, run.gen, run.ver, session, sb, run.meta);

    std::cout << "task: " << run.spec.task_id << "\n"
              << "status: " << evolution::to_string(outcome.state.status) << "\n"
              << "final score: " << outcome.final_score.str() << "\n"
              << "skill version: " << outcome.final.version << "\n"
              << "counters: i=" << outcome.state.i << " j=" << outcome.state.j
              << " n=" << outcome.state.n << " r=" << outcome.state.r << "\n";
    if (log_dir.empty()) std::cout << trace::to_log(outcome.trace);
    return outcome.final_score.is_one() ? kExitOk : kExitTaskFailure;
}

// Corpus layout: <dir>/<task>.spec plus <dir>/<task>.suite hidden-suite
// manifests; fixtures wherever the spec's fixture key points.
std::vector<sandbox::TaskSpec> load_corpus(const fs::path& dir) {
    std::vector<fs::path> spec_files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".spec")
            spec_files.push_back(e.path());
    std::sort(spec_files.begin(), spec_files.end());
    if (spec_files.empty()) fail("BadConfig", "no .spec files in " + dir.string());
    std::vector<sandbox::TaskSpec> tasks;
    for (const auto& p : spec_files) {
        auto spec = sandbox::load_task_spec(p);
        fs::path suite_file = p;
        suite_file.replace_extension(".suite");
        if (!fs::exists(suite_file))
            fail("BadConfig", "missing hidden suite " + suite_file.string());
        spec.oracle_suite = oracle::seal_suite_file(suite_file).suite_id;
        tasks.push_back(std::move(spec));
    }
    return tasks;
}

std::map<std::string, std::optional<skills::SkillBundle>> load_bundles(
    const std::string& skills_dir, const std::vector<sandbox::TaskSpec>& tasks) {
    std::map<std::string, std::optional<skills::SkillBundle>> bundles;
    if (skills_dir.empty()) return bundles;
    for (const auto& t : tasks) {
        fs::path p = fs::path(skills_dir) / t.task_id;
        if (fs::is_directory(p)) bundles[t.task_id] = skills::load_bundle(p);
    }
    return bundles;
}

std::string default_skill_hint(const fs::path& repo_hint_file) {
    if (fs::exists(repo_hint_file)) return read_file(repo_hint_file);
    return "Important: Specialized skills are available as slash commands. Run the "
           "relevant skill command before starting to get domain-specific guidance, "
           "code utilities, and best practices for this task.";
}

int cmd_bench(const std::string& corpus_dir, const std::string& skills_dir,
              const std::string& scripted_dir, int runs, int workers,
              const std::string& condition, const std::string& records_out,
              const std::string& format) {
    auto tasks = load_corpus(corpus_dir);
    auto bundles = load_bundles(skills_dir, tasks);
    if (scripted_dir.empty()) fail("BadConfig", "bench requires --scripted <solver-dir>");
    auto target = policy::load_scripted_dir(scripted_dir, policy::Role::generator);

    fs::path root = fs::temp_directory_path() / "coevo-bench";
    fs::create_directories(root);
    sandbox::Sandbox sb(root);

    eval::BenchOptions opts;
    opts.condition = condition.empty() ? (skills_dir.empty() ? "no_skill" : "evolved") : condition;
    opts.workers = workers;
    opts.skill_hint = default_skill_hint("prompts/skill_hint.txt");
    auto result = eval::run_benchmark(tasks, bundles, target, runs, sb, opts);

    std::cout << eval::export_report(result.report, eval::format_from(format));
    if (!records_out.empty()) {
        std::ofstream out(records_out, std::ios::binary);
        out << eval::records_to_text(result.records);
    }
    for (const auto& r : result.records)
        if (!r.passed) return kExitTaskFailure;
    return kExitOk;
}

int cmd_transfer(const std::string& skills_dir, const std::vector<std::string>& target_args,
                 const std::string& corpus_dir, int runs, int workers) {
    auto tasks = load_corpus(corpus_dir);
    auto bundles = load_bundles(skills_dir, tasks);
    std::vector<std::pair<std::string, policy::PolicyHandle>> targets;
    for (const auto& arg : target_args) {
        auto eq = arg.find('=');
        if (eq == std::string::npos) fail("BadConfig", "--targets expects label=scripted-dir");
        targets.emplace_back(arg.substr(0, eq), policy::load_scripted_dir(
                                                    arg.substr(eq + 1), policy::Role::generator));
    }
    fs::path root = fs::temp_directory_path() / "coevo-transfer";
    fs::create_directories(root);
    sandbox::Sandbox sb(root);
    eval::BenchOptions opts;
    opts.workers = workers;
    opts.skill_hint = default_skill_hint("prompts/skill_hint.txt");
    auto reports = eval::transfer_evaluate(bundles, fs::path(skills_dir).filename().string(),
                                           targets, tasks, runs, sb, opts);
    for (const auto& tr : reports)
        std::cout << tr.target_label << ": with-skills " << tr.with_skills.report.mean
                  << ", no-skill " << tr.no_skill.report.mean << ", delta " << tr.delta << "\n";
    return kExitOk;
}

int cmd_stats(const std::string& glob) {
    fs::path pattern(glob);
    fs::path dir = pattern.parent_path().empty() ? "." : pattern.parent_path();
    std::string leaf = pattern.filename().string();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() &&
            fnmatch(leaf.c_str(), e.path().filename().string().c_str(), 0) == 0)
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<std::pair<std::string, trace::Trajectory>> traces;
    for (const auto& f : files)
        traces.emplace_back(f.stem().string(), trace::load_log(f));
    auto stats = eval::iteration_stats(traces);
    std::cout << eval::export_stats(stats, eval::Format::table_text);
    return kExitOk;
}

int cmd_validate(const std::string& bundle_dir) {
    auto bundle = skills::load_bundle(bundle_dir);
    auto report = skills::validate_bundle(bundle, skills::kAllRules);
    std::cout << skills::report_to_text(report);
    return report.passed ? kExitOk : kExitTaskFailure;
}

int cmd_replay(const std::string& trace_file, const std::string& scripted_dir,
               const std::string& spec_arg, const std::string& config_file) {
    evolution::EvolutionConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    cfg.validate();
    auto run = load_scripted_run(scripted_dir, spec_arg, "");

    fs::path root = fs::temp_directory_path() / "coevo-replay";
    fs::create_directories(root);
    sandbox::Sandbox sb(root);
    oracle::OracleSession session(run.suite, cfg.max_oracle_evals, run.target, sb);
    auto outcome =
        evolution::run_evolution(run.spec, cfg, run.gen, run.ver, session, sb, run.meta);

    std::string expected = trace::strip_wall_fields(read_file(trace_file));
    std::string actual = trace::strip_wall_fields(trace::to_log(outcome.trace));
    if (expected == actual) {
        std::cout << "replay: identical (" << outcome.trace.size() << " events)\n";
        return kExitOk;
    }
    std::cout << "replay: MISMATCH\n--- recorded ---\n"
              << expected << "--- replayed ---\n"
              << actual;
    return kExitTaskFailure;
}

int cmd_report(const std::string& records_file, const std::string& format, bool unseal) {
    std::string text = read_file(records_file);
    // A trajectory log starts with a step counter; run records start with a
    // task id. Dispatch on the first field.
    std::istringstream probe(text);
    std::string first_line;
    std::getline(probe, first_line);
    bool is_trace = !first_line.empty() && std::isdigit(static_cast<unsigned char>(first_line[0]));
    if (is_trace) {
        auto trajectory = trace::parse_log(text);
        std::cout << trace::to_log(trajectory, unseal);
        return kExitOk;
    }
    auto records = eval::records_from_text(text);
    std::cout << eval::export_records(records, eval::format_from(format));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"co-evolutionary skill generation engine"};
    app.require_subcommand(1);

    std::string spec_arg, config_file, mode, scripted_dir, meta_dir, workdir, log_dir;
    std::uint64_t seed = 0;
    auto* evolve = app.add_subcommand("evolve", "run the co-evolution loop on one task");
    evolve->add_option("task", spec_arg, "task spec file");
    evolve->add_option("--config", config_file, "flat key=value config file");
    evolve->add_option("--mode", mode, "full|no_verifier|no_evolution|no_skill");
    evolve->add_option("--seed", seed, "run seed");
    evolve->add_option("--scripted", scripted_dir, "scripted run directory");
    evolve->add_option("--meta", meta_dir, "skill-creator bundle directory");
    evolve->add_option("--workdir", workdir, "sandbox root (default: temp)");
    evolve->add_option("--log-dir", log_dir, "write trace + summary here");

    std::string corpus_dir, skills_dir, bench_scripted, condition, records_out;
    std::string bench_format = "table";
    int runs = 1, workers = 1;
    auto* bench = app.add_subcommand("bench", "pass-rate benchmark over a task corpus");
    bench->add_option("corpus", corpus_dir, "corpus directory")->required();
    bench->add_option("--skills", skills_dir, "per-task bundle directory");
    bench->add_option("--scripted", bench_scripted, "scripted solver directory");
    bench->add_option("--runs", runs, "independent runs");
    bench->add_option("--workers", workers, "worker threads");
    bench->add_option("--condition", condition, "condition label");
    bench->add_option("--records", records_out, "write per-run records here");
    bench->add_option("--format", bench_format, "table|csv|jsonl");

    std::string transfer_skills, transfer_corpus;
    std::vector<std::string> target_args;
    int transfer_runs = 1, transfer_workers = 1;
    auto* transfer = app.add_subcommand("transfer", "cross-target skill transfer evaluation");
    transfer->add_option("skills", transfer_skills, "evolved bundle directory")->required();
    transfer->add_option("--targets", target_args, "label=scripted-dir list")->required();
    transfer->add_option("--corpus", transfer_corpus, "corpus directory")->required();
    transfer->add_option("--runs", transfer_runs, "independent runs");
    transfer->add_option("--workers", transfer_workers, "worker threads");

    std::string trace_glob;
    auto* stats = app.add_subcommand("stats", "iteration statistics over trajectory logs");
    stats->add_option("traces", trace_glob, "trace file glob")->required();

    std::string bundle_dir;
    auto* validate = app.add_subcommand("validate-skill", "lint a skill bundle");
    validate->add_option("bundle", bundle_dir, "bundle directory")->required();

    std::string replay_trace, replay_scripted, replay_spec, replay_config;
    auto* replay = app.add_subcommand("replay", "re-run a scripted trace and compare");
    replay->add_option("trace", replay_trace, "recorded trajectory log")->required();
    replay->add_option("--scripted", replay_scripted, "scripted run directory")->required();
    replay->add_option("--task", replay_spec, "task spec (default: task.spec in scripted dir)");
    replay->add_option("--config", replay_config, "flat key=value config file");

    std::string report_file, report_format = "table";
    bool unseal = false;
    auto* report = app.add_subcommand("report", "export records or traces");
    report->add_option("records", report_file, "records or trace file")->required();
    report->add_option("--format", report_format, "table|csv|jsonl");
    report->add_flag("--unseal", unseal, "emit oracle payloads (operator access)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*evolve)
            return cmd_evolve(spec_arg, config_file, mode, seed, scripted_dir, meta_dir, workdir,
                              log_dir);
        if (*bench)
            return cmd_bench(corpus_dir, skills_dir, bench_scripted, runs, workers, condition,
                             records_out, bench_format);
        if (*transfer)
            return cmd_transfer(transfer_skills, target_args, transfer_corpus, transfer_runs,
                                transfer_workers);
        if (*stats) return cmd_stats(trace_glob);
        if (*validate) return cmd_validate(bundle_dir);
        if (*replay) return cmd_replay(replay_trace, replay_scripted, replay_spec, replay_config);
        if (*report) return cmd_report(report_file, report_format, unseal);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        // Bad operator input is a usage error; everything else is internal.
        const std::string code = e.code();
        if (code == "BadConfig" || code == "MalformedTaskSpec" || code == "FileNotFound" ||
            code == "BadMode" || code == "BadFormat" || code == "ScriptDirMissing")
            return kExitUsage;
        return kExitInternal;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitUsage;
}
