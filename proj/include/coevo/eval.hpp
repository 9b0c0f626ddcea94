#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coevo/oracle.hpp"
#include "coevo/policy.hpp"
#include "coevo/rational.hpp"
#include "coevo/sandbox.hpp"
#include "coevo/skills.hpp"
#include "coevo/trace.hpp"

namespace coevo::eval {

struct RunRecord {
    std::string task_id;
    std::string condition;  // e.g. no_skill, evolved, transferred:<source>
    int run_index = 0;
    Rational oracle_score{0, 1};
    bool passed = false;  // oracle_score = 1 exactly
    double elapsed_s = 0.0;
    std::string detail;  // set for infrastructure failures
};

struct PassRateReport {
    std::string condition;
    std::vector<Rational> per_run_rates;
    double mean = 0.0;
    double std_dev = 0.0;  // sample (n-1); 0 with footnote for a single run
    int task_count = 0;
    int run_count = 0;
    bool single_run_footnote = false;
};

struct BenchOptions {
    std::string condition = "evolved";
    int workers = 1;
    double timeout_multiplier = 1.0;  // evaluation stage uses the raw timeout
    // Appended to the instruction when a bundle is installed.
    std::string skill_hint;
};

struct BenchResult {
    PassRateReport report;
    std::vector<RunRecord> records;
};

PassRateReport aggregate(const std::vector<RunRecord>& records, const std::string& condition,
                         int task_count, int runs);

// Fresh environment + optional bundle install + rollout + hidden-suite grade,
// for every (run, task) cell. Task-level failures become failed records with
// detail, never batch aborts.
BenchResult run_benchmark(const std::vector<sandbox::TaskSpec>& tasks,
                          const std::map<std::string, std::optional<skills::SkillBundle>>& bundles,
                          policy::PolicyHandle target, int runs, sandbox::Sandbox& sb,
                          const BenchOptions& opts = {});

struct TransferReport {
    std::string target_label;
    BenchResult with_skills;
    BenchResult no_skill;
    double delta = 0.0;  // with-skills mean minus no-skill mean
};

std::vector<TransferReport> transfer_evaluate(
    const std::map<std::string, std::optional<skills::SkillBundle>>& bundles,
    const std::string& source_label,
    const std::vector<std::pair<std::string, policy::PolicyHandle>>& targets,
    const std::vector<sandbox::TaskSpec>& tasks, int runs, sandbox::Sandbox& sb,
    const BenchOptions& opts = {});

struct TaskIteration {
    int verification_cycles = 0;
    int oracle_rounds = 0;
    bool converged = false;
};

struct IterationStats {
    std::map<std::string, TaskIteration> per_task;
    bool has_tasks = false;
    double mean_cycles = 0.0;
    double mean_oracle_rounds = 0.0;
    std::map<int, int> cycles_histogram;
    std::map<int, int> rounds_histogram;
};

IterationStats iteration_stats(
    const std::vector<std::pair<std::string, trace::Trajectory>>& traces);

std::vector<std::pair<std::string, PassRateReport>> domain_breakdown(
    const std::vector<RunRecord>& records, const std::map<std::string, std::string>& domain_map);

enum class Format { table_text, csv, jsonl };
Format format_from(const std::string& name);

std::string export_report(const PassRateReport& report, Format format);
PassRateReport pass_rate_from_csv(const std::string& csv);
PassRateReport pass_rate_from_jsonl(const std::string& jsonl);

std::string export_stats(const IterationStats& stats, Format format);
IterationStats stats_from_jsonl(const std::string& jsonl);

std::string records_to_text(const std::vector<RunRecord>& records);
std::vector<RunRecord> records_from_text(const std::string& text);
std::string export_records(const std::vector<RunRecord>& records, Format format);

}  // namespace coevo::eval
