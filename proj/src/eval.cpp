#include "coevo/eval.hpp"

#include <atomic>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "coevo/errors.hpp"

using nlohmann::json;

namespace coevo::eval {

PassRateReport aggregate(const std::vector<RunRecord>& records, const std::string& condition,
                         int task_count, int runs) {
    PassRateReport report;
    report.condition = condition;
    report.task_count = task_count;
    report.run_count = runs;
    for (int run = 0; run < runs; ++run) {
        int passed = 0;
        for (const auto& rec : records)
            if (rec.run_index == run && rec.passed) ++passed;
        report.per_run_rates.emplace_back(passed, task_count);
    }
    double sum = 0.0;
    for (const auto& r : report.per_run_rates) sum += r.to_double();
    report.mean = runs > 0 ? sum / runs : 0.0;
    if (runs < 2) {
        report.std_dev = 0.0;
        report.single_run_footnote = true;
    } else {
        double sq = 0.0;
        for (const auto& r : report.per_run_rates) {
            double d = r.to_double() - report.mean;
            sq += d * d;
        }
        report.std_dev = std::sqrt(sq / (runs - 1));
    }
    return report;
}

namespace {

RunRecord run_cell(const sandbox::TaskSpec& task,
                   const std::optional<skills::SkillBundle>& bundle, policy::Policy& target,
                   int run_index, sandbox::Sandbox& sb, const BenchOptions& opts) {
    RunRecord rec;
    rec.task_id = task.task_id;
    rec.condition = opts.condition;
    rec.run_index = run_index;
    try {
        sandbox::TaskSpec spec = task;
        if (bundle && !opts.skill_hint.empty())
            spec.instruction += "\n\n" + opts.skill_hint;
        auto env = sb.provision(spec);
        if (bundle) sb.install_skill(env, *bundle);
        auto session = target.fresh_session();
        auto artifacts = sb.rollout(env, *session, spec, opts.timeout_multiplier);
        auto score = oracle::evaluate_artifacts(oracle::HiddenSuiteRef{task.oracle_suite},
                                                artifacts, env.workdir,
                                                bundle ? bundle->version : -1);
        rec.oracle_score = score.score;
        rec.passed = score.score.is_one();
        rec.elapsed_s = artifacts.elapsed_s;
    } catch (const Error& e) {
        if (e.code() == "IsolationViolation") throw;
        rec.oracle_score = Rational(0, 1);
        rec.passed = false;
        rec.detail = std::string("infrastructure: ") + e.what();
    }
    return rec;
}

}  // namespace

BenchResult run_benchmark(const std::vector<sandbox::TaskSpec>& tasks,
                          const std::map<std::string, std::optional<skills::SkillBundle>>& bundles,
                          policy::PolicyHandle target, int runs, sandbox::Sandbox& sb,
                          const BenchOptions& opts) {
    if (runs < 1) fail("BadConfig", "runs must be >= 1");
    struct Cell {
        int run;
        int task;
    };
    std::vector<Cell> cells;
    for (int run = 0; run < runs; ++run)
        for (int t = 0; t < static_cast<int>(tasks.size()); ++t) cells.push_back({run, t});

    std::vector<RunRecord> records(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t idx = next.fetch_add(1);
            if (idx >= cells.size()) return;
            const auto& cell = cells[idx];
            const auto& task = tasks[cell.task];
            std::optional<skills::SkillBundle> bundle;
            auto it = bundles.find(task.task_id);
            if (it != bundles.end()) bundle = it->second;
            records[idx] = run_cell(task, bundle, *target, cell.run, sb, opts);
        }
    };

    const int workers = std::max(1, opts.workers);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    BenchResult result;
    result.records = std::move(records);
    result.report =
        aggregate(result.records, opts.condition, static_cast<int>(tasks.size()), runs);
    return result;
}

std::vector<TransferReport> transfer_evaluate(
    const std::map<std::string, std::optional<skills::SkillBundle>>& bundles,
    const std::string& source_label,
    const std::vector<std::pair<std::string, policy::PolicyHandle>>& targets,
    const std::vector<sandbox::TaskSpec>& tasks, int runs, sandbox::Sandbox& sb,
    const BenchOptions& opts) {
    std::vector<TransferReport> reports;
    for (const auto& [label, handle] : targets) {
        TransferReport tr;
        tr.target_label = label;
        BenchOptions with_opts = opts;
        with_opts.condition = "transferred:" + source_label;
        tr.with_skills = run_benchmark(tasks, bundles, handle, runs, sb, with_opts);
        BenchOptions no_opts = opts;
        no_opts.condition = "no_skill";
        tr.no_skill = run_benchmark(tasks, {}, handle, runs, sb, no_opts);
        tr.delta = tr.with_skills.report.mean - tr.no_skill.report.mean;
        reports.push_back(std::move(tr));
    }
    return reports;
}

IterationStats iteration_stats(
    const std::vector<std::pair<std::string, trace::Trajectory>>& traces) {
    IterationStats stats;
    for (const auto& [task_id, trajectory] : traces) {
        TaskIteration it;
        for (const auto& e : trajectory) {
            switch (e.kind) {
                case trace::EventKind::diagnostic_appended:
                case trace::EventKind::checklist_blocked:
                    ++it.verification_cycles;
                    break;
                case trace::EventKind::oracle_evaluated:
                    ++it.verification_cycles;
                    ++it.oracle_rounds;
                    break;
                case trace::EventKind::early_exit:
                    it.converged = true;
                    break;
                default:
                    break;
            }
        }
        stats.per_task[task_id] = it;
    }
    if (stats.per_task.empty()) return stats;
    stats.has_tasks = true;
    double cycles = 0.0, rounds = 0.0;
    for (const auto& [id, it] : stats.per_task) {
        cycles += it.verification_cycles;
        rounds += it.oracle_rounds;
        ++stats.cycles_histogram[it.verification_cycles];
        ++stats.rounds_histogram[it.oracle_rounds];
    }
    stats.mean_cycles = cycles / static_cast<double>(stats.per_task.size());
    stats.mean_oracle_rounds = rounds / static_cast<double>(stats.per_task.size());
    return stats;
}

std::vector<std::pair<std::string, PassRateReport>> domain_breakdown(
    const std::vector<RunRecord>& records, const std::map<std::string, std::string>& domain_map) {
    std::map<std::string, std::vector<RunRecord>> groups;
    for (const auto& rec : records) {
        auto it = domain_map.find(rec.task_id);
        if (it == domain_map.end()) fail("UnmappedTask", "no domain for task " + rec.task_id);
        groups[it->second].push_back(rec);
    }
    std::vector<std::pair<std::string, PassRateReport>> table;
    for (const auto& [domain, recs] : groups) {
        int runs = 0;
        std::set<std::string> task_ids;
        for (const auto& r : recs) {
            runs = std::max(runs, r.run_index + 1);
            task_ids.insert(r.task_id);
        }
        auto report = aggregate(recs, recs.front().condition, static_cast<int>(task_ids.size()),
                                runs);
        table.emplace_back(domain, std::move(report));
    }
    return table;
}

Format format_from(const std::string& name) {
    if (name == "table" || name == "table_text") return Format::table_text;
    if (name == "csv") return Format::csv;
    if (name == "jsonl") return Format::jsonl;
    fail("BadFormat", "unknown format " + name);
}

namespace {

std::string rates_field(const std::vector<Rational>& rates) {
    std::string out;
    for (const auto& r : rates) out += (out.empty() ? "" : "|") + r.str();
    return out;
}

std::vector<Rational> parse_rates(const std::string& field) {
    std::vector<Rational> rates;
    std::stringstream ss(field);
    std::string part;
    while (std::getline(ss, part, '|'))
        if (!part.empty()) rates.push_back(Rational::parse(part));
    return rates;
}

json report_json(const PassRateReport& r) {
    json rates = json::array();
    for (const auto& rt : r.per_run_rates) rates.push_back(rt.str());
    return json{{"condition", r.condition},     {"task_count", r.task_count},
                {"run_count", r.run_count},     {"mean", r.mean},
                {"std", r.std_dev},             {"per_run_rates", rates},
                {"single_run_footnote", r.single_run_footnote}};
}

PassRateReport report_from_json(const json& j) {
    PassRateReport r;
    r.condition = j.at("condition").get<std::string>();
    r.task_count = j.at("task_count").get<int>();
    r.run_count = j.at("run_count").get<int>();
    r.mean = j.at("mean").get<double>();
    r.std_dev = j.at("std").get<double>();
    r.single_run_footnote = j.value("single_run_footnote", false);
    for (const auto& rt : j.at("per_run_rates")) r.per_run_rates.push_back(Rational::parse(rt.get<std::string>()));
    return r;
}

std::string csv_escape(const std::string& s) {
    if (s.find(',') == std::string::npos && s.find('"') == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        out += c;
    }
    return out + "\"";
}

std::string fmt_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace

std::string export_report(const PassRateReport& report, Format format) {
    switch (format) {
        case Format::csv: {
            std::string out =
                "condition,task_count,run_count,mean,std,per_run_rates,single_run_footnote\n";
            out += csv_escape(report.condition) + "," + std::to_string(report.task_count) + "," +
                   std::to_string(report.run_count) + "," + fmt_double(report.mean) + "," +
                   fmt_double(report.std_dev) + "," + rates_field(report.per_run_rates) + "," +
                   (report.single_run_footnote ? "1" : "0") + "\n";
            return out;
        }
        case Format::jsonl:
            return report_json(report).dump() + "\n";
        case Format::table_text: {
            std::ostringstream out;
            out << "condition: " << report.condition << "\n"
                << "tasks: " << report.task_count << "  runs: " << report.run_count << "\n"
                << "pass rate: " << report.mean << " ± " << report.std_dev
                << (report.single_run_footnote ? " (single run: std reported as 0)" : "") << "\n"
                << "per-run rates:";
            for (const auto& r : report.per_run_rates) out << " " << r.str();
            out << "\n";
            return out.str();
        }
    }
    fail("BadFormat", "unhandled format");
}

PassRateReport pass_rate_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string header, row;
    if (!std::getline(in, header) || !std::getline(in, row))
        fail("BadFormat", "csv needs a header and one row");
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < row.size(); ++i) {
        char c = row[i];
        if (quoted) {
            if (c == '"' && i + 1 < row.size() && row[i + 1] == '"') { cur += '"'; ++i; }
            else if (c == '"') quoted = false;
            else cur += c;
        } else if (c == '"') quoted = true;
        else if (c == ',') { fields.push_back(cur); cur.clear(); }
        else cur += c;
    }
    fields.push_back(cur);
    if (fields.size() != 7) fail("BadFormat", "csv row needs 7 fields");
    PassRateReport r;
    r.condition = fields[0];
    r.task_count = std::stoi(fields[1]);
    r.run_count = std::stoi(fields[2]);
    r.mean = std::stod(fields[3]);
    r.std_dev = std::stod(fields[4]);
    r.per_run_rates = parse_rates(fields[5]);
    r.single_run_footnote = fields[6] == "1";
    return r;
}

PassRateReport pass_rate_from_jsonl(const std::string& jsonl) {
    return report_from_json(json::parse(jsonl));
}

std::string export_stats(const IterationStats& stats, Format format) {
    switch (format) {
        case Format::jsonl: {
            std::string out;
            for (const auto& [id, it] : stats.per_task)
                out += json{{"task_id", id},
                            {"verification_cycles", it.verification_cycles},
                            {"oracle_rounds", it.oracle_rounds},
                            {"converged", it.converged}}
                           .dump() +
                       "\n";
            json ch = json::object(), rh = json::object();
            for (const auto& [k, v] : stats.cycles_histogram) ch[std::to_string(k)] = v;
            for (const auto& [k, v] : stats.rounds_histogram) rh[std::to_string(k)] = v;
            out += json{{"summary", true},
                        {"has_tasks", stats.has_tasks},
                        {"mean_cycles", stats.mean_cycles},
                        {"mean_oracle_rounds", stats.mean_oracle_rounds},
                        {"cycles_histogram", ch},
                        {"rounds_histogram", rh}}
                       .dump() +
                   "\n";
            return out;
        }
        case Format::csv: {
            std::string out = "task_id,verification_cycles,oracle_rounds,converged\n";
            for (const auto& [id, it] : stats.per_task)
                out += csv_escape(id) + "," + std::to_string(it.verification_cycles) + "," +
                       std::to_string(it.oracle_rounds) + "," + (it.converged ? "1" : "0") + "\n";
            return out;
        }
        case Format::table_text: {
            std::ostringstream out;
            if (!stats.has_tasks) {
                out << "no traces\n";
                return out.str();
            }
            out << "tasks: " << stats.per_task.size() << "\n"
                << "mean verification cycles: " << stats.mean_cycles << "\n"
                << "mean oracle rounds: " << stats.mean_oracle_rounds << "\n"
                << "cycles histogram:";
            for (const auto& [k, v] : stats.cycles_histogram) out << " " << k << ":" << v;
            out << "\nrounds histogram:";
            for (const auto& [k, v] : stats.rounds_histogram) out << " " << k << ":" << v;
            out << "\n";
            return out.str();
        }
    }
    fail("BadFormat", "unhandled format");
}

IterationStats stats_from_jsonl(const std::string& jsonl) {
    IterationStats stats;
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.value("summary", false)) {
            stats.has_tasks = j.at("has_tasks").get<bool>();
            stats.mean_cycles = j.at("mean_cycles").get<double>();
            stats.mean_oracle_rounds = j.at("mean_oracle_rounds").get<double>();
            for (auto it = j.at("cycles_histogram").begin(); it != j.at("cycles_histogram").end(); ++it)
                stats.cycles_histogram[std::stoi(it.key())] = it.value().get<int>();
            for (auto it = j.at("rounds_histogram").begin(); it != j.at("rounds_histogram").end(); ++it)
                stats.rounds_histogram[std::stoi(it.key())] = it.value().get<int>();
        } else {
            TaskIteration it;
            it.verification_cycles = j.at("verification_cycles").get<int>();
            it.oracle_rounds = j.at("oracle_rounds").get<int>();
            it.converged = j.at("converged").get<bool>();
            stats.per_task[j.at("task_id").get<std::string>()] = it;
        }
    }
    return stats;
}

std::string records_to_text(const std::vector<RunRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        std::string detail = r.detail;
        for (char& c : detail)
            if (c == '\t' || c == '\n') c = ' ';
        out += r.task_id + "\t" + r.condition + "\t" + std::to_string(r.run_index) + "\t" +
               r.oracle_score.str() + "\t" + (r.passed ? "1" : "0") + "\t" +
               fmt_double(r.elapsed_s) + "\t" + detail + "\n";
    }
    return out;
}

std::vector<RunRecord> records_from_text(const std::string& text) {
    std::vector<RunRecord> records;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            auto tab = line.find('\t', pos);
            if (tab == std::string::npos) {
                fields.push_back(line.substr(pos));
                break;
            }
            fields.push_back(line.substr(pos, tab - pos));
            pos = tab + 1;
        }
        if (fields.size() < 6) fail("BadFormat", "record line needs at least 6 fields: " + line);
        RunRecord r;
        r.task_id = fields[0];
        r.condition = fields[1];
        r.run_index = std::stoi(fields[2]);
        r.oracle_score = Rational::parse(fields[3]);
        r.passed = fields[4] == "1";
        r.elapsed_s = std::stod(fields[5]);
        if (fields.size() > 6) r.detail = fields[6];
        records.push_back(std::move(r));
    }
    return records;
}

std::string export_records(const std::vector<RunRecord>& records, Format format) {
    switch (format) {
        case Format::csv: {
            std::string out = "task_id,condition,run_index,score,passed,elapsed_s,detail\n";
            for (const auto& r : records)
                out += csv_escape(r.task_id) + "," + csv_escape(r.condition) + "," +
                       std::to_string(r.run_index) + "," + r.oracle_score.str() + "," +
                       (r.passed ? "1" : "0") + "," + fmt_double(r.elapsed_s) + "," +
                       csv_escape(r.detail) + "\n";
            return out;
        }
        case Format::jsonl: {
            std::string out;
            for (const auto& r : records)
                out += json{{"task_id", r.task_id},   {"condition", r.condition},
                            {"run_index", r.run_index}, {"score", r.oracle_score.str()},
                            {"passed", r.passed},     {"elapsed_s", r.elapsed_s},
                            {"detail", r.detail}}
                           .dump() +
                       "\n";
            return out;
        }
        case Format::table_text: {
            std::ostringstream out;
            for (const auto& r : records)
                out << r.task_id << "  " << r.condition << "  run " << r.run_index << "  "
                    << r.oracle_score.str() << (r.passed ? "  PASS" : "  fail")
                    << (r.detail.empty() ? "" : "  [" + r.detail + "]") << "\n";
            return out.str();
        }
    }
    fail("BadFormat", "unhandled format");
}

}  // namespace coevo::eval
