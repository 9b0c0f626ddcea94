#include "coevo/sandbox.hpp"

#include <fnmatch.h>

#include <chrono>
#include <fstream>
#include <regex>
#include <sstream>

#include "coevo/errors.hpp"
#include "coevo/subprocess.hpp"

namespace fs = std::filesystem;

namespace coevo::sandbox {
namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void copy_tree(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::copy_symlinks);
}

}  // namespace

TaskSpec parse_task_spec_text(const std::string& text, const fs::path& base_dir) {
    TaskSpec spec;
    std::istringstream in(text);
    std::string line;
    bool in_instruction = false;
    std::string instruction;
    while (std::getline(in, line)) {
        if (in_instruction) {
            if (line.rfind("  ", 0) == 0 || trim(line).empty()) {
                if (!instruction.empty()) instruction += "\n";
                instruction += line.size() >= 2 ? line.substr(2) : "";
                continue;
            }
            in_instruction = false;
        }
        if (trim(line).empty() || line[0] == '#') continue;
        auto colon = line.find(':');
        if (colon == std::string::npos) fail("MalformedTaskSpec", "line without key: " + line);
        std::string key = trim(line.substr(0, colon));
        std::string value = trim(line.substr(colon + 1));
        if (key == "task_id") spec.task_id = value;
        else if (key == "instruction") {
            if (value.empty()) in_instruction = true;
            else instruction = value;
        } else if (key == "fixture") {
            fs::path p = value;
            spec.fixture = p.is_absolute() ? p : base_dir / p;
        } else if (key == "output_globs") {
            std::stringstream ss(value);
            std::string g;
            while (std::getline(ss, g, ',')) {
                g = trim(g);
                if (!g.empty()) spec.output_globs.push_back(g);
            }
        } else if (key == "timeout_s") spec.timeout_s = std::stod(value);
        else if (key == "oracle_suite") spec.oracle_suite = value;
        else if (key == "domain_tag") spec.domain_tag = value;
        else fail("MalformedTaskSpec", "unknown key " + key);
    }
    spec.instruction = instruction;
    if (trim(spec.instruction).empty()) fail("MalformedTaskSpec", "instruction is empty");
    if (spec.output_globs.empty()) fail("MalformedTaskSpec", "output_globs is empty");
    if (spec.timeout_s <= 0) fail("MalformedTaskSpec", "timeout_s must be positive");
    return spec;
}

TaskSpec load_task_spec(const fs::path& file) {
    if (!fs::exists(file)) fail("MalformedTaskSpec", "no task spec at " + file.string());
    return parse_task_spec_text(read_file(file), file.parent_path());
}

Sandbox::Sandbox(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

Environment Sandbox::provision(const TaskSpec& spec) {
    if (!spec.fixture.empty() && !fs::is_directory(spec.fixture))
        fail("FixtureMissing", "fixture directory " + spec.fixture.string() + " not readable");
    Environment env;
    {
        // Skip ids whose directories survive from an earlier process using
        // the same root.
        std::lock_guard lock(mutex_);
        do {
            env.env_id = spec.task_id + "-env" + std::to_string(next_env_++);
            env.workdir = root_ / env.env_id;
        } while (fs::exists(env.workdir));
    }
    env.provisioned_from = spec.task_id;
    std::error_code ec;
    if (!spec.fixture.empty()) copy_tree(spec.fixture, env.workdir);
    else fs::create_directories(env.workdir);
    fs::create_directories(env.workdir / kSkillsDirName);
    return env;
}

Environment Sandbox::clone_fresh(const TaskSpec& spec) { return provision(spec); }

void Sandbox::install_skill(Environment& env, const skills::SkillBundle& bundle) {
    fs::path dest = env.workdir / kSkillsDirName / bundle.manifest.name;
    if (fs::exists(dest))
        fail("NameCollision", "skill " + bundle.manifest.name + " already installed");
    skills::write_bundle(bundle, dest);
}

void Sandbox::install_or_replace_skill(Environment& env, const skills::SkillBundle& bundle) {
    fs::path dest = env.workdir / kSkillsDirName / bundle.manifest.name;
    fs::remove_all(dest);
    skills::write_bundle(bundle, dest);
}

namespace {

// Conservative static confinement check: flags shell redirections and common
// write commands targeting absolute paths outside the workdir.
void check_confinement(const std::string& cmd, const fs::path& workdir) {
    static const std::regex write_re(
        R"((?:>>?\s*|\b(?:cp|mv|tee|touch|mkdir|dd\s+of=)\s+(?:-[\w-]+\s+)*)(/[^\s;|&'"]+))");
    for (auto it = std::sregex_iterator(cmd.begin(), cmd.end(), write_re);
         it != std::sregex_iterator(); ++it) {
        fs::path target = (*it)[1].str();
        auto rel = fs::relative(target, workdir);
        if (rel.empty() || rel.string().rfind("..", 0) == 0)
            fail("SandboxEscape",
                 "command writes outside workdir: " + target.string() + " in: " + cmd);
    }
}

void append_transcript_log(const Environment& env, const TranscriptEntry& e) {
    std::ofstream out(env.workdir / kTranscriptLogName, std::ios::app);
    std::string cmd = e.command;
    for (char& c : cmd)
        if (c == '\n' || c == '\t') c = ' ';
    out << e.step << "\t" << cmd << "\t" << e.exit_status << "\n";
}

}  // namespace

RolloutArtifacts Sandbox::rollout(Environment& env, policy::Policy& pol, const TaskSpec& spec,
                                  double timeout_multiplier, policy::ConversationContext* ctx,
                                  const RolloutOptions& opts) {
    using policy::Message;
    using policy::MsgKind;
    using policy::Origin;
    using policy::ResponseKind;

    if (timeout_multiplier <= 0) fail("BadTimeoutMultiplier", "multiplier must be positive");
    const double effective_timeout = spec.timeout_s * timeout_multiplier;

    policy::ConversationContext local;
    if (!ctx) {
        local.window_bytes = std::max<std::size_t>(1, 16u * 1024u * 1024u);
        local.messages.push_back(
            policy::make_message(Origin::host, MsgKind::instruction, spec.instruction));
        ctx = &local;
    }

    RolloutArtifacts art;
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    int step = 0;
    env.mutated = true;
    env.fresh = false;

    while (true) {
        if (elapsed() >= effective_timeout) {
            art.timed_out = true;
            break;
        }
        policy::PolicyResponse resp;
        try {
            resp = pol.request(ctx->messages);
        } catch (const Error& e) {
            if (e.code() == "BackendUnavailable" || e.code() == "AuthFailure")
                fail("PolicyFailure", e.what());
            throw;
        }
        *ctx = policy::append(*ctx, policy::make_message(Origin::policy, MsgKind::policy_output, resp.raw));

        if (resp.kind == ResponseKind::complete) {
            art.completed = true;
            break;
        }
        if (resp.kind != ResponseKind::commands)
            fail("PolicyFailure", "rollout expected commands or completion, got kind " +
                                      std::to_string(static_cast<int>(resp.kind)));

        std::string observation;
        for (const auto& cmd : resp.commands) {
            if (elapsed() >= effective_timeout) {
                art.timed_out = true;
                break;
            }
            if (opts.confine_writes) check_confinement(cmd.keystrokes, env.workdir);
            double budget = std::min(opts.per_command_timeout_s,
                                     std::max(0.05, effective_timeout - elapsed()));
            auto res = subprocess::run_command(env.workdir, cmd.keystrokes, budget);
            TranscriptEntry entry{step++, cmd.keystrokes, res.output, res.exit_status, res.wall_s};
            art.transcript.push_back(entry);
            append_transcript_log(env, entry);
            observation += res.output;
            if (res.timed_out) {
                observation += "\n[command timed out]";
                art.timed_out = true;
            }
        }
        if (observation.size() > opts.observation_cap_bytes) {
            observation.resize(opts.observation_cap_bytes);
            observation += "\n[output truncated]";
        }
        *ctx = policy::append(*ctx,
                              policy::make_message(Origin::host, MsgKind::observation, observation));
        if (resp.task_complete) {
            art.completed = true;
            break;
        }
        if (art.timed_out) break;
    }

    // Grace pass: partial artifacts stay inspectable after a timeout.
    art.outputs = collect_outputs(env, spec.output_globs);
    art.elapsed_s = elapsed();
    return art;
}

std::map<std::string, std::string> collect_outputs(const Environment& env,
                                                   const std::vector<std::string>& globs) {
    std::map<std::string, std::string> out;
    if (!fs::is_directory(env.workdir)) return out;
    for (auto it = fs::recursive_directory_iterator(env.workdir);
         it != fs::recursive_directory_iterator(); ++it) {
        if (!it->is_regular_file()) continue;
        std::string rel = fs::relative(it->path(), env.workdir).generic_string();
        if (rel == kTranscriptLogName || rel.rfind(std::string(kSkillsDirName) + "/", 0) == 0)
            continue;
        for (const auto& g : globs) {
            if (fnmatch(g.c_str(), rel.c_str(), 0) == 0) {
                out[rel] = read_file(it->path());
                break;
            }
        }
    }
    return out;
}

std::optional<std::string> read_workdir_file(const Environment& env, const std::string& rel) {
    fs::path p = env.workdir / rel;
    if (!fs::is_regular_file(p)) return std::nullopt;
    return read_file(p);
}

}  // namespace coevo::sandbox
