#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "coevo/policy.hpp"
#include "coevo/skills.hpp"

namespace coevo::sandbox {

struct TaskSpec {
    std::string task_id;
    std::string instruction;                // I
    std::filesystem::path fixture;          // input data directory
    std::vector<std::string> output_globs;  // patterns selecting result files
    std::string oracle_suite;               // opaque hidden-suite id
    double timeout_s = 60.0;
    std::string domain_tag;
};

// Flat key:value task document. `instruction` may be a multi-line block
// (lines after `instruction:` indented by two spaces).
TaskSpec parse_task_spec_text(const std::string& text, const std::filesystem::path& base_dir);
TaskSpec load_task_spec(const std::filesystem::path& file);

struct Environment {
    std::string env_id;
    std::filesystem::path workdir;
    std::string provisioned_from;
    bool fresh = true;
    bool mutated = false;
};

struct TranscriptEntry {
    int step = 0;
    std::string command;
    std::string output;
    int exit_status = 0;
    double wall_s = 0.0;
};

struct RolloutArtifacts {
    std::map<std::string, std::string> outputs;  // glob-matched files
    std::vector<TranscriptEntry> transcript;
    double elapsed_s = 0.0;
    bool completed = false;  // policy signaled completion before timeout
    bool timed_out = false;
};

struct RolloutOptions {
    // Command output fed back to the policy is truncated to this cap.
    std::size_t observation_cap_bytes = 32 * 1024;
    // Reject commands that appear to write outside the workdir.
    bool confine_writes = false;
    double per_command_timeout_s = 60.0;
};

constexpr const char* kSkillsDirName = "skills";
constexpr const char* kTranscriptLogName = ".transcript.log";

// Provisions isolated task environments under one root directory and runs
// policy-driven rollouts inside them. Concurrent provision/rollout across
// distinct environments is safe; one environment hosts one rollout at a time.
class Sandbox {
public:
    explicit Sandbox(std::filesystem::path root);

    Environment provision(const TaskSpec& spec);
    Environment clone_fresh(const TaskSpec& spec);

    // Writes the bundle under skills/<name>/. Throws NameCollision when the
    // skill name is already installed.
    void install_skill(Environment& env, const skills::SkillBundle& bundle);
    // Same, but replaces a previously installed version (evolution loop path).
    void install_or_replace_skill(Environment& env, const skills::SkillBundle& bundle);

    // Drives the policy's command loop until completion, effective timeout
    // (timeout_s x multiplier), or policy error. When `ctx` is given the
    // exchange is appended to it (persistent generator session); otherwise a
    // throwaway context seeded with the instruction is used.
    RolloutArtifacts rollout(Environment& env, policy::Policy& pol, const TaskSpec& spec,
                             double timeout_multiplier,
                             policy::ConversationContext* ctx = nullptr,
                             const RolloutOptions& opts = {});

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    std::mutex mutex_;
    int next_env_ = 0;
};

// All files matching `globs`, keyed by workdir-relative path, lexicographic.
std::map<std::string, std::string> collect_outputs(const Environment& env,
                                                   const std::vector<std::string>& globs);

std::optional<std::string> read_workdir_file(const Environment& env, const std::string& rel);

}  // namespace coevo::sandbox
