#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coevo/oracle.hpp"
#include "coevo/policy.hpp"
#include "coevo/rational.hpp"
#include "coevo/sandbox.hpp"
#include "coevo/skills.hpp"
#include "coevo/trace.hpp"
#include "coevo/verifier.hpp"

namespace coevo::evolution {

enum class Mode { full, no_verifier, no_evolution, no_skill };

Mode mode_from(const std::string& name);
const char* to_string(Mode m);

struct EvolutionConfig {
    int max_oracle_evals = 5;   // N (Table A-style configs also call this K)
    int max_refinements = 15;   // M
    double beta = 0.7;          // context cap fraction
    double timeout_multiplier = 5.0;
    Mode mode = Mode::full;
    bool checklist_gate_enabled = true;
    std::uint64_t seed = 0;
    std::size_t window_bytes = 1u << 20;
    std::string progress_path = "progress.md";
    std::vector<std::string> checklist_items = {"P1", "P1b", "P2", "P3", "P4", "P5", "P6"};
    std::filesystem::path log_dir;  // empty: no on-disk trace/summary

    void validate() const;
};

enum class Status { running, done_perfect, done_budget, done_context, done_checklist_stall };

const char* to_string(Status s);

struct EvolutionState {
    int i = 0;  // skill version
    int j = 0;  // suite version (escalation count)
    int n = 0;  // oracle evaluations used
    int r = 0;  // surrogate refinements used
    Rational best_score{0, 1};
    skills::SkillBundle best;
    skills::SkillBundle current;
    policy::ConversationContext ctx;
    std::optional<verifier::TestSuite> suite;
    Status status = Status::running;
};

struct EvolutionOutcome {
    skills::SkillBundle final;
    Rational final_score{0, 1};
    EvolutionState state;
    trace::Trajectory trace;
};

struct ChecklistStatus {
    bool complete = false;
    std::vector<std::string> missing;
};

ChecklistStatus checklist_from_text(const std::string& text,
                                    const std::vector<std::string>& default_items);
// Missing progress file reports every default item as missing.
ChecklistStatus checklist_gate(const sandbox::RolloutArtifacts& artifacts,
                               const std::string& progress_path,
                               const std::vector<std::string>& default_items);

// The co-evolution loop as a steppable state machine. One instance drives one
// task run; runs are sequential internally.
class EvolutionEngine {
public:
    EvolutionEngine(sandbox::TaskSpec spec, EvolutionConfig cfg, policy::PolicyHandle gen,
                    policy::PolicyHandle ver, oracle::OracleSession& oracle_session,
                    sandbox::Sandbox& sb, skills::SkillBundle meta_skill);

    // Builds C = (I, S_meta) and samples the initial skill (mode-dependent).
    void initialize();

    // One loop iteration; returns false once a terminal status is set.
    bool step();

    EvolutionOutcome finish();

    const EvolutionState& state() const { return state_; }
    const trace::Trajectory& events() const { return trace_; }

private:
    void emit(trace::EventKind kind, std::map<std::string, std::string> payload = {});
    policy::PolicyResponse guarded_generator_request();
    skills::SkillBundle bundle_from_edit(const policy::SkillEdit& edit,
                                         const skills::SkillBundle* prev) const;
    void refine_skill();
    sandbox::RolloutArtifacts do_rollout();
    bool step_full();
    bool step_no_verifier();
    bool step_single_shot();  // no_evolution / no_skill
    bool finish_with(Status status);

    sandbox::TaskSpec spec_;
    EvolutionConfig cfg_;
    policy::PolicyHandle gen_;
    policy::PolicyHandle ver_;
    oracle::OracleSession& oracle_;
    sandbox::Sandbox& sandbox_;
    skills::SkillBundle meta_;
    std::optional<sandbox::Environment> env_;
    EvolutionState state_;
    trace::Trajectory trace_;
    int next_step_ = 1;
    int diagnostics_ = 0;
    int checklist_blocks_ = 0;
    bool initialized_ = false;
};

EvolutionOutcome run_evolution(const sandbox::TaskSpec& spec, const EvolutionConfig& cfg,
                               policy::PolicyHandle gen, policy::PolicyHandle ver,
                               oracle::OracleSession& oracle_session, sandbox::Sandbox& sb,
                               const skills::SkillBundle& meta_skill);

}  // namespace coevo::evolution
