#include "coevo/evolution.hpp"

#include <fstream>
#include <regex>
#include <sstream>

#include "coevo/errors.hpp"

namespace fs = std::filesystem;

namespace coevo::evolution {

Mode mode_from(const std::string& name) {
    if (name == "full") return Mode::full;
    if (name == "no_verifier") return Mode::no_verifier;
    if (name == "no_evolution") return Mode::no_evolution;
    if (name == "no_skill") return Mode::no_skill;
    fail("BadMode", "unknown mode " + name);
}

const char* to_string(Mode m) {
    switch (m) {
        case Mode::full: return "full";
        case Mode::no_verifier: return "no_verifier";
        case Mode::no_evolution: return "no_evolution";
        case Mode::no_skill: return "no_skill";
    }
    return "?";
}

const char* to_string(Status s) {
    switch (s) {
        case Status::running: return "running";
        case Status::done_perfect: return "done_perfect";
        case Status::done_budget: return "done_budget";
        case Status::done_context: return "done_context";
        case Status::done_checklist_stall: return "done_checklist_stall";
    }
    return "?";
}

void EvolutionConfig::validate() const {
    if (max_oracle_evals < 1) fail("BadConfig", "N must be >= 1");
    if (max_refinements < 1) fail("BadConfig", "M must be >= 1");
    if (!(beta > 0.0 && beta <= 1.0)) fail("BadConfig", "beta must lie in (0, 1]");
    if (timeout_multiplier <= 0.0) fail("BadConfig", "timeout multiplier must be positive");
    if (window_bytes == 0) fail("BadConfig", "window_bytes must be positive");
}

ChecklistStatus checklist_from_text(const std::string& text,
                                    const std::vector<std::string>& default_items) {
    static const std::regex item_re(R"(^\s*-\s*\[([ xX])\]\s*([A-Za-z0-9_-]+))");
    ChecklistStatus status;
    bool any = false;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::smatch m;
        if (!std::regex_search(line, m, item_re)) continue;
        any = true;
        if (m[1].str() == " ") status.missing.push_back(m[2].str());
    }
    if (!any) {
        status.missing = default_items;
        status.complete = false;
        return status;
    }
    status.complete = status.missing.empty();
    return status;
}

ChecklistStatus checklist_gate(const sandbox::RolloutArtifacts& artifacts,
                               const std::string& progress_path,
                               const std::vector<std::string>& default_items) {
    auto it = artifacts.outputs.find(progress_path);
    if (it == artifacts.outputs.end()) {
        ChecklistStatus status;
        status.missing = default_items;
        return status;
    }
    return checklist_from_text(it->second, default_items);
}

EvolutionEngine::EvolutionEngine(sandbox::TaskSpec spec, EvolutionConfig cfg,
                                 policy::PolicyHandle gen, policy::PolicyHandle ver,
                                 oracle::OracleSession& oracle_session, sandbox::Sandbox& sb,
                                 skills::SkillBundle meta_skill)
    : spec_(std::move(spec)),
      cfg_(std::move(cfg)),
      gen_(std::move(gen)),
      ver_(std::move(ver)),
      oracle_(oracle_session),
      sandbox_(sb),
      meta_(std::move(meta_skill)) {
    cfg_.validate();
    if (gen_ && gen_->role() != policy::Role::generator)
        fail("WrongRole", "generator handle has the wrong role");
    if (ver_ && ver_->role() != policy::Role::verifier)
        fail("WrongRole", "verifier handle has the wrong role");
}

void EvolutionEngine::emit(trace::EventKind kind, std::map<std::string, std::string> payload) {
    trace_.push_back({next_step_++, kind, std::move(payload)});
}

policy::PolicyResponse EvolutionEngine::guarded_generator_request() {
    verifier::isolation_guard(policy::Role::generator,
                              policy::serialize_view(state_.ctx.messages));
    policy::PolicyResponse resp;
    try {
        resp = gen_->request(state_.ctx.messages);
    } catch (const Error& e) {
        if (e.code() == "BackendUnavailable" || e.code() == "AuthFailure")
            fail("PolicyFailure", e.what());
        throw;
    }
    state_.ctx = policy::append(
        state_.ctx,
        policy::make_message(policy::Origin::policy, policy::MsgKind::policy_output, resp.raw));
    return resp;
}

skills::SkillBundle EvolutionEngine::bundle_from_edit(const policy::SkillEdit& edit,
                                                      const skills::SkillBundle* prev) const {
    if (prev) return skills::next_version(*prev, edit.edits, edit.new_doc);
    if (!edit.new_doc)
        fail("PolicyFailure", "initial skill generation must provide the procedure document");
    std::map<std::string, std::string> files;
    for (const auto& [path, content] : edit.edits)
        if (content) files[path] = *content;
    return skills::make_bundle(*edit.new_doc, std::move(files), 0);
}

void EvolutionEngine::refine_skill() {
    auto resp = guarded_generator_request();
    if (resp.kind != policy::ResponseKind::skill_edit)
        fail("PolicyFailure", "expected a skill_edit response during refinement");
    state_.current = bundle_from_edit(resp.edit, &state_.current);
    state_.i = state_.current.version;
    emit(trace::EventKind::skill_generated, {{"version", std::to_string(state_.i)}});
}

void EvolutionEngine::initialize() {
    if (initialized_) fail("ContractViolation", "engine initialized twice");
    initialized_ = true;
    state_.ctx.window_bytes = cfg_.window_bytes;

    if (cfg_.mode == Mode::no_skill) {
        // Bare policy evaluation: no meta-skill, no bundle, no skill events.
        state_.ctx.messages.push_back(policy::make_message(
            policy::Origin::host, policy::MsgKind::instruction, spec_.instruction));
        return;
    }

    state_.ctx = policy::init_context(spec_.instruction, meta_, cfg_.window_bytes);
    auto resp = guarded_generator_request();
    if (resp.kind != policy::ResponseKind::skill_edit)
        fail("PolicyFailure", "expected a skill_edit response for the initial skill");
    state_.current = bundle_from_edit(resp.edit, nullptr);
    state_.best = state_.current;
    state_.i = 0;
    emit(trace::EventKind::skill_generated, {{"version", "0"}});

    if (cfg_.mode == Mode::full || cfg_.mode == Mode::no_verifier)
        env_ = sandbox_.provision(spec_);
}

sandbox::RolloutArtifacts EvolutionEngine::do_rollout() {
    sandbox_.install_or_replace_skill(*env_, state_.current);
    verifier::isolation_guard(policy::Role::generator,
                              policy::serialize_view(state_.ctx.messages));
    auto artifacts =
        sandbox_.rollout(*env_, *gen_, spec_, cfg_.timeout_multiplier, &state_.ctx);
    std::ostringstream elapsed;
    elapsed << artifacts.elapsed_s;
    emit(trace::EventKind::rollout_done,
         {{"completed", artifacts.completed ? "1" : "0"},
          {"outputs", std::to_string(artifacts.outputs.size())},
          {"elapsed_s", elapsed.str()}});
    return artifacts;
}

bool EvolutionEngine::finish_with(Status status) {
    state_.status = status;
    return false;
}

bool EvolutionEngine::step() {
    if (!initialized_) fail("ContractViolation", "step before initialize");
    if (state_.status != Status::running) return false;
    switch (cfg_.mode) {
        case Mode::full: return step_full();
        case Mode::no_verifier: return step_no_verifier();
        case Mode::no_evolution:
        case Mode::no_skill: return step_single_shot();
    }
    return false;
}

bool EvolutionEngine::step_full() {
    // Loop-top budget check.
    if (state_.n >= cfg_.max_oracle_evals) return finish_with(Status::done_budget);
    if (state_.r >= cfg_.max_refinements)
        return finish_with(checklist_blocks_ == state_.r ? Status::done_checklist_stall
                                                         : Status::done_budget);

    auto artifacts = do_rollout();

    if (policy::usage(state_.ctx) > cfg_.beta) {
        std::ostringstream u;
        u << policy::usage(state_.ctx);
        emit(trace::EventKind::context_cap_hit, {{"usage", u.str()}});
        return finish_with(Status::done_context);
    }

    if (!state_.suite)
        state_.suite = verifier::generate_suite(*ver_, spec_.instruction, artifacts, nullptr);

    auto result = verifier::run_suite(*state_.suite, artifacts, env_->workdir);
    auto reward = verifier::surrogate_reward(result);
    emit(trace::EventKind::suite_run, {{"suite_version", std::to_string(state_.suite->version)},
                                       {"reward", reward.str()},
                                       {"passed", std::to_string(result.passed_count)},
                                       {"total", std::to_string(result.total)}});

    if (!reward.is_one()) {
        // Failing surrogate: diagnostic drives refinement; the suite is locked.
        auto diag = verifier::build_diagnostic(*ver_, spec_.instruction, artifacts, result);
        state_.ctx = policy::append(
            state_.ctx, policy::make_message(policy::Origin::host, policy::MsgKind::diagnostic,
                                             verifier::render_diagnostic(diag)));
        emit(trace::EventKind::diagnostic_appended,
             {{"failed", std::to_string(diag.failed.size())}});
        ++diagnostics_;
        refine_skill();
        ++state_.r;
        return true;
    }

    if (cfg_.checklist_gate_enabled) {
        auto progress = sandbox::read_workdir_file(*env_, cfg_.progress_path);
        auto check = progress ? checklist_from_text(*progress, cfg_.checklist_items)
                              : ChecklistStatus{false, cfg_.checklist_items};
        if (!check.complete) {
            std::string missing;
            for (const auto& item : check.missing)
                missing += (missing.empty() ? "" : ",") + item;
            emit(trace::EventKind::checklist_blocked, {{"missing", missing}});
            ++checklist_blocks_;
            state_.ctx = policy::append(
                state_.ctx, policy::make_message(policy::Origin::host, policy::MsgKind::diagnostic,
                                                 "checklist incomplete: " + missing));
            refine_skill();
            ++state_.r;
            return true;
        }
    }

    // Surrogate passed and the checklist is complete: spend one oracle call.
    auto score = oracle_.evaluate(state_.current, spec_);
    ++state_.n;
    emit(trace::EventKind::oracle_evaluated, {{"version", std::to_string(state_.i)},
                                              {"score", score.score.str()}});

    if (score.score.is_one()) {
        state_.best = state_.current;
        state_.best_score = score.score;
        emit(trace::EventKind::early_exit, {{"version", std::to_string(state_.i)}});
        return finish_with(Status::done_perfect);
    }
    if (score.score > state_.best_score) {
        state_.best_score = score.score;
        state_.best = state_.current;
        emit(trace::EventKind::snapshot_saved, {{"version", std::to_string(state_.i)}});
    }

    auto bit = oracle::to_opaque(score);
    state_.ctx = policy::append(
        state_.ctx, policy::make_message(policy::Origin::host, policy::MsgKind::oracle_bit,
                                         oracle::serialize(bit)));
    emit(trace::EventKind::bit_appended, {{"bit", oracle::serialize(bit)}});

    state_.suite =
        verifier::generate_suite(*ver_, spec_.instruction, artifacts, &*state_.suite);
    state_.j = state_.suite->version;
    emit(trace::EventKind::suite_escalated,
         {{"suite_version", std::to_string(state_.j)},
          {"assertions", std::to_string(state_.suite->assertions.size())}});
    return true;
}

bool EvolutionEngine::step_no_verifier() {
    if (state_.n >= cfg_.max_oracle_evals) return finish_with(Status::done_budget);

    auto artifacts = do_rollout();
    (void)artifacts;

    if (policy::usage(state_.ctx) > cfg_.beta) {
        std::ostringstream u;
        u << policy::usage(state_.ctx);
        emit(trace::EventKind::context_cap_hit, {{"usage", u.str()}});
        return finish_with(Status::done_context);
    }

    auto score = oracle_.evaluate(state_.current, spec_);
    ++state_.n;
    emit(trace::EventKind::oracle_evaluated, {{"version", std::to_string(state_.i)},
                                              {"score", score.score.str()}});

    if (score.score.is_one()) {
        state_.best = state_.current;
        state_.best_score = score.score;
        emit(trace::EventKind::early_exit, {{"version", std::to_string(state_.i)}});
        return finish_with(Status::done_perfect);
    }
    if (score.score > state_.best_score) {
        state_.best_score = score.score;
        state_.best = state_.current;
        emit(trace::EventKind::snapshot_saved, {{"version", std::to_string(state_.i)}});
    }

    // Refinement sees only the opaque pass/fail signal.
    auto bit = oracle::to_opaque(score);
    state_.ctx = policy::append(
        state_.ctx, policy::make_message(policy::Origin::host, policy::MsgKind::oracle_bit,
                                         oracle::serialize(bit)));
    emit(trace::EventKind::bit_appended, {{"bit", oracle::serialize(bit)}});
    if (state_.n < cfg_.max_oracle_evals) refine_skill();
    return true;
}

bool EvolutionEngine::step_single_shot() {
    oracle::OracleScore score;
    if (cfg_.mode == Mode::no_skill) score = oracle_.evaluate_bare(spec_);
    else score = oracle_.evaluate(state_.current, spec_);
    ++state_.n;
    emit(trace::EventKind::oracle_evaluated, {{"version", std::to_string(state_.i)},
                                              {"score", score.score.str()}});
    state_.best = state_.current;
    state_.best_score = score.score;
    return finish_with(score.score.is_one() ? Status::done_perfect : Status::done_budget);
}

EvolutionOutcome EvolutionEngine::finish() {
    EvolutionOutcome outcome;
    outcome.final = state_.best;
    outcome.final_score = state_.best_score;
    outcome.state = state_;
    outcome.trace = trace_;

    if (!cfg_.log_dir.empty()) {
        fs::create_directories(cfg_.log_dir);
        trace::write_log(trace_, cfg_.log_dir / (spec_.task_id + ".trace"));
        std::ofstream summary(cfg_.log_dir / (spec_.task_id + ".evolution_summary.md"));
        summary << "# Evolution summary: " << spec_.task_id << "\n\n";
        summary << "- status: " << to_string(state_.status) << "\n";
        summary << "- skill versions generated: " << (state_.i + 1) << "\n";
        summary << "- suite escalations: " << state_.j << "\n";
        summary << "- oracle evaluations: " << state_.n << "\n";
        summary << "- refinement rounds: " << state_.r << "\n";
        summary << "- best skill version: " << state_.best.version << "\n";
    }
    return outcome;
}

EvolutionOutcome run_evolution(const sandbox::TaskSpec& spec, const EvolutionConfig& cfg,
                               policy::PolicyHandle gen, policy::PolicyHandle ver,
                               oracle::OracleSession& oracle_session, sandbox::Sandbox& sb,
                               const skills::SkillBundle& meta_skill) {
    EvolutionEngine engine(spec, cfg, std::move(gen), std::move(ver), oracle_session, sb,
                           meta_skill);
    engine.initialize();
    while (engine.step()) {
    }
    return engine.finish();
}

}  // namespace coevo::evolution
