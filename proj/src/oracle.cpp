#include "coevo/oracle.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "coevo/errors.hpp"
#include "coevo/seal.hpp"

namespace fs = std::filesystem;

namespace coevo::oracle {
namespace {

// Sealed storage. File-local so no other translation unit can reach the
// assertion content; the registry key is the only thing that circulates.
std::mutex g_mutex;
std::map<std::string, std::vector<verifier::Assertion>>& storage() {
    static std::map<std::string, std::vector<verifier::Assertion>> s;
    return s;
}

std::string next_suite_id() {
    static std::atomic<std::uint64_t> counter{0};
    return "sealed-" + std::to_string(++counter);
}

std::vector<verifier::Assertion> sealed_copy(const HiddenSuiteRef& ref) {
    std::lock_guard lock(g_mutex);
    auto it = storage().find(ref.suite_id);
    if (it == storage().end()) fail("UnknownSuite", "no sealed suite " + ref.suite_id);
    return it->second;
}

}  // namespace

std::string serialize(const OpaqueBit& bit) { return bit.failed ? "1" : "0"; }

OpaqueBit to_opaque(const OracleScore& score) { return OpaqueBit{!score.score.is_one()}; }

HiddenSuiteRef seal_suite(const std::vector<verifier::Assertion>& assertions) {
    if (assertions.empty()) fail("EmptySuite", "cannot seal an empty suite");
    HiddenSuiteRef ref{next_suite_id()};
    // Expectations and command texts are oracle secrets. Plain file paths are
    // not: the task instruction legitimately names the very output files the
    // hidden suite checks, so sealing them would flag honest generator work.
    for (const auto& a : assertions) {
        if (a.kind == verifier::AssertionKind::command_succeeds)
            seal::register_sealed_text(a.target);
        seal::register_sealed_text(a.expectation);
    }
    std::lock_guard lock(g_mutex);
    storage()[ref.suite_id] = assertions;
    return ref;
}

HiddenSuiteRef seal_suite_manifest(const std::string& manifest_text) {
    auto suite = verifier::parse_suite(manifest_text, 0, verifier::Provenance::scripted);
    return seal_suite(suite.assertions);
}

HiddenSuiteRef seal_suite_file(const fs::path& manifest_file) {
    std::ifstream in(manifest_file, std::ios::binary);
    if (!in) fail("UnknownSuite", "no suite manifest at " + manifest_file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return seal_suite_manifest(ss.str());
}

OracleScore evaluate_artifacts(const HiddenSuiteRef& ref,
                               const sandbox::RolloutArtifacts& artifacts,
                               const fs::path& workdir, int evaluated_version) {
    verifier::TestSuite suite;
    suite.version = 0;
    suite.assertions = sealed_copy(ref);
    auto result = verifier::run_suite(suite, artifacts, workdir);
    OracleScore score;
    score.passed_count = result.passed_count;
    score.total = result.total;
    score.score = Rational(result.passed_count, result.total);
    score.evaluated_version = evaluated_version;
    return score;
}

std::string unseal_for_report(const HiddenSuiteRef& ref) {
    verifier::TestSuite suite;
    suite.assertions = sealed_copy(ref);
    return verifier::suite_to_manifest(suite);
}

OracleSession::OracleSession(HiddenSuiteRef ref, int budget, policy::PolicyHandle target,
                             sandbox::Sandbox& sandbox)
    : ref_(std::move(ref)), budget_(budget), target_(std::move(target)), sandbox_(sandbox) {
    if (budget_ < 1) fail("BadBudget", "oracle budget must be at least 1");
}

OracleScore OracleSession::run_and_grade(const skills::SkillBundle* bundle,
                                         const sandbox::TaskSpec& spec, int version) {
    if (used_ >= budget_)
        fail("BudgetExhausted", "oracle budget of " + std::to_string(budget_) + " used up");
    ++used_;
    auto env = sandbox_.clone_fresh(spec);
    if (bundle) sandbox_.install_skill(env, *bundle);
    auto fresh_target = target_->fresh_session();
    auto artifacts = sandbox_.rollout(env, *fresh_target, spec, 1.0);
    auto score = evaluate_artifacts(ref_, artifacts, env.workdir, version);
    score.fresh_env_id = env.env_id;
    return score;
}

OracleScore OracleSession::evaluate(const skills::SkillBundle& bundle,
                                    const sandbox::TaskSpec& spec) {
    return run_and_grade(&bundle, spec, bundle.version);
}

OracleScore OracleSession::evaluate_bare(const sandbox::TaskSpec& spec) {
    return run_and_grade(nullptr, spec, -1);
}

}  // namespace coevo::oracle
