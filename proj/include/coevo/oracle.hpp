#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "coevo/policy.hpp"
#include "coevo/rational.hpp"
#include "coevo/sandbox.hpp"
#include "coevo/skills.hpp"
#include "coevo/verifier.hpp"

namespace coevo::oracle {

// Opaque handle to a sealed hidden suite. No public accessor reads the
// assertion content back; the only read path is inside evaluation.
struct HiddenSuiteRef {
    std::string suite_id;
};

struct OracleScore {
    Rational score;  // passed_count / total
    int passed_count = 0;
    int total = 0;
    int evaluated_version = 0;
    std::string fresh_env_id;
};

// Serializes to exactly one character: "1" when the hidden suite failed.
struct OpaqueBit {
    bool failed = false;
};

std::string serialize(const OpaqueBit& bit);

OpaqueBit to_opaque(const OracleScore& score);

HiddenSuiteRef seal_suite(const std::vector<verifier::Assertion>& assertions);
HiddenSuiteRef seal_suite_manifest(const std::string& manifest_text);
HiddenSuiteRef seal_suite_file(const std::filesystem::path& manifest_file);

// Grades already-collected artifacts against the sealed suite. Used by the
// benchmark layer, which performs its own fresh rollout.
OracleScore evaluate_artifacts(const HiddenSuiteRef& ref,
                               const sandbox::RolloutArtifacts& artifacts,
                               const std::filesystem::path& workdir, int evaluated_version);

// Post-hoc operator access (report --unseal). Never reachable from policy-
// facing code paths.
std::string unseal_for_report(const HiddenSuiteRef& ref);

// One task run's oracle boundary: the sealed suite, the evaluation budget,
// and the target policy used for independent fresh-environment re-execution.
class OracleSession {
public:
    OracleSession(HiddenSuiteRef ref, int budget, policy::PolicyHandle target,
                  sandbox::Sandbox& sandbox);

    // Clones a fresh environment, installs the bundle, rolls out the target
    // policy, and grades the outputs inside the sealed boundary.
    OracleScore evaluate(const skills::SkillBundle& bundle, const sandbox::TaskSpec& spec);

    // Grades a bare (no-bundle) rollout; same budget accounting.
    OracleScore evaluate_bare(const sandbox::TaskSpec& spec);

    int used() const { return used_; }
    int budget() const { return budget_; }
    const HiddenSuiteRef& ref() const { return ref_; }

private:
    OracleScore run_and_grade(const skills::SkillBundle* bundle, const sandbox::TaskSpec& spec,
                              int version);

    HiddenSuiteRef ref_;
    int budget_;
    int used_ = 0;
    policy::PolicyHandle target_;
    sandbox::Sandbox& sandbox_;
};

}  // namespace coevo::oracle
