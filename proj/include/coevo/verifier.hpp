#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "coevo/policy.hpp"
#include "coevo/rational.hpp"
#include "coevo/sandbox.hpp"

namespace coevo::verifier {

enum class AssertionKind { file_exists, content_equals, content_matches, numeric_within, command_succeeds };

AssertionKind assertion_kind_from(const std::string& name);
const char* to_string(AssertionKind k);

// One deterministic check against rollout artifacts. Evaluation never
// touches the network and uses no randomness.
struct Assertion {
    std::string id;
    AssertionKind kind;
    std::string target;       // path, or the command for command_succeeds
    std::string expectation;  // exact bytes | regex | "value,tolerance" | exit status
};

enum class Provenance { initial, escalated, scripted };

struct TestSuite {
    int version = 0;
    std::vector<Assertion> assertions;  // never empty
    Provenance provenance = Provenance::initial;
    std::string source;  // manifest text the suite parsed from
};

struct AssertionResult {
    std::string id;
    bool passed = false;
    std::string detail;
};

struct SuiteResult {
    int suite_version = 0;
    std::vector<AssertionResult> per_assertion;
    int passed_count = 0;
    int total = 0;
};

// Structured failure feedback for the generator.
struct Diagnostic {
    std::vector<std::pair<std::string, std::string>> failed;  // (assertion_id, detail)
    std::string root_cause;
    std::vector<std::string> suggestions;
    std::string produced_by;  // session id
};

// Eq-style pass fraction as an exact rational. Throws EmptySuite on total=0.
Rational surrogate_reward(const SuiteResult& result);

SuiteResult run_suite(const TestSuite& suite, const sandbox::RolloutArtifacts& artifacts,
                      const std::filesystem::path& workdir);

// Line-oriented manifest: id<TAB>kind<TAB>target<TAB>expectation
TestSuite parse_suite(const std::string& source, int version, Provenance provenance);
std::string suite_to_manifest(const TestSuite& suite);

// Asks the verifier policy for a (new or escalated) suite. Inputs are
// restricted to exactly (instruction, artifacts, prev) via isolation_guard.
TestSuite generate_suite(policy::Policy& ver, const std::string& instruction,
                         const sandbox::RolloutArtifacts& artifacts, const TestSuite* prev);

// Diagnostic for a failing result. A backend failure degrades to a template
// diagnostic assembled from per-assertion details, never an empty one.
Diagnostic build_diagnostic(policy::Policy& ver, const std::string& instruction,
                            const sandbox::RolloutArtifacts& artifacts, const SuiteResult& result);

std::string render_diagnostic(const Diagnostic& d);

// Validates a request payload against the information-isolation contract for
// the given role; returns it unchanged or throws IsolationViolation naming
// the offending field. Violations are bugs: callers must not catch them.
std::string isolation_guard(policy::Role role, const std::string& payload_json);

}  // namespace coevo::verifier
