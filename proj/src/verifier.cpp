#include "coevo/verifier.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "coevo/errors.hpp"
#include "coevo/seal.hpp"
#include "coevo/subprocess.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace coevo::verifier {

AssertionKind assertion_kind_from(const std::string& name) {
    if (name == "file_exists") return AssertionKind::file_exists;
    if (name == "content_equals") return AssertionKind::content_equals;
    if (name == "content_matches") return AssertionKind::content_matches;
    if (name == "numeric_within") return AssertionKind::numeric_within;
    if (name == "command_succeeds") return AssertionKind::command_succeeds;
    fail("MalformedSuite", "unknown assertion kind " + name);
}

const char* to_string(AssertionKind k) {
    switch (k) {
        case AssertionKind::file_exists: return "file_exists";
        case AssertionKind::content_equals: return "content_equals";
        case AssertionKind::content_matches: return "content_matches";
        case AssertionKind::numeric_within: return "numeric_within";
        case AssertionKind::command_succeeds: return "command_succeeds";
    }
    return "?";
}

Rational surrogate_reward(const SuiteResult& result) {
    if (result.total < 1) fail("EmptySuite", "suite result has no assertions");
    return Rational(result.passed_count, result.total);
}

namespace {

std::string escape_field(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '\t') out += "\\t";
        else if (c == '\n') out += "\\n";
        else if (c == '\\') out += "\\\\";
        else out += c;
    }
    return out;
}

std::string unescape_field(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            char n = s[++i];
            if (n == 't') out += '\t';
            else if (n == 'n') out += '\n';
            else out += n;
        } else {
            out += s[i];
        }
    }
    return out;
}

// Content lookup: collected artifacts first, workdir second.
std::optional<std::string> target_content(const std::string& target,
                                          const sandbox::RolloutArtifacts& artifacts,
                                          const fs::path& workdir) {
    auto it = artifacts.outputs.find(target);
    if (it != artifacts.outputs.end()) return it->second;
    fs::path p = workdir / target;
    if (fs::is_regular_file(p)) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    return std::nullopt;
}

std::optional<double> first_number(const std::string& text) {
    static const std::regex num_re(R"([-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)");
    std::smatch m;
    if (std::regex_search(text, m, num_re)) return std::stod(m.str());
    return std::nullopt;
}

AssertionResult evaluate(const Assertion& a, const sandbox::RolloutArtifacts& artifacts,
                         const fs::path& workdir) {
    AssertionResult res{a.id, false, ""};
    switch (a.kind) {
        case AssertionKind::file_exists: {
            if (target_content(a.target, artifacts, workdir)) res.passed = true;
            else res.detail = "file " + a.target + " not found";
            break;
        }
        case AssertionKind::content_equals: {
            auto content = target_content(a.target, artifacts, workdir);
            if (!content) {
                res.detail = "file " + a.target + " not found";
            } else if (*content == a.expectation) {
                res.passed = true;
            } else {
                res.detail = "content of " + a.target + " differs (got " +
                             content->substr(0, 64) + ")";
            }
            break;
        }
        case AssertionKind::content_matches: {
            auto content = target_content(a.target, artifacts, workdir);
            if (!content) {
                res.detail = "file " + a.target + " not found";
            } else if (std::regex_search(*content, std::regex(a.expectation))) {
                res.passed = true;
            } else {
                res.detail = "content of " + a.target + " does not match /" + a.expectation + "/";
            }
            break;
        }
        case AssertionKind::numeric_within: {
            auto comma = a.expectation.find(',');
            if (comma == std::string::npos)
                fail("MalformedSuite", "numeric_within expectation needs value,tolerance");
            const double expected = std::stod(a.expectation.substr(0, comma));
            const double tol = std::stod(a.expectation.substr(comma + 1));
            auto content = target_content(a.target, artifacts, workdir);
            if (!content) {
                res.detail = "file " + a.target + " not found";
                break;
            }
            auto value = first_number(*content);
            if (!value) {
                res.detail = "no numeric value in " + a.target;
            } else if (std::fabs(*value - expected) <= tol) {
                res.passed = true;
            } else {
                std::ostringstream ss;
                ss.precision(12);
                ss << "value " << *value << " differs from " << expected << " by more than " << tol;
                res.detail = ss.str();
            }
            break;
        }
        case AssertionKind::command_succeeds: {
            int expected_status = a.expectation.empty() ? 0 : std::stoi(a.expectation);
            auto cmd = subprocess::run_command(workdir, a.target, 30.0);
            if (cmd.exit_status == expected_status) {
                res.passed = true;
            } else {
                res.detail = "exit status " + std::to_string(cmd.exit_status) + " (expected " +
                             std::to_string(expected_status) + "): " + cmd.output.substr(0, 256);
            }
            break;
        }
    }
    return res;
}

}  // namespace

SuiteResult run_suite(const TestSuite& suite, const sandbox::RolloutArtifacts& artifacts,
                      const fs::path& workdir) {
    if (suite.assertions.empty()) fail("EmptySuite", "suite has no assertions");
    SuiteResult result;
    result.suite_version = suite.version;
    for (const auto& a : suite.assertions) {
        AssertionResult r;
        try {
            r = evaluate(a, artifacts, workdir);
        } catch (const std::exception& e) {
            // An assertion's own crash counts as a failure, never aborts the suite.
            r = AssertionResult{a.id, false, std::string("assertion runtime fault: ") + e.what()};
        }
        result.per_assertion.push_back(std::move(r));
    }
    result.total = static_cast<int>(result.per_assertion.size());
    for (const auto& r : result.per_assertion)
        if (r.passed) ++result.passed_count;
    return result;
}

TestSuite parse_suite(const std::string& source, int version, Provenance provenance) {
    TestSuite suite;
    suite.version = version;
    suite.provenance = provenance;
    suite.source = source;
    std::istringstream in(source);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        for (int f = 0; f < 3; ++f) {
            auto tab = line.find('\t', pos);
            if (tab == std::string::npos) fail("MalformedSuite", "expected 4 fields: " + line);
            fields.push_back(line.substr(pos, tab - pos));
            pos = tab + 1;
        }
        fields.push_back(line.substr(pos));
        Assertion a;
        a.id = fields[0];
        a.kind = assertion_kind_from(fields[1]);
        a.target = unescape_field(fields[2]);
        a.expectation = unescape_field(fields[3]);
        if (a.id.empty()) fail("MalformedSuite", "assertion without id: " + line);
        suite.assertions.push_back(std::move(a));
    }
    if (suite.assertions.empty()) fail("MalformedSuite", "suite source has no assertions");
    return suite;
}

std::string suite_to_manifest(const TestSuite& suite) {
    std::string out;
    for (const auto& a : suite.assertions)
        out += a.id + "\t" + to_string(a.kind) + "\t" + escape_field(a.target) + "\t" +
               escape_field(a.expectation) + "\n";
    return out;
}

namespace {

// A verifier request carries exactly the restricted inputs and nothing else.
std::string verifier_payload(const std::string& instruction,
                             const sandbox::RolloutArtifacts& artifacts, const TestSuite* prev,
                             const SuiteResult* result) {
    json j;
    j["instruction"] = instruction;
    json outputs = json::object();
    for (const auto& [p, c] : artifacts.outputs) outputs[p] = c;
    j["outputs"] = outputs;
    if (prev) j["prev_suite"] = prev->source;
    if (result) {
        json per = json::array();
        for (const auto& r : result->per_assertion)
            per.push_back({{"id", r.id}, {"passed", r.passed}, {"detail", r.detail}});
        j["suite_results"] = per;
    }
    return j.dump();
}

}  // namespace

std::string isolation_guard(policy::Role role, const std::string& payload_json) {
    json j;
    try {
        j = json::parse(payload_json);
    } catch (const json::exception&) {
        fail("IsolationViolation", "payload is not structured JSON");
    }
    if (!j.is_object()) fail("IsolationViolation", "payload is not an object");

    if (role == policy::Role::verifier) {
        static const std::set<std::string> allowed = {"instruction", "outputs", "prev_suite",
                                                      "suite_results"};
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!allowed.count(it.key()))
                fail("IsolationViolation",
                     "field '" + it.key() + "' is not visible to the verifier");
        if (seal::contains_sealed(payload_json))
            fail("IsolationViolation", "oracle content in verifier payload");
        return payload_json;
    }

    // Generator payload: a message view. Only the sanctioned message kinds may
    // appear, oracle feedback is exactly one bit, and no sealed content leaks.
    if (!j.contains("messages"))
        fail("IsolationViolation", "generator payload lacks a message view");
    static const std::set<std::string> allowed_kinds = {
        "instruction", "meta_skill", "observation", "diagnostic", "oracle_bit", "policy_output"};
    for (const json& m : j.at("messages")) {
        std::string kind = m.value("kind", "");
        if (!allowed_kinds.count(kind))
            fail("IsolationViolation", "field '" + kind + "' is not visible to the generator");
        std::string body = m.value("body", "");
        if (kind == "oracle_bit" && body != "0" && body != "1")
            fail("IsolationViolation", "oracle_bit body must be exactly one bit");
        if (seal::contains_sealed(body))
            fail("IsolationViolation", "oracle suite content in generator message");
    }
    return payload_json;
}

namespace {

policy::PolicyResponse restricted_request(policy::Policy& ver, const std::string& payload) {
    isolation_guard(policy::Role::verifier, payload);
    std::vector<policy::Message> view{
        policy::make_message(policy::Origin::host, policy::MsgKind::instruction, payload)};
    return ver.request(view);
}

}  // namespace

TestSuite generate_suite(policy::Policy& ver, const std::string& instruction,
                         const sandbox::RolloutArtifacts& artifacts, const TestSuite* prev) {
    if (ver.role() != policy::Role::verifier)
        fail("WrongRole", "generate_suite needs a verifier-role handle");
    auto resp = restricted_request(ver, verifier_payload(instruction, artifacts, prev, nullptr));
    if (resp.kind != policy::ResponseKind::suite_script)
        fail("MalformedSuite", "verifier response is not a suite script");
    const int version = prev ? prev->version + 1 : 0;
    const Provenance prov = ver.backend() == "scripted" ? Provenance::scripted
                            : prev                      ? Provenance::escalated
                                                        : Provenance::initial;
    return parse_suite(resp.suite_source, version, prov);
}

Diagnostic build_diagnostic(policy::Policy& ver, const std::string& instruction,
                            const sandbox::RolloutArtifacts& artifacts,
                            const SuiteResult& result) {
    if (surrogate_reward(result).is_one())
        fail("ContractViolation", "build_diagnostic requires a failing result");
    Diagnostic d;
    d.produced_by = ver.session_id();
    for (const auto& r : result.per_assertion)
        if (!r.passed) d.failed.emplace_back(r.id, r.detail);

    auto fallback = [&] {
        d.root_cause = std::to_string(d.failed.size()) + " of " + std::to_string(result.total) +
                       " assertions failed";
        for (const auto& [id, detail] : d.failed)
            d.suggestions.push_back("fix assertion " + id + ": " + detail);
    };

    // Scripted backends get the templated diagnostic; their scripts carry
    // only suite steps.
    if (ver.backend() == "scripted") {
        fallback();
        return d;
    }

    try {
        auto resp =
            restricted_request(ver, verifier_payload(instruction, artifacts, nullptr, &result));
        if (resp.kind == policy::ResponseKind::diagnostic_text ||
            resp.kind == policy::ResponseKind::suite_script) {
            d.root_cause = resp.diagnostic;
        }
        if (d.root_cause.empty()) fallback();
        else {
            for (const auto& [id, detail] : d.failed)
                d.suggestions.push_back("address failed assertion " + id);
        }
    } catch (const Error& e) {
        if (e.code() == "IsolationViolation") throw;
        fallback();  // degraded but never empty
    }
    return d;
}

std::string render_diagnostic(const Diagnostic& d) {
    std::string out = "Verifier diagnostic — root cause: " + d.root_cause + "\nFailed assertions:\n";
    for (const auto& [id, detail] : d.failed) out += "  - " + id + ": " + detail + "\n";
    if (!d.suggestions.empty()) {
        out += "Suggestions:\n";
        for (const auto& s : d.suggestions) out += "  * " + s + "\n";
    }
    return out;
}

}  // namespace coevo::verifier
