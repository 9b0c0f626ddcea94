#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coevo/skills.hpp"

namespace coevo::policy {

enum class Role { generator, verifier };
enum class Origin { system, host, policy };
enum class MsgKind { instruction, meta_skill, observation, diagnostic, oracle_bit, policy_output };

const char* to_string(Role r);
const char* to_string(Origin o);
const char* to_string(MsgKind k);

struct Message {
    Origin origin;
    MsgKind kind;
    std::string body;
    std::size_t byte_len = 0;  // encoded length of body
};

Message make_message(Origin origin, MsgKind kind, std::string body);

// Append-only message log of the generator session. Values are immutable;
// append derives a new value.
struct ConversationContext {
    std::vector<Message> messages;
    std::size_t window_bytes = 1;
};

ConversationContext init_context(const std::string& instruction,
                                 const skills::SkillBundle& meta_skill,
                                 std::size_t window_bytes);
ConversationContext append(ConversationContext ctx, Message msg);
double usage(const ConversationContext& ctx);

struct Command {
    std::string keystrokes;
    double duration = 1.0;  // seconds to wait
};

struct SkillEdit {
    std::optional<std::string> new_doc;
    // content absent means delete
    std::map<std::string, std::optional<std::string>> edits;
};

enum class ResponseKind { commands, skill_edit, suite_script, diagnostic_text, complete };

struct PolicyResponse {
    ResponseKind kind = ResponseKind::complete;
    std::vector<Command> commands;
    bool task_complete = false;
    std::optional<std::string> load_skill;
    SkillEdit edit;
    std::string suite_source;     // suite_script payload
    std::string diagnostic;       // diagnostic_text payload
    std::string raw;              // original text, preserved for logging
};

// Parses the JSON-in-text response convention. Generator responses use the
// fields analysis/plan/commands/task_complete/load_skill or skill_edit;
// verifier responses use suite/diagnostic. Throws MalformedResponse.
PolicyResponse parse_response(const std::string& raw);

// One LLM session behind a pluggable backend. A handle serves one request
// at a time; every request payload it has seen is retained for audit.
class Policy {
public:
    Policy(Role role, std::string backend);
    virtual ~Policy() = default;

    Role role() const { return role_; }
    const std::string& backend() const { return backend_; }
    const std::string& session_id() const { return session_id_; }

    // Serializes the context view, forwards it to the backend, parses the
    // completion. One automatic re-request with a format reminder on
    // MalformedResponse, then the error propagates.
    PolicyResponse request(const std::vector<Message>& ctx_view);

    // Raw payload forwarded on each request, in order. Audit surface for
    // the isolation canary checks.
    const std::vector<std::string>& request_log() const { return request_log_; }

    // A fresh session with the same behavior (scripted cursor rewound).
    virtual std::shared_ptr<Policy> fresh_session() const = 0;

protected:
    virtual std::string complete(const std::string& payload) = 0;

private:
    Role role_;
    std::string backend_;
    std::string session_id_;
    std::vector<std::string> request_log_;
};

using PolicyHandle = std::shared_ptr<Policy>;

std::string serialize_view(const std::vector<Message>& view);

PolicyHandle make_scripted(std::vector<std::string> raw_steps, Role role);
PolicyHandle make_scripted(const std::vector<PolicyResponse>& steps, Role role);

// Directory of numbered step files, each holding one raw response text.
PolicyHandle load_scripted_dir(const std::filesystem::path& dir, Role role);

// Chat-style HTTP adapter. `auth_env` names the environment variable that
// holds the secret; the value itself is never logged.
PolicyHandle make_remote(const std::string& endpoint, Role role, const std::string& auth_env);

}  // namespace coevo::policy
