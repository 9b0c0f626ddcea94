#include "coevo/policy.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coevo/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace coevo::policy {

const char* to_string(Role r) { return r == Role::generator ? "generator" : "verifier"; }

const char* to_string(Origin o) {
    switch (o) {
        case Origin::system: return "system";
        case Origin::host: return "host";
        case Origin::policy: return "policy";
    }
    return "?";
}

const char* to_string(MsgKind k) {
    switch (k) {
        case MsgKind::instruction: return "instruction";
        case MsgKind::meta_skill: return "meta_skill";
        case MsgKind::observation: return "observation";
        case MsgKind::diagnostic: return "diagnostic";
        case MsgKind::oracle_bit: return "oracle_bit";
        case MsgKind::policy_output: return "policy_output";
    }
    return "?";
}

Message make_message(Origin origin, MsgKind kind, std::string body) {
    Message m{origin, kind, std::move(body), 0};
    m.byte_len = m.body.size();
    return m;
}

ConversationContext init_context(const std::string& instruction,
                                 const skills::SkillBundle& meta_skill,
                                 std::size_t window_bytes) {
    if (instruction.empty()) fail("EmptyInstruction", "instruction must be non-empty");
    ConversationContext ctx;
    ctx.window_bytes = window_bytes;
    ctx.messages.push_back(make_message(Origin::host, MsgKind::instruction, instruction));
    ctx.messages.push_back(make_message(Origin::host, MsgKind::meta_skill,
                                        skills::strip_frontmatter(meta_skill.root_doc)));
    return ctx;
}

ConversationContext append(ConversationContext ctx, Message msg) {
    ctx.messages.push_back(std::move(msg));
    return ctx;
}

double usage(const ConversationContext& ctx) {
    std::size_t total = 0;
    for (const auto& m : ctx.messages) total += m.byte_len;
    return static_cast<double>(total) / static_cast<double>(ctx.window_bytes);
}

PolicyResponse parse_response(const std::string& raw) {
    json j;
    try {
        j = json::parse(raw);
    } catch (const json::exception& e) {
        fail("MalformedResponse", std::string("response is not valid JSON (") + e.what() +
                                      "); raw: " + raw.substr(0, 256));
    }
    if (!j.is_object()) fail("MalformedResponse", "response is not a JSON object");

    PolicyResponse r;
    r.raw = raw;
    try {
        if (j.contains("suite")) {
            r.kind = ResponseKind::suite_script;
            r.suite_source = j.at("suite").get<std::string>();
            if (j.contains("diagnostic")) r.diagnostic = j.at("diagnostic").get<std::string>();
            return r;
        }
        if (j.contains("diagnostic")) {
            r.kind = ResponseKind::diagnostic_text;
            r.diagnostic = j.at("diagnostic").get<std::string>();
            return r;
        }
        if (j.contains("skill_edit")) {
            r.kind = ResponseKind::skill_edit;
            const json& e = j.at("skill_edit");
            if (e.contains("doc")) r.edit.new_doc = e.at("doc").get<std::string>();
            if (e.contains("edits")) {
                for (auto it = e.at("edits").begin(); it != e.at("edits").end(); ++it) {
                    if (it.value().is_null()) r.edit.edits[it.key()] = std::nullopt;
                    else r.edit.edits[it.key()] = it.value().get<std::string>();
                }
            }
            return r;
        }
        if (j.contains("commands")) {
            r.kind = ResponseKind::commands;
            for (const json& c : j.at("commands")) {
                Command cmd;
                cmd.keystrokes = c.at("keystrokes").get<std::string>();
                cmd.duration = c.value("duration", 1.0);
                r.commands.push_back(std::move(cmd));
            }
            r.task_complete = j.value("task_complete", false);
            if (j.contains("load_skill")) r.load_skill = j.at("load_skill").get<std::string>();
            return r;
        }
        if (j.value("task_complete", false)) {
            r.kind = ResponseKind::complete;
            r.task_complete = true;
            return r;
        }
    } catch (const json::exception& e) {
        fail("MalformedResponse",
             std::string("response fails the schema (") + e.what() + "); raw: " + raw.substr(0, 256));
    }
    fail("MalformedResponse", "response carries none of the schema fields; raw: " + raw.substr(0, 256));
}

std::string serialize_view(const std::vector<Message>& view) {
    json msgs = json::array();
    for (const auto& m : view)
        msgs.push_back({{"origin", to_string(m.origin)}, {"kind", to_string(m.kind)}, {"body", m.body}});
    return json{{"messages", msgs}}.dump();
}

namespace {

std::string next_session_id(Role role) {
    static std::atomic<std::uint64_t> counter{0};
    return std::string(to_string(role)) + "-" + std::to_string(++counter);
}

constexpr const char* kFormatReminder =
    "Your previous response did not match the required JSON schema. "
    "Reply with a single JSON object using the documented fields.";

}  // namespace

Policy::Policy(Role role, std::string backend)
    : role_(role), backend_(std::move(backend)), session_id_(next_session_id(role)) {}

PolicyResponse Policy::request(const std::vector<Message>& ctx_view) {
    std::string payload = serialize_view(ctx_view);
    request_log_.push_back(payload);
    std::string raw = complete(payload);
    try {
        return parse_response(raw);
    } catch (const Error& e) {
        if (e.code() != "MalformedResponse") throw;
        // One retry with a format reminder appended, then hard error.
        auto view = ctx_view;
        view.push_back(make_message(Origin::host, MsgKind::observation, kFormatReminder));
        payload = serialize_view(view);
        request_log_.push_back(payload);
        raw = complete(payload);
        return parse_response(raw);
    }
}

namespace {

class ScriptedPolicy final : public Policy {
public:
    ScriptedPolicy(std::vector<std::string> steps, Role role)
        : Policy(role, "scripted"), steps_(std::move(steps)) {
        if (steps_.empty()) fail("EmptyScript", "scripted policy needs at least one step");
    }

    std::shared_ptr<Policy> fresh_session() const override {
        return std::make_shared<ScriptedPolicy>(steps_, role());
    }

protected:
    std::string complete(const std::string&) override {
        if (cursor_ >= steps_.size())
            fail("ScriptExhausted", "scripted policy has no step " + std::to_string(cursor_));
        return steps_[cursor_++];
    }

private:
    std::vector<std::string> steps_;
    std::size_t cursor_ = 0;
};

class RemotePolicy final : public Policy {
public:
    RemotePolicy(std::string endpoint, Role role, std::string auth_env)
        : Policy(role, "remote"), endpoint_(std::move(endpoint)), auth_env_(std::move(auth_env)) {
        if (endpoint_.rfind("http://", 0) != 0 && endpoint_.rfind("https://", 0) != 0)
            fail("BadEndpoint", "endpoint must be an http(s) URL");
    }

    std::shared_ptr<Policy> fresh_session() const override {
        return std::make_shared<RemotePolicy>(endpoint_, role(), auth_env_);
    }

protected:
    std::string complete(const std::string& payload) override;

private:
    std::string endpoint_;
    std::string auth_env_;
};

}  // namespace

PolicyHandle make_scripted(std::vector<std::string> raw_steps, Role role) {
    return std::make_shared<ScriptedPolicy>(std::move(raw_steps), role);
}

PolicyHandle make_scripted(const std::vector<PolicyResponse>& steps, Role role) {
    std::vector<std::string> raws;
    raws.reserve(steps.size());
    for (const auto& s : steps) raws.push_back(s.raw);
    return std::make_shared<ScriptedPolicy>(std::move(raws), role);
}

PolicyHandle load_scripted_dir(const fs::path& dir, Role role) {
    if (!fs::is_directory(dir)) fail("ScriptDirMissing", "no scripted-policy directory " + dir.string());
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    std::vector<std::string> steps;
    for (const auto& p : entries) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        steps.push_back(ss.str());
    }
    return make_scripted(std::move(steps), role);
}

PolicyHandle make_remote(const std::string& endpoint, Role role, const std::string& auth_env) {
    return std::make_shared<RemotePolicy>(endpoint, role, auth_env);
}

}  // namespace coevo::policy

// Defined out of line to keep httplib out of every translation unit.
#include <httplib.h>

namespace coevo::policy {
namespace {

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

std::string RemotePolicy::complete(const std::string& payload) {
    auto [host, path] = split_endpoint(endpoint_);
    httplib::Client client(host);
    client.set_connection_timeout(10);
    client.set_read_timeout(120);
    httplib::Headers headers;
    if (!auth_env_.empty()) {
        const char* secret = std::getenv(auth_env_.c_str());
        if (!secret) fail("AuthFailure", "environment variable " + auth_env_ + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + secret);
    }
    json body = json::parse(payload);
    body["role"] = to_string(role());
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) fail("BackendUnavailable", "no response from " + endpoint_);
    if (res->status == 401 || res->status == 403)
        fail("AuthFailure", "endpoint rejected credentials (" + std::to_string(res->status) + ")");
    if (res->status != 200)
        fail("BackendUnavailable", "endpoint returned status " + std::to_string(res->status));
    // Response body must contain a single text completion.
    try {
        json j = json::parse(res->body);
        if (j.is_object() && j.contains("completion")) return j.at("completion").get<std::string>();
    } catch (const json::exception&) {
        // fall through: treat the body as the completion text itself
    }
    return res->body;
}

}  // namespace coevo::policy
