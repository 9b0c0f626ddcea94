#include "coevo/trace.hpp"

#include <fstream>
#include <sstream>

#include "coevo/errors.hpp"

namespace coevo::trace {

const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::skill_generated: return "skill_generated";
        case EventKind::rollout_done: return "rollout_done";
        case EventKind::suite_run: return "suite_run";
        case EventKind::diagnostic_appended: return "diagnostic_appended";
        case EventKind::oracle_evaluated: return "oracle_evaluated";
        case EventKind::bit_appended: return "bit_appended";
        case EventKind::suite_escalated: return "suite_escalated";
        case EventKind::checklist_blocked: return "checklist_blocked";
        case EventKind::context_cap_hit: return "context_cap_hit";
        case EventKind::snapshot_saved: return "snapshot_saved";
        case EventKind::early_exit: return "early_exit";
    }
    return "?";
}

EventKind event_kind_from(const std::string& name) {
    static const std::map<std::string, EventKind> table = {
        {"skill_generated", EventKind::skill_generated},
        {"rollout_done", EventKind::rollout_done},
        {"suite_run", EventKind::suite_run},
        {"diagnostic_appended", EventKind::diagnostic_appended},
        {"oracle_evaluated", EventKind::oracle_evaluated},
        {"bit_appended", EventKind::bit_appended},
        {"suite_escalated", EventKind::suite_escalated},
        {"checklist_blocked", EventKind::checklist_blocked},
        {"context_cap_hit", EventKind::context_cap_hit},
        {"snapshot_saved", EventKind::snapshot_saved},
        {"early_exit", EventKind::early_exit},
    };
    auto it = table.find(name);
    if (it == table.end()) fail("MalformedTrace", "unknown event kind " + name);
    return it->second;
}

namespace {

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case ';': out += "\\;"; break;
            case '=': out += "\\="; break;
            case '\\': out += "\\\\"; break;
            default: out += c;
        }
    }
    return out;
}

std::string unescape(const std::string& s) {
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

// Split on unescaped occurrences of `sep`.
std::vector<std::string> split_unescaped(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            cur += s[i];
            cur += s[i + 1];
            ++i;
        } else if (s[i] == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += s[i];
        }
    }
    parts.push_back(cur);
    return parts;
}

}  // namespace

std::string to_log(const Trajectory& trace, bool unseal) {
    std::string out;
    for (const auto& e : trace) {
        out += std::to_string(e.step);
        out += '\t';
        out += to_string(e.kind);
        out += '\t';
        bool sealed = !unseal && e.kind == EventKind::oracle_evaluated;
        bool first = true;
        if (sealed) {
            out += "sealed=1";
            first = false;
        }
        for (const auto& [k, v] : e.payload) {
            if (sealed && k != "version") continue;
            if (!first) out += ';';
            out += escape(k) + "=" + escape(v);
            first = false;
        }
        out += '\n';
    }
    return out;
}

Trajectory parse_log(const std::string& text) {
    Trajectory trace;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto t1 = line.find('\t');
        auto t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            fail("MalformedTrace", "line " + std::to_string(line_no) + " lacks fields");
        TrajectoryEvent e;
        try {
            e.step = std::stoi(line.substr(0, t1));
        } catch (const std::exception&) {
            fail("MalformedTrace", "line " + std::to_string(line_no) + " has a bad step counter");
        }
        e.kind = event_kind_from(line.substr(t1 + 1, t2 - t1 - 1));
        std::string rest = line.substr(t2 + 1);
        if (!rest.empty()) {
            for (const auto& pair : split_unescaped(rest, ';')) {
                if (pair.empty()) continue;
                auto kv = split_unescaped(pair, '=');
                if (kv.size() != 2)
                    fail("MalformedTrace",
                         "line " + std::to_string(line_no) + " has a bad payload pair: " + pair);
                e.payload[unescape(kv[0])] = unescape(kv[1]);
            }
        }
        trace.push_back(std::move(e));
    }
    return trace;
}

Trajectory load_log(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) fail("MalformedTrace", "cannot open trace " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_log(ss.str());
}

void write_log(const Trajectory& trace, const std::filesystem::path& file, bool unseal) {
    std::ofstream out(file, std::ios::binary);
    out << to_log(trace, unseal);
}

std::string strip_wall_fields(const std::string& log_text) {
    std::istringstream in(log_text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        auto t2 = line.find('\t', line.find('\t') + 1);
        if (t2 == std::string::npos) {
            out << line << '\n';
            continue;
        }
        std::string head = line.substr(0, t2 + 1);
        std::string rest = line.substr(t2 + 1);
        std::string kept;
        for (const auto& pair : split_unescaped(rest, ';')) {
            if (pair.rfind("wall_s=", 0) == 0 || pair.rfind("elapsed_s=", 0) == 0) continue;
            if (!kept.empty()) kept += ';';
            kept += pair;
        }
        out << head << kept << '\n';
    }
    return out.str();
}

}  // namespace coevo::trace
