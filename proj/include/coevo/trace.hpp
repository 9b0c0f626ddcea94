#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace coevo::trace {

enum class EventKind {
    skill_generated,
    rollout_done,
    suite_run,
    diagnostic_appended,
    oracle_evaluated,
    bit_appended,
    suite_escalated,
    checklist_blocked,
    context_cap_hit,
    snapshot_saved,
    early_exit,
};

const char* to_string(EventKind k);
EventKind event_kind_from(const std::string& name);

struct TrajectoryEvent {
    int step = 0;  // monotone logical counter
    EventKind kind;
    std::map<std::string, std::string> payload;
};

using Trajectory = std::vector<TrajectoryEvent>;

// Line-delimited records: step<TAB>kind<TAB>k=v;k=v. Oracle payload fields
// are replaced by `sealed=1` at default verbosity.
std::string to_log(const Trajectory& trace, bool unseal = false);
Trajectory parse_log(const std::string& text);
Trajectory load_log(const std::filesystem::path& file);
void write_log(const Trajectory& trace, const std::filesystem::path& file, bool unseal = false);

// Drops wall-clock payload fields; everything left must replay byte-identically.
std::string strip_wall_fields(const std::string& log_text);

}  // namespace coevo::trace
