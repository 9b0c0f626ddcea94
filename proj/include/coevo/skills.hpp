#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace coevo::skills {

// YAML-style frontmatter reduced to a flat key:value block delimited by
// `---` lines; nested structures are rejected.
struct SkillManifest {
    std::string name;         // lowercase, digits, hyphens
    std::string description;  // non-empty free text
    std::map<std::string, std::string> extra;  // unknown keys, preserved
};

// Immutable multi-file skill package. `root_doc` plays the SKILL.md role
// and begins with the frontmatter that parses to `manifest`.
struct SkillBundle {
    SkillManifest manifest;
    std::string root_doc;
    std::map<std::string, std::string> files;  // bundle-relative path -> bytes
    int version = 0;
    std::optional<int> parent_version;
};

struct Finding {
    std::string rule;
    std::string severity;  // "error" | "warning"
    std::string path;
    std::string message;
};

struct ValidationReport {
    std::vector<Finding> findings;
    bool passed = true;  // true iff no error-severity finding
};

struct ChangeSet {
    std::set<std::string> added;
    std::set<std::string> removed;
    std::set<std::string> modified;
    bool doc_changed = false;
};

struct ValidationOptions {
    // SELF_CONTAINED fires on any mention of these path prefixes.
    std::vector<std::string> forbidden_prefixes = {"/app/environment/doc"};
};

inline const std::set<std::string> kAllRules = {
    "SELF_CONTAINED", "HYPHEN_IMPORT", "FRONTMATTER", "DECLARED_SCRIPTS"};

constexpr std::size_t kMaxBundleBytes = 16u * 1024u * 1024u;

constexpr const char* kRootDocName = "SKILL.md";
constexpr const char* kSidecarName = ".skillmeta";

SkillManifest parse_manifest(const std::string& text);

// Body of a frontmatter-bearing document (text after the closing `---`).
std::string strip_frontmatter(const std::string& text);

// Builds a bundle from a root document and file map, validating paths and
// total size. Throws PathEscape / BundleTooLarge / manifest errors.
SkillBundle make_bundle(std::string root_doc,
                        std::map<std::string, std::string> files,
                        int version = 0,
                        std::optional<int> parent_version = std::nullopt);

SkillBundle load_bundle(const std::filesystem::path& dir);
void write_bundle(const SkillBundle& bundle, const std::filesystem::path& dir);

ValidationReport validate_bundle(const SkillBundle& bundle,
                                 const std::set<std::string>& rules,
                                 const ValidationOptions& opts = {});

SkillBundle next_version(const SkillBundle& bundle,
                         const std::map<std::string, std::optional<std::string>>& edits,
                         const std::optional<std::string>& new_doc = std::nullopt);

ChangeSet diff_bundles(const SkillBundle& a, const SkillBundle& b);

// Line-oriented export: rule<TAB>severity<TAB>path<TAB>message
std::string report_to_text(const ValidationReport& report);

// Throws PathEscape unless `rel` is a normalized, relative, non-escaping path.
void check_relative_path(const std::string& rel);

bool bundle_content_equals(const SkillBundle& a, const SkillBundle& b);

}  // namespace coevo::skills
