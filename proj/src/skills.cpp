#include "coevo/skills.hpp"

#include <fstream>
#include <regex>
#include <sstream>

#include "coevo/errors.hpp"

namespace fs = std::filesystem;

namespace coevo::skills {
namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_name(const std::string& name) {
    if (name.empty()) return false;
    for (char c : name) {
        if (!(std::islower(static_cast<unsigned char>(c)) ||
              std::isdigit(static_cast<unsigned char>(c)) || c == '-'))
            return false;
    }
    return true;
}

// Locates the frontmatter block; returns (block-lines, body-start-offset).
std::pair<std::vector<std::string>, std::size_t> frontmatter_block(const std::string& text) {
    if (text.rfind("---", 0) != 0) fail("MissingFrontmatter", "document does not start with ---");
    auto first_nl = text.find('\n');
    if (first_nl == std::string::npos || trim(text.substr(0, first_nl)) != "---")
        fail("MissingFrontmatter", "document does not start with a --- line");
    std::size_t pos = first_nl + 1;
    std::vector<std::string> block;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string line = (nl == std::string::npos) ? text.substr(pos) : text.substr(pos, nl - pos);
        if (trim(line) == "---") {
            std::size_t body = (nl == std::string::npos) ? text.size() : nl + 1;
            return {block, body};
        }
        if (nl == std::string::npos) break;
        block.push_back(line);
        pos = nl + 1;
    }
    fail("MalformedFrontmatter", "frontmatter block is not terminated by ---");
}

std::size_t bundle_bytes(const SkillBundle& b) {
    std::size_t total = b.root_doc.size();
    for (const auto& [p, c] : b.files) total += p.size() + c.size();
    return total;
}

}  // namespace

void check_relative_path(const std::string& rel) {
    if (rel.empty()) fail("PathEscape", "empty path");
    if (rel.front() == '/') fail("PathEscape", "absolute path: " + rel);
    if (rel.find('\\') != std::string::npos) fail("PathEscape", "backslash in path: " + rel);
    std::stringstream ss(rel);
    std::string seg;
    while (std::getline(ss, seg, '/')) {
        if (seg.empty() || seg == "." || seg == "..")
            fail("PathEscape", "non-normalized path: " + rel);
    }
}

SkillManifest parse_manifest(const std::string& text) {
    auto [block, body] = frontmatter_block(text);
    (void)body;
    SkillManifest m;
    for (const auto& raw : block) {
        std::string line = raw;
        if (trim(line).empty()) continue;
        if (line.front() == ' ' || line.front() == '\t')
            fail("MalformedFrontmatter", "nested structures are not supported: " + line);
        auto colon = line.find(':');
        if (colon == std::string::npos)
            fail("MalformedFrontmatter", "line without key: separator: " + line);
        std::string key = trim(line.substr(0, colon));
        std::string value = trim(line.substr(colon + 1));
        if (key.empty()) fail("MalformedFrontmatter", "empty key in: " + line);
        if (key == "name") m.name = value;
        else if (key == "description") m.description = value;
        else m.extra[key] = value;
    }
    if (m.name.empty()) fail("MissingField", "frontmatter lacks name");
    if (m.description.empty()) fail("MissingField", "frontmatter lacks description");
    if (m.name.find('/') != std::string::npos || m.name.find(' ') != std::string::npos ||
        m.name.find('\t') != std::string::npos)
        fail("MalformedFrontmatter", "name contains path separators or whitespace: " + m.name);
    return m;
}

std::string strip_frontmatter(const std::string& text) {
    auto [block, body] = frontmatter_block(text);
    (void)block;
    return text.substr(body);
}

SkillBundle make_bundle(std::string root_doc, std::map<std::string, std::string> files,
                        int version, std::optional<int> parent_version) {
    SkillBundle b;
    b.manifest = parse_manifest(root_doc);
    b.root_doc = std::move(root_doc);
    for (const auto& [p, c] : files) check_relative_path(p);
    b.files = std::move(files);
    b.version = version;
    b.parent_version = parent_version;
    if (bundle_bytes(b) > kMaxBundleBytes)
        fail("BundleTooLarge", "bundle exceeds 16 MiB");
    return b;
}

SkillBundle load_bundle(const fs::path& dir) {
    const fs::path root_doc_path = dir / kRootDocName;
    if (!fs::exists(root_doc_path))
        fail("NotABundle", "no " + std::string(kRootDocName) + " in " + dir.string());

    const fs::path canon_dir = fs::weakly_canonical(dir);
    std::string root_doc;
    std::map<std::string, std::string> files;
    int version = 0;
    std::optional<int> parent_version;

    auto read_file = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };

    for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) {
        const fs::path& p = it->path();
        if (fs::is_symlink(p)) {
            fs::path target = fs::weakly_canonical(p);
            auto rel = fs::relative(target, canon_dir);
            if (rel.empty() || rel.string().rfind("..", 0) == 0)
                fail("PathEscape", "symlink escapes bundle root: " + p.string());
        }
        if (!it->is_regular_file()) continue;
        std::string rel = fs::relative(p, dir).generic_string();
        if (rel == kRootDocName) {
            root_doc = read_file(p);
        } else if (rel == kSidecarName) {
            std::istringstream meta(read_file(p));
            std::string line;
            while (std::getline(meta, line)) {
                auto eq = line.find('=');
                if (eq == std::string::npos) continue;
                std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
                if (key == "version") version = std::stoi(val);
                else if (key == "parent_version" && !val.empty()) parent_version = std::stoi(val);
            }
        } else {
            files[rel] = read_file(p);
        }
    }
    return make_bundle(std::move(root_doc), std::move(files), version, parent_version);
}

void write_bundle(const SkillBundle& bundle, const fs::path& dir) {
    fs::create_directories(dir);
    auto write_file = [&](const fs::path& p, const std::string& content) {
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
    };
    write_file(dir / kRootDocName, bundle.root_doc);
    for (const auto& [rel, content] : bundle.files) write_file(dir / rel, content);
    std::string meta = "version=" + std::to_string(bundle.version) + "\n";
    meta += "parent_version=" +
            (bundle.parent_version ? std::to_string(*bundle.parent_version) : std::string()) + "\n";
    write_file(dir / kSidecarName, meta);
}

namespace {

void check_self_contained(const SkillBundle& b, const ValidationOptions& opts,
                          std::vector<Finding>& out) {
    auto scan = [&](const std::string& path, const std::string& content) {
        for (const auto& prefix : opts.forbidden_prefixes) {
            if (content.find(prefix) != std::string::npos)
                out.push_back({"SELF_CONTAINED", "error", path,
                               "references external path " + prefix});
        }
    };
    scan(kRootDocName, b.root_doc);
    for (const auto& [p, c] : b.files) scan(p, c);
}

void check_hyphen_import(const SkillBundle& b, std::vector<Finding>& out) {
    // Hyphenated directory names rendered with underscores in an import
    // statement cannot resolve as module paths.
    std::set<std::string> hyphen_names;
    if (b.manifest.name.find('-') != std::string::npos) hyphen_names.insert(b.manifest.name);
    for (const auto& [p, c] : b.files) {
        auto slash = p.find('/');
        if (slash != std::string::npos) {
            std::string top = p.substr(0, slash);
            if (top.find('-') != std::string::npos) hyphen_names.insert(top);
        }
    }
    static const std::regex import_re(R"((?:^|\n)\s*(?:from|import)\s+([A-Za-z_][A-Za-z0-9_.]*))");
    for (const auto& [p, c] : b.files) {
        for (auto it = std::sregex_iterator(c.begin(), c.end(), import_re);
             it != std::sregex_iterator(); ++it) {
            std::string module = (*it)[1].str();
            std::string head = module.substr(0, module.find('.'));
            std::string hyphenated = head;
            for (char& ch : hyphenated)
                if (ch == '_') ch = '-';
            if (hyphen_names.count(hyphenated))
                out.push_back({"HYPHEN_IMPORT", "error", p,
                               "import '" + module + "' treats hyphenated directory '" +
                                   hyphenated + "' as a module path"});
        }
    }
}

void check_frontmatter(const SkillBundle& b, std::vector<Finding>& out) {
    try {
        SkillManifest m = parse_manifest(b.root_doc);
        if (!valid_name(m.name))
            out.push_back({"FRONTMATTER", "error", kRootDocName,
                           "name must be lowercase letters, digits, hyphens: " + m.name});
    } catch (const Error& e) {
        out.push_back({"FRONTMATTER", "error", kRootDocName, e.what()});
    }
}

void check_declared_scripts(const SkillBundle& b, std::vector<Finding>& out) {
    static const std::regex script_re(R"(scripts/[A-Za-z0-9_\-./]+)");
    for (auto it = std::sregex_iterator(b.root_doc.begin(), b.root_doc.end(), script_re);
         it != std::sregex_iterator(); ++it) {
        std::string ref = it->str();
        while (!ref.empty() && (ref.back() == '.' || ref.back() == '/')) ref.pop_back();
        if (!b.files.count(ref))
            out.push_back({"DECLARED_SCRIPTS", "error", ref,
                           "root document references missing script " + ref});
    }
}

}  // namespace

ValidationReport validate_bundle(const SkillBundle& bundle, const std::set<std::string>& rules,
                                 const ValidationOptions& opts) {
    for (const auto& r : rules)
        if (!kAllRules.count(r)) fail("UnknownRule", "unknown validation rule " + r);
    ValidationReport report;
    if (rules.count("SELF_CONTAINED")) check_self_contained(bundle, opts, report.findings);
    if (rules.count("HYPHEN_IMPORT")) check_hyphen_import(bundle, report.findings);
    if (rules.count("FRONTMATTER")) check_frontmatter(bundle, report.findings);
    if (rules.count("DECLARED_SCRIPTS")) check_declared_scripts(bundle, report.findings);
    report.passed = true;
    for (const auto& f : report.findings)
        if (f.severity == "error") report.passed = false;
    return report;
}

SkillBundle next_version(const SkillBundle& bundle,
                         const std::map<std::string, std::optional<std::string>>& edits,
                         const std::optional<std::string>& new_doc) {
    std::map<std::string, std::string> files = bundle.files;
    std::optional<std::string> doc = new_doc;
    for (const auto& [path, content] : edits) {
        check_relative_path(path);
        if (path == kRootDocName) {
            if (!content) fail("DeleteRootDoc", "cannot remove the procedure document");
            doc = *content;
            continue;
        }
        if (content) files[path] = *content;
        else files.erase(path);
    }
    return make_bundle(doc ? *doc : bundle.root_doc, std::move(files),
                       bundle.version + 1, bundle.version);
}

ChangeSet diff_bundles(const SkillBundle& a, const SkillBundle& b) {
    ChangeSet cs;
    for (const auto& [p, c] : a.files) {
        auto it = b.files.find(p);
        if (it == b.files.end()) cs.removed.insert(p);
        else if (it->second != c) cs.modified.insert(p);
    }
    for (const auto& [p, c] : b.files)
        if (!a.files.count(p)) cs.added.insert(p);
    cs.doc_changed = a.root_doc != b.root_doc;
    return cs;
}

std::string report_to_text(const ValidationReport& report) {
    std::string out;
    for (const auto& f : report.findings)
        out += f.rule + "\t" + f.severity + "\t" + f.path + "\t" + f.message + "\n";
    return out;
}

bool bundle_content_equals(const SkillBundle& a, const SkillBundle& b) {
    return a.root_doc == b.root_doc && a.files == b.files;
}

}  // namespace coevo::skills
