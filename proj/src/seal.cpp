#include "coevo/seal.hpp"

#include <mutex>
#include <set>

namespace coevo::seal {
namespace {

std::mutex g_mutex;
std::set<std::string>& registry() {
    static std::set<std::string> r;
    return r;
}

// Fragments shorter than this would flag innocent text.
constexpr std::size_t kMinFragment = 6;

}  // namespace

void register_sealed_text(const std::string& fragment) {
    if (fragment.size() < kMinFragment) return;
    std::lock_guard lock(g_mutex);
    registry().insert(fragment);
}

bool contains_sealed(std::string_view text) {
    std::lock_guard lock(g_mutex);
    for (const auto& f : registry())
        if (text.find(f) != std::string_view::npos) return true;
    return false;
}

void clear_for_testing() {
    std::lock_guard lock(g_mutex);
    registry().clear();
}

}  // namespace coevo::seal
