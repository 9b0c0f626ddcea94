#pragma once

#include <string>
#include <string_view>

namespace coevo::seal {

// Host-side registry of text fragments that must never cross the generator
// boundary (hidden-suite targets and expectations). The registry answers
// containment queries without exposing the fragments themselves.
void register_sealed_text(const std::string& fragment);
bool contains_sealed(std::string_view text);
void clear_for_testing();

}  // namespace coevo::seal
