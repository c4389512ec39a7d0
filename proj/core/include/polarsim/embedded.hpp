#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace polarsim {

/// Data files compiled into the library (issues/*.toml, prompts/*.txt,
/// traits.toml), addressed by their path relative to core/data.
std::optional<std::string_view> embedded_resource(std::string_view name);
std::vector<std::string_view> embedded_resource_names();

}  // namespace polarsim
