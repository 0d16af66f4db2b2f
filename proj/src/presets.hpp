#pragma once

#include <string_view>
#include <vector>

namespace geolearn::cli {

struct Preset {
  std::string_view name;
  std::string_view text;
};

/// Shipped experiment configs (presets/*.yaml), sorted by name.
const std::vector<Preset>& presets();

}  // namespace geolearn::cli
