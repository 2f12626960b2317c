#pragma once

#include <vector>

#include "core/sysfile.hpp"

namespace almreg {

/// Built-in example systems. One entry per shipped systems/*.toy file.
const std::vector<SystemSpec>& catalog();

/// nullptr when the name is unknown.
const SystemSpec* catalog_find(const std::string& name);

}  // namespace almreg
