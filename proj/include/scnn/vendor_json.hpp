#pragma once

// nlohmann/json is vendored as a single header at the repository root.
#include "json.hpp"
