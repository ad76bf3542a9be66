#pragma once

#include <cstdint>

namespace agx {

// Image-level observation label: {1, 0, u} in the derivation rules.
enum class Label3 : std::uint8_t { Negative = 0, Positive = 1, Unlabeled = 2 };

}  // namespace agx
