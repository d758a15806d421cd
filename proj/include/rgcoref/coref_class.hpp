#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rgcoref {

/// Antecedent label of a pronoun: mention A, mention B, or neither.
enum class Class : std::uint8_t { kA = 0, kB = 1, kNeither = 2 };

inline constexpr std::size_t kNumClasses = 3;

inline std::size_t index_of(Class c) { return static_cast<std::size_t>(c); }

inline std::string_view to_string(Class c) {
  switch (c) {
    case Class::kA: return "A";
    case Class::kB: return "B";
    case Class::kNeither: return "NEITHER";
  }
  throw std::invalid_argument("bad class");
}

}  // namespace rgcoref
