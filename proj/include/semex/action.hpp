#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace semex {

/// Executed action set. The index order is also the argmax order over the
/// actor's four output components.
enum class DiscreteAction : int {
  RotateLeft = 0,
  MoveForward = 1,
  RotateRight = 2,
  VlmQuery = 3,
};

inline constexpr int kNumActions = 4;

inline constexpr std::array<DiscreteAction, kNumActions> kAllActions = {
    DiscreteAction::RotateLeft, DiscreteAction::MoveForward,
    DiscreteAction::RotateRight, DiscreteAction::VlmQuery};

inline constexpr std::string_view to_string(DiscreteAction a) {
  switch (a) {
    case DiscreteAction::RotateLeft: return "RotateLeft";
    case DiscreteAction::MoveForward: return "MoveForward";
    case DiscreteAction::RotateRight: return "RotateRight";
    case DiscreteAction::VlmQuery: return "VLM-Query";
  }
  return "?";
}

inline DiscreteAction parse_action(std::string_view name) {
  for (auto a : kAllActions) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown action: " + std::string(name));
}

}  // namespace semex
