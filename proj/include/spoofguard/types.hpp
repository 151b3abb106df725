#pragma once

#include <string_view>

namespace spoofguard {

enum class TurnLabel { Left, Right, NoTurn };

enum class MotionState { Standstill, InMotion };

std::string_view to_string(TurnLabel label);
std::string_view to_string(MotionState state);

/// Parses "Left", "Right" or "NoTurn" (case-sensitive). Throws InvalidInputError otherwise.
TurnLabel parse_turn_label(std::string_view text);

/// Mirror image of a turn: Left <-> Right, NoTurn unchanged.
constexpr TurnLabel mirrored(TurnLabel label) {
  switch (label) {
    case TurnLabel::Left:
      return TurnLabel::Right;
    case TurnLabel::Right:
      return TurnLabel::Left;
    default:
      return TurnLabel::NoTurn;
  }
}

}  // namespace spoofguard
