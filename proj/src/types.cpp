#include "spoofguard/types.hpp"

#include <string>

#include "spoofguard/error.hpp"

namespace spoofguard {

std::string_view to_string(TurnLabel label) {
  switch (label) {
    case TurnLabel::Left:
      return "Left";
    case TurnLabel::Right:
      return "Right";
    case TurnLabel::NoTurn:
      return "NoTurn";
  }
  return "NoTurn";
}

std::string_view to_string(MotionState state) {
  return state == MotionState::Standstill ? "Standstill" : "InMotion";
}

TurnLabel parse_turn_label(std::string_view text) {
  if (text == "Left") return TurnLabel::Left;
  if (text == "Right") return TurnLabel::Right;
  if (text == "NoTurn") return TurnLabel::NoTurn;
  throw InvalidInputError("unknown turn label '" + std::string(text) + "'");
}

}  // namespace spoofguard
