#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spoofguard/simgen.hpp"

namespace spoofguard::attacks {

enum class AttackKind { TurnByTurn, Overshoot, WrongTurn, Stop };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view text);

struct AttackScenario {
  std::string id;
  AttackKind kind = AttackKind::TurnByTurn;
  double onset_s = 0.0;  // TurnByTurn, Overshoot. Derived from the turn / interval for the others.
  std::uint64_t seed = 0;

  // TurnByTurn
  std::vector<simgen::Segment> alternate_route;
  double jump_m = 5.0;

  // WrongTurn: index into the clean trace's ground-truth turns.
  std::size_t turn_index = 0;
  double lead_s = 1.0;

  // Stop: standstill interval of the clean trace and the motion the spoofer fakes over it.
  double stop_start_s = 0.0;
  double stop_end_s = 0.0;
  double stop_speed_mps = 8.0;
  std::vector<simgen::Segment> stop_profile;  // empty: straight along the pre-stop heading
};

struct SpoofedTrace {
  simgen::SensorTrace trace;
  AttackScenario scenario;
  std::size_t onset_index = 0;  // first altered GNSS sample
  double onset_s = 0.0;
};

/// GNSS jumps `jump_m` ahead at onset, then follows the alternate route simulated from there.
SpoofedTrace inject_turn_by_turn(const simgen::SensorTrace& clean, const AttackScenario& scenario);
/// GNSS frozen at the onset position.
SpoofedTrace inject_overshoot(const simgen::SensorTrace& clean, const AttackScenario& scenario,
                              double speed_error = 0.5);
/// Every GNSS step from `lead_s` before the target turn is reflected about the approach heading.
SpoofedTrace inject_wrong_turn(const simgen::SensorTrace& clean, const AttackScenario& scenario);
/// GNSS keeps moving over a true standstill, then resumes the clean displacements from where it got to.
SpoofedTrace inject_stop(const simgen::SensorTrace& clean, const AttackScenario& scenario,
                         double speed_error = 0.5);

/// Dispatches on scenario.kind.
SpoofedTrace inject(const simgen::SensorTrace& clean, const AttackScenario& scenario);

/// A seeded scenario of the given kind suited to the clean trace (onset while moving, a turn of at
/// least 60 degrees, or the trace's first standstill). Throws ScenarioError when the trace offers none.
AttackScenario random_scenario(AttackKind kind, const simgen::SensorTrace& clean, std::uint64_t seed);

nlohmann::json to_json(const AttackScenario& scenario);
AttackScenario scenario_from_json(const nlohmann::json& doc);
AttackScenario load_scenario(const std::filesystem::path& path);
void save_scenario(const std::filesystem::path& path, const AttackScenario& scenario);

/// save_trace layout plus attack.json (scenario, onset index and time).
void save_spoofed(const std::filesystem::path& dir, const SpoofedTrace& spoofed);
SpoofedTrace load_spoofed(const std::filesystem::path& dir);

}  // namespace spoofguard::attacks
