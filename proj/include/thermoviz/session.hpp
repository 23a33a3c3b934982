#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "thermoviz/lod.hpp"
#include "thermoviz/protocol.hpp"

namespace thermoviz::wire {

/// Server-side phase of the five-step exchange:
/// Idle -> HEADER -> SENSORS -> PARTICLES -> FOOTER -> (ACK | COMMAND) -> Idle.
enum class Phase : std::uint8_t { Idle, AwaitHeaderAck, AwaitSensorsAck, AwaitParticlesAck, AwaitFooterAck };

std::string_view to_string(Phase phase);

struct SessionState {
  Mode mode = Mode::Full;        // requested by the client
  Mode cycle_mode = Mode::Full;  // mode of the cycle in flight
  Phase phase = Phase::Idle;
  Eigen::Vector3d viewpoint = Eigen::Vector3d::Zero();  // centimeters
  int band = 0;
  std::size_t cursor = 0;  // diffusion wave for the next delta cycle
  bool force_full = true;  // next cycle must be full
};

/// The server is ready to open a cycle. `can_delta` is false when the client
/// has no compatible layout (first cycle, band or point-set change).
struct CycleStart {
  bool can_delta = true;
};

using SessionEvent = std::variant<CycleStart, Message>;

enum class SessionAction : std::uint8_t {
  SendHeader,
  SendSensors,
  SendParticles,
  SendFooter,
  Commit,  // footer acknowledged: what was sent is now the client's state
  Reset,   // protocol violation or client error: drop the cycle, next one is full
};

struct StepResult {
  SessionState state;
  std::vector<SessionAction> actions;
  std::optional<std::string> violation;
};

/// Room center in centimeters, the target of viewpoint-distance band selection.
struct BandContext {
  const BandConfig* bands = nullptr;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
};

StepResult session_step(SessionState state, const SessionEvent& event, const BandContext& context);

}  // namespace thermoviz::wire
