#include "thermoviz/session.hpp"

#include <string>

namespace thermoviz::wire {
namespace {

StepResult violate(SessionState state, std::string why) {
  state.phase = Phase::Idle;
  state.force_full = true;
  return {state, {SessionAction::Reset}, std::move(why)};
}

StepResult advance(SessionState state, Phase next, SessionAction action) {
  state.phase = next;
  return {state, {action}, std::nullopt};
}

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Idle:
      return "Idle";
    case Phase::AwaitHeaderAck:
      return "AwaitHeaderAck";
    case Phase::AwaitSensorsAck:
      return "AwaitSensorsAck";
    case Phase::AwaitParticlesAck:
      return "AwaitParticlesAck";
    case Phase::AwaitFooterAck:
      return "AwaitFooterAck";
  }
  return "?";
}

StepResult session_step(SessionState state, const SessionEvent& event, const BandContext& context) {
  if (const auto* start = std::get_if<CycleStart>(&event)) {
    if (state.phase != Phase::Idle) return violate(state, "cycle start while a cycle is in flight");
    state.cycle_mode = (state.mode == Mode::Delta && !state.force_full && start->can_delta) ? Mode::Delta : Mode::Full;
    state.force_full = false;
    return advance(state, Phase::AwaitHeaderAck, SessionAction::SendHeader);
  }

  const auto& message = std::get<Message>(event);
  const auto* ack = std::get_if<Ack>(&message);
  const auto* command = std::get_if<Command>(&message);
  if (!ack && !command) {
    return violate(state, std::string("client sent a ") + std::string(to_string(frame_type(message))) + " frame");
  }
  if (ack && ack->status != 0) {
    return violate(state, std::string("client rejected ") + std::string(to_string(ack->acked)));
  }

  auto expect = [&](FrameType type) { return ack && ack->acked == type; };
  switch (state.phase) {
    case Phase::Idle:
      break;
    case Phase::AwaitHeaderAck:
      if (expect(FrameType::Header)) return advance(state, Phase::AwaitSensorsAck, SessionAction::SendSensors);
      break;
    case Phase::AwaitSensorsAck:
      if (expect(FrameType::Sensors)) return advance(state, Phase::AwaitParticlesAck, SessionAction::SendParticles);
      break;
    case Phase::AwaitParticlesAck:
      if (expect(FrameType::Particles)) return advance(state, Phase::AwaitFooterAck, SessionAction::SendFooter);
      break;
    case Phase::AwaitFooterAck:
      if (expect(FrameType::Footer)) return advance(state, Phase::Idle, SessionAction::Commit);
      if (command) {
        // The command doubles as the footer acknowledgment.
        switch (command->code) {
          case CommandCode::SetViewpoint:
            state.viewpoint = Eigen::Vector3f(command->viewpoint[0], command->viewpoint[1], command->viewpoint[2])
                                  .cast<double>();
            if (context.bands) state.band = select_band(state.viewpoint, context.target, *context.bands);
            break;
          case CommandCode::SetMode:
            state.mode = command->mode;
            break;
          case CommandCode::RequestFull:
            state.force_full = true;
            break;
        }
        return advance(state, Phase::Idle, SessionAction::Commit);
      }
      break;
  }
  return violate(state, std::string("unexpected ") + std::string(to_string(frame_type(message))) + " in phase " +
                            std::string(to_string(state.phase)));
}

}  // namespace thermoviz::wire
