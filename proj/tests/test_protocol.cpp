#include <doctest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "thermoviz/protocol.hpp"
#include "thermoviz/session.hpp"

using namespace thermoviz;
using namespace thermoviz::wire;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

std::vector<std::uint8_t> parse_hex(std::istream& in) {
  std::vector<std::uint8_t> out;
  std::string tok;
  while (in >> tok) out.push_back(static_cast<std::uint8_t>(std::stoul(tok, nullptr, 16)));
  return out;
}

Message decoded(std::span<const std::uint8_t> bytes, Mode mode) {
  Message m;
  REQUIRE(decode(bytes, mode, m) == DecodeStatus::Ok);
  return m;
}

}  // namespace

TEST_CASE("crc32 against the bitwise reference") {
  const auto check = bytes_of("123456789");
  CHECK(crc32(check) == 0xCBF43926u);
  CHECK(oracle::crc32(check) == 0xCBF43926u);
  CHECK(crc32({}) == 0u);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> data(rng() % 4096);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    CHECK(crc32(data) == oracle::crc32(data));
    const std::size_t cut = data.empty() ? 0 : rng() % data.size();
    const std::span<const std::uint8_t> all(data);
    CHECK(crc32(all.subspan(cut), crc32(all.first(cut))) == crc32(data));
  }
}

TEST_CASE("golden frames") {
  std::ifstream in(THERMOVIZ_FIXTURES "/frames.hex");
  REQUIRE(in.good());
  std::map<std::string, std::pair<Mode, std::vector<std::uint8_t>>> frames;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, mode;
    ls >> name >> mode;
    frames[name] = {mode == "delta" ? Mode::Delta : Mode::Full, parse_hex(ls)};
  }
  const std::map<std::string, Message> expected{
      {"ack_header", Ack{FrameType::Header, 0}},
      {"header_default", Header{Mode::Full, 1, 35, 30000, {4.0f, 3.0f, 2.5f}, 1}},
      {"particles_delta_1", ParticlesDelta{{{7, 21.5f}}}},
      {"particles_full_1", ParticlesFull{{{7, {1, 2, 3}, 21.5f}}}},
      {"sensors_delta_0", SensorsDelta{}},
      {"sensors_full_1", SensorsFull{{{3, {0, 1, 0}, 22.0f}}}},
      {"footer_check", Footer{5, 0xCBF43926u}},
      {"cmd_viewpoint_250", Command{CommandCode::SetViewpoint, {250, 0, 0}, Mode::Full}},
      {"cmd_set_mode", Command{CommandCode::SetMode, {}, Mode::Delta}},
      {"cmd_request_full", Command{CommandCode::RequestFull, {}, Mode::Full}},
  };
  REQUIRE(frames.size() == expected.size());
  for (const auto& [name, message] : expected) {
    INFO(name);
    REQUIRE(frames.contains(name));
    const auto& [mode, bytes] = frames.at(name);
    CHECK(encode(message) == bytes);
    CHECK(decoded(bytes, mode) == message);
  }
}

TEST_CASE("record sizes") {
  CHECK(encode_payload(ParticlesDelta{{{7, 21.5f}}}).size() == 8);
  CHECK(encode_payload(ParticlesFull{{{7, {0, 0, 0}, 21.5f}}}).size() == 20);
  CHECK(encode(SensorsDelta{}).size() == 8);
  CHECK(encode_payload(Header{}).size() == kHeaderPayloadSize);
  CHECK(encode_payload(Footer{}).size() == kFooterPayloadSize);

  ParticlesFull full;
  for (std::uint32_t i = 0; i < 30000; ++i) full.records.push_back({i, {0, 0, 0}, 20});
  CHECK(encode_payload(full).size() == 600000);
}

TEST_CASE("decoder error values") {
  const auto good = encode(Ack{FrameType::Footer, 0});
  Message m;

  auto with = [&](std::size_t at, std::uint8_t v) {
    auto b = good;
    b[at] = v;
    return b;
  };
  CHECK(decode(with(0, 0), Mode::Full, m) == DecodeStatus::BadMagic);
  CHECK(decode(std::vector<std::uint8_t>{0, 0}, Mode::Full, m) == DecodeStatus::BadMagic);
  CHECK(decode(with(1, 0x44), Mode::Full, m) == DecodeStatus::BadMagic);
  CHECK(decode(with(2, 2), Mode::Full, m) == DecodeStatus::UnknownVersion);
  CHECK(decode(with(3, 9), Mode::Full, m) == DecodeStatus::UnknownFrameType);
  CHECK(decode(with(3, 0), Mode::Full, m) == DecodeStatus::UnknownFrameType);

  auto huge = good;
  huge[7] = 0x7F;
  CHECK(decode(huge, Mode::Full, m) == DecodeStatus::LengthOverrun);
  CHECK(decode_frame(good, 1).status == DecodeStatus::LengthOverrun);

  auto trailing = good;
  trailing.push_back(0);
  CHECK(decode(trailing, Mode::Full, m) == DecodeStatus::TrailingBytes);

  // ACK payload declared one byte longer than its layout.
  auto long_ack = encode_frame(FrameType::Ack, std::vector<std::uint8_t>{4, 0, 0});
  CHECK(decode(long_ack, Mode::Full, m) == DecodeStatus::TrailingBytes);
  auto short_ack = encode_frame(FrameType::Ack, std::vector<std::uint8_t>{4});
  CHECK(decode(short_ack, Mode::Full, m) == DecodeStatus::ShortPayload);
  auto bad_ack = encode_frame(FrameType::Ack, std::vector<std::uint8_t>{9, 0});
  CHECK(decode(bad_ack, Mode::Full, m) == DecodeStatus::InvalidField);
  auto ragged = encode_frame(FrameType::Particles, std::vector<std::uint8_t>(9, 0));
  CHECK(decode(ragged, Mode::Delta, m) == DecodeStatus::TrailingBytes);
  auto bad_cmd = encode_frame(FrameType::Command, std::vector<std::uint8_t>{7});
  CHECK(decode(bad_cmd, Mode::Full, m) == DecodeStatus::InvalidField);
  auto bad_mode = encode_frame(FrameType::Command, std::vector<std::uint8_t>{2, 5});
  CHECK(decode(bad_mode, Mode::Full, m) == DecodeStatus::InvalidField);
}

TEST_CASE("streaming: truncation needs more bytes and consumes nothing") {
  const auto frame = encode(Header{Mode::Delta, 42, 35, 30000, {4, 3, 2.5f}, 2});
  for (std::size_t cut = 0; cut < frame.size(); ++cut) {
    const auto r = decode_frame(std::span(frame).first(cut));
    CHECK(r.status == DecodeStatus::NeedMoreBytes);
    CHECK(r.consumed == 0);
  }
  std::vector<std::uint8_t> two = frame;
  const auto ack = encode(Ack{FrameType::Header, 0});
  two.insert(two.end(), ack.begin(), ack.end());
  const auto first = decode_frame(two);
  REQUIRE(first.status == DecodeStatus::Ok);
  CHECK(first.consumed == frame.size());
  const auto second = decode_frame(std::span(two).subspan(first.consumed));
  REQUIRE(second.status == DecodeStatus::Ok);
  CHECK(second.frame.type == FrameType::Ack);
}

TEST_CASE("encode rejects oversize payloads") {
  std::vector<std::uint8_t> big(kDefaultMaxPayload + 1);
  CHECK_THROWS_AS(encode_frame(FrameType::Particles, big), EncodeError);
}

TEST_CASE("generated frames round trip") {
  std::mt19937_64 rng(99);
  auto f = [&] { return std::bit_cast<float>(static_cast<std::uint32_t>(rng())); };
  for (int trial = 0; trial < 2000; ++trial) {
    Message m;
    const std::size_t n = rng() % 50;
    switch (rng() % 8) {
      case 0:
        m = Header{static_cast<Mode>(rng() % 2), rng(), static_cast<std::uint16_t>(rng()),
                   static_cast<std::uint32_t>(rng()), {f(), f(), f()}, static_cast<std::uint8_t>(rng())};
        break;
      case 1: {
        SensorsFull s;
        for (std::size_t i = 0; i < n; ++i) s.records.push_back({static_cast<std::uint16_t>(rng()), {f(), f(), f()}, f()});
        m = s;
        break;
      }
      case 2: {
        SensorsDelta s;
        for (std::size_t i = 0; i < n; ++i) s.records.push_back({static_cast<std::uint16_t>(rng()), f()});
        m = s;
        break;
      }
      case 3: {
        ParticlesFull p;
        for (std::size_t i = 0; i < n; ++i) p.records.push_back({static_cast<std::uint32_t>(rng()), {f(), f(), f()}, f()});
        m = p;
        break;
      }
      case 4: {
        ParticlesDelta p;
        for (std::size_t i = 0; i < n; ++i) p.records.push_back({static_cast<std::uint32_t>(rng()), f()});
        m = p;
        break;
      }
      case 5:
        m = Footer{rng(), static_cast<std::uint32_t>(rng())};
        break;
      case 6:
        m = Ack{static_cast<FrameType>(1 + rng() % 6), static_cast<std::uint8_t>(rng() % 2)};
        break;
      default:
        m = Command{static_cast<CommandCode>(1 + rng() % 3), {f(), f(), f()}, static_cast<Mode>(rng() % 2)};
        auto& c = std::get<Command>(m);
        if (c.code != CommandCode::SetViewpoint) c.viewpoint = {};
        if (c.code != CommandCode::SetMode) c.mode = Mode::Full;
    }
    const auto bytes = encode(m);
    Message back;
    REQUIRE(decode(bytes, payload_mode(m), back) == DecodeStatus::Ok);
    // Byte identity holds even for NaN payloads where operator== would not.
    CHECK(encode(back) == bytes);
    CHECK(frame_type(back) == frame_type(m));
  }
}

TEST_CASE("fuzzed input never crashes the decoder") {
  std::mt19937_64 rng(7);
  const std::vector<std::vector<std::uint8_t>> seeds{
      encode(Header{}), encode(ParticlesDelta{{{1, 2}, {3, 4}}}), encode(Command{CommandCode::SetViewpoint, {1, 2, 3}}),
      encode(Ack{})};
  std::size_t ok = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    std::vector<std::uint8_t> b = seeds[rng() % seeds.size()];
    const int edits = 1 + static_cast<int>(rng() % 4);
    for (int e = 0; e < edits; ++e) {
      switch (rng() % 3) {
        case 0:
          if (!b.empty()) b[rng() % b.size()] = static_cast<std::uint8_t>(rng());
          break;
        case 1:
          b.resize(rng() % (b.size() + 8), static_cast<std::uint8_t>(rng()));
          break;
        default:
          b.insert(b.begin() + static_cast<std::ptrdiff_t>(rng() % (b.size() + 1)), static_cast<std::uint8_t>(rng()));
      }
    }
    Message m;
    ok += decode(b, static_cast<Mode>(rng() % 2), m) == DecodeStatus::Ok;
    (void)decode_frame(b, static_cast<std::uint32_t>(rng() % 64));
  }
  CHECK(ok > 0);
}

TEST_CASE("delta payload") {
  std::vector<float> last{20, 20, 20};
  std::vector<float> cur{20, 20.005f, 21};
  CHECK(delta_payload(last, cur, 0.01) == std::vector<ValueUpdate>{{2, 21}});
  CHECK(delta_payload(last, last, 0.0).empty());
  const std::vector<float> longer{20, 20, 20, 5};
  CHECK(delta_payload(last, longer, 0.01) == std::vector<ValueUpdate>{{3, 5}});

  std::vector<float> field(30000, 20.0f);
  auto changed = field;
  changed[1234] = 25;
  const auto d = delta_payload(field, changed, 0.01);
  REQUIRE(d.size() == 1);
  CHECK(encode_payload(ParticlesDelta{d}).size() == 8);
}

namespace {

BandConfig kBands;
const BandContext kContext{&kBands, {200, 150, 125}};

SessionState run(SessionState s, const std::vector<SessionEvent>& events, std::vector<SessionAction>* actions = nullptr) {
  for (const auto& e : events) {
    auto r = session_step(s, e, kContext);
    REQUIRE_FALSE(r.violation.has_value());
    if (actions) actions->insert(actions->end(), r.actions.begin(), r.actions.end());
    s = r.state;
  }
  return s;
}

std::vector<SessionEvent> acks_to_footer() {
  return {Message{Ack{FrameType::Header, 0}}, Message{Ack{FrameType::Sensors, 0}},
          Message{Ack{FrameType::Particles, 0}}};
}

}  // namespace

TEST_CASE("session cycle") {
  SessionState s;
  std::vector<SessionAction> actions;
  s = run(s, {CycleStart{true}}, &actions);
  CHECK(s.phase == Phase::AwaitHeaderAck);
  CHECK(s.cycle_mode == Mode::Full);
  s = run(s, acks_to_footer(), &actions);
  CHECK(s.phase == Phase::AwaitFooterAck);
  s = run(s, {Message{Ack{FrameType::Footer, 0}}}, &actions);
  CHECK(s.phase == Phase::Idle);
  CHECK(actions == std::vector<SessionAction>{SessionAction::SendHeader, SessionAction::SendSensors,
                                              SessionAction::SendParticles, SessionAction::SendFooter,
                                              SessionAction::Commit});

  SUBCASE("delta only after a full cycle and when the layout allows it") {
    s.mode = Mode::Delta;
    auto d = run(s, {CycleStart{true}});
    CHECK(d.cycle_mode == Mode::Delta);
    auto f = run(s, {CycleStart{false}});
    CHECK(f.cycle_mode == Mode::Full);
  }

  SUBCASE("viewpoint command acknowledges the footer and picks a band") {
    s = run(s, {CycleStart{true}});
    s = run(s, acks_to_footer());
    auto r = session_step(s, Message{Command{CommandCode::SetViewpoint, {200 + 1600, 150, 125}}}, kContext);
    REQUIRE_FALSE(r.violation);
    CHECK(r.state.phase == Phase::Idle);
    CHECK(r.state.band == 3);
    CHECK(r.actions == std::vector<SessionAction>{SessionAction::Commit});
    CHECK(r.state.viewpoint.isApprox(Eigen::Vector3d(1800, 150, 125)));
  }

  SUBCASE("request full forces the next cycle") {
    s.mode = Mode::Delta;
    s = run(s, {CycleStart{true}});
    s = run(s, acks_to_footer());
    s = run(s, {Message{Command{CommandCode::RequestFull}}});
    CHECK(s.force_full);
    s = run(s, {CycleStart{true}});
    CHECK(s.cycle_mode == Mode::Full);
  }

  SUBCASE("set mode") {
    s = run(s, {CycleStart{true}});
    s = run(s, acks_to_footer());
    s = run(s, {Message{Command{CommandCode::SetMode, {}, Mode::Delta}}});
    CHECK(s.mode == Mode::Delta);
    s = run(s, {CycleStart{true}});
    CHECK(s.cycle_mode == Mode::Delta);
  }
}

TEST_CASE("session violations reset to a full cycle") {
  SessionState s;
  s = run(s, {CycleStart{true}});
  s.mode = Mode::Delta;

  SUBCASE("particles frame from the client") {
    auto r = session_step(s, Message{ParticlesDelta{}}, kContext);
    CHECK(r.violation.has_value());
    CHECK(r.state.phase == Phase::Idle);
    CHECK(r.state.force_full);
    CHECK(r.actions == std::vector<SessionAction>{SessionAction::Reset});
    CHECK(run(r.state, {CycleStart{true}}).cycle_mode == Mode::Full);
  }
  SUBCASE("out-of-order ack") {
    CHECK(session_step(s, Message{Ack{FrameType::Sensors, 0}}, kContext).violation.has_value());
  }
  SUBCASE("error ack") {
    CHECK(session_step(s, Message{Ack{FrameType::Header, 1}}, kContext).violation.has_value());
  }
  SUBCASE("command before the footer") {
    CHECK(session_step(s, Message{Command{CommandCode::RequestFull}}, kContext).violation.has_value());
  }
  SUBCASE("cycle start while busy") { CHECK(session_step(s, CycleStart{}, kContext).violation.has_value()); }
  SUBCASE("message while idle") {
    SessionState idle;
    CHECK(session_step(idle, Message{Ack{FrameType::Footer, 0}}, kContext).violation.has_value());
  }
}

TEST_CASE("random event sequences only visit phases in cycle order") {
  std::mt19937_64 rng(31);
  const std::vector<SessionEvent> pool{
      CycleStart{true},
      CycleStart{false},
      Message{Ack{FrameType::Header, 0}},
      Message{Ack{FrameType::Sensors, 0}},
      Message{Ack{FrameType::Particles, 0}},
      Message{Ack{FrameType::Footer, 0}},
      Message{Ack{FrameType::Footer, 1}},
      Message{Command{CommandCode::SetViewpoint, {900, 150, 125}}},
      Message{Command{CommandCode::RequestFull}},
      Message{Header{}},
  };
  auto next_phase = [](Phase p) {
    switch (p) {
      case Phase::Idle:
        return Phase::AwaitHeaderAck;
      case Phase::AwaitHeaderAck:
        return Phase::AwaitSensorsAck;
      case Phase::AwaitSensorsAck:
        return Phase::AwaitParticlesAck;
      case Phase::AwaitParticlesAck:
        return Phase::AwaitFooterAck;
      case Phase::AwaitFooterAck:
        return Phase::Idle;
    }
    return Phase::Idle;
  };
  for (int trial = 0; trial < 500; ++trial) {
    SessionState s;
    for (int step = 0; step < 60; ++step) {
      const auto r = session_step(s, pool[rng() % pool.size()], kContext);
      if (r.violation) {
        CHECK(r.state.phase == Phase::Idle);
      } else {
        CHECK(r.state.phase == next_phase(s.phase));
      }
      s = r.state;
    }
  }
}
