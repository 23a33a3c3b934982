#include "thermoviz/protocol.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include <zlib.h>

#include "thermoviz/lod.hpp"

namespace thermoviz::wire {
namespace {

class Writer {
 public:
  explicit Writer(std::size_t reserve = 0) { out_.reserve(reserve); }

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32x3(const std::array<float, 3>& v) {
    for (float x : v) f32(x);
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

// Callers check sizes up front; reads are unchecked.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return in_[pos_++]; }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::array<float, 3> f32x3() {
    std::array<float, 3> v{};
    for (auto& x : v) x = f32();
    return v;
  }

 private:
  std::uint64_t get(int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

bool valid_frame_type(std::uint8_t t) { return t >= 1 && t <= 6; }
bool valid_mode(std::uint8_t m) { return m <= 1; }

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

DecodeStatus fixed_size(std::size_t have, std::size_t want) {
  if (have < want) return DecodeStatus::ShortPayload;
  if (have > want) return DecodeStatus::TrailingBytes;
  return DecodeStatus::Ok;
}

}  // namespace

std::string_view to_string(FrameType type) {
  switch (type) {
    case FrameType::Header:
      return "HEADER";
    case FrameType::Sensors:
      return "SENSORS";
    case FrameType::Particles:
      return "PARTICLES";
    case FrameType::Footer:
      return "FOOTER";
    case FrameType::Ack:
      return "ACK";
    case FrameType::Command:
      return "COMMAND";
  }
  return "UNKNOWN";
}

std::string_view to_string(Mode mode) { return mode == Mode::Delta ? "delta" : "full"; }

std::string_view to_string(DecodeStatus status) {
  switch (status) {
    case DecodeStatus::Ok:
      return "ok";
    case DecodeStatus::NeedMoreBytes:
      return "need-more-bytes";
    case DecodeStatus::BadMagic:
      return "bad-magic";
    case DecodeStatus::UnknownVersion:
      return "unknown-version";
    case DecodeStatus::UnknownFrameType:
      return "unknown-frame-type";
    case DecodeStatus::LengthOverrun:
      return "length-overrun";
    case DecodeStatus::TrailingBytes:
      return "trailing-bytes";
    case DecodeStatus::ShortPayload:
      return "short-payload";
    case DecodeStatus::InvalidField:
      return "invalid-field";
  }
  return "unknown";
}

FrameType frame_type(const Message& message) {
  return std::visit(Overloaded{[](const Header&) { return FrameType::Header; },
                               [](const SensorsFull&) { return FrameType::Sensors; },
                               [](const SensorsDelta&) { return FrameType::Sensors; },
                               [](const ParticlesFull&) { return FrameType::Particles; },
                               [](const ParticlesDelta&) { return FrameType::Particles; },
                               [](const Footer&) { return FrameType::Footer; },
                               [](const Ack&) { return FrameType::Ack; },
                               [](const Command&) { return FrameType::Command; }},
                    message);
}

Mode payload_mode(const Message& message) {
  return std::holds_alternative<SensorsDelta>(message) || std::holds_alternative<ParticlesDelta>(message) ? Mode::Delta
                                                                                                          : Mode::Full;
}

std::vector<std::uint8_t> encode_payload(const Message& message) {
  return std::visit(
      Overloaded{
          [](const Header& h) {
            Writer w(kHeaderPayloadSize);
            w.u8(static_cast<std::uint8_t>(h.mode));
            w.u64(h.tick);
            w.u16(h.sensor_count);
            w.u32(h.particle_count);
            w.f32x3(h.room);
            w.u8(h.band);
            return w.take();
          },
          [](const SensorsFull& s) {
            Writer w(s.records.size() * kSensorFullRecord);
            for (const auto& r : s.records) {
              w.u16(r.id);
              w.f32x3(r.position);
              w.f32(r.value);
            }
            return w.take();
          },
          [](const SensorsDelta& s) {
            Writer w(s.records.size() * kSensorDeltaRecord);
            for (const auto& r : s.records) {
              w.u16(r.id);
              w.f32(r.value);
            }
            return w.take();
          },
          [](const ParticlesFull& p) {
            Writer w(p.records.size() * kParticleFullRecord);
            for (const auto& r : p.records) {
              w.u32(r.id);
              w.f32x3(r.position);
              w.f32(r.value);
            }
            return w.take();
          },
          [](const ParticlesDelta& p) {
            Writer w(p.records.size() * kParticleDeltaRecord);
            for (const auto& r : p.records) {
              w.u32(r.id);
              w.f32(r.value);
            }
            return w.take();
          },
          [](const Footer& f) {
            Writer w(kFooterPayloadSize);
            w.u64(f.tick);
            w.u32(f.crc);
            return w.take();
          },
          [](const Ack& a) {
            Writer w(kAckPayloadSize);
            w.u8(static_cast<std::uint8_t>(a.acked));
            w.u8(a.status);
            return w.take();
          },
          [](const Command& c) {
            Writer w(13);
            w.u8(static_cast<std::uint8_t>(c.code));
            switch (c.code) {
              case CommandCode::SetViewpoint:
                w.f32x3(c.viewpoint);
                break;
              case CommandCode::SetMode:
                w.u8(static_cast<std::uint8_t>(c.mode));
                break;
              case CommandCode::RequestFull:
                break;
              default:
                throw EncodeError("unknown command code");
            }
            return w.take();
          }},
      message);
}

std::vector<std::uint8_t> encode_frame(FrameType type, std::span<const std::uint8_t> payload) {
  if (payload.size() > kDefaultMaxPayload) throw EncodeError("payload exceeds the maximum frame size");
  if (!valid_frame_type(static_cast<std::uint8_t>(type))) throw EncodeError("unknown frame type");
  Writer w(kFrameHeaderSize + payload.size());
  w.u8(kMagic0);
  w.u8(kMagic1);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(type));
  w.u32(static_cast<std::uint32_t>(payload.size()));
  auto out = w.take();
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

FrameDecode decode_frame(std::span<const std::uint8_t> bytes, std::uint32_t max_payload) {
  FrameDecode result;
  // Reject bad prefixes as early as the bytes allow.
  if (!bytes.empty() && bytes[0] != kMagic0) return {DecodeStatus::BadMagic, {}, 0};
  if (bytes.size() >= 2 && bytes[1] != kMagic1) return {DecodeStatus::BadMagic, {}, 0};
  if (bytes.size() >= 3 && bytes[2] != kVersion) return {DecodeStatus::UnknownVersion, {}, 0};
  if (bytes.size() >= 4 && !valid_frame_type(bytes[3])) return {DecodeStatus::UnknownFrameType, {}, 0};
  if (bytes.size() < kFrameHeaderSize) return result;

  Reader r(bytes.subspan(4, 4));
  const std::uint32_t length = r.u32();
  if (length > max_payload) return {DecodeStatus::LengthOverrun, {}, 0};
  if (bytes.size() - kFrameHeaderSize < length) return result;

  result.status = DecodeStatus::Ok;
  result.frame.type = static_cast<FrameType>(bytes[3]);
  const auto payload = bytes.subspan(kFrameHeaderSize, length);
  result.frame.payload.assign(payload.begin(), payload.end());
  result.consumed = kFrameHeaderSize + length;
  return result;
}

DecodeStatus decode_payload(FrameType type, std::span<const std::uint8_t> payload, Mode mode, Message& out) {
  const std::size_t n = payload.size();
  Reader r(payload);
  switch (type) {
    case FrameType::Header: {
      if (auto s = fixed_size(n, kHeaderPayloadSize); s != DecodeStatus::Ok) return s;
      Header h;
      const auto m = r.u8();
      if (!valid_mode(m)) return DecodeStatus::InvalidField;
      h.mode = static_cast<Mode>(m);
      h.tick = r.u64();
      h.sensor_count = r.u16();
      h.particle_count = r.u32();
      h.room = r.f32x3();
      h.band = r.u8();
      out = h;
      return DecodeStatus::Ok;
    }
    case FrameType::Sensors: {
      const std::size_t rec = mode == Mode::Full ? kSensorFullRecord : kSensorDeltaRecord;
      if (n % rec != 0) return DecodeStatus::TrailingBytes;
      if (mode == Mode::Full) {
        SensorsFull s;
        s.records.resize(n / rec);
        for (auto& x : s.records) {
          x.id = r.u16();
          x.position = r.f32x3();
          x.value = r.f32();
        }
        out = std::move(s);
      } else {
        SensorsDelta s;
        s.records.resize(n / rec);
        for (auto& x : s.records) {
          x.id = r.u16();
          x.value = r.f32();
        }
        out = std::move(s);
      }
      return DecodeStatus::Ok;
    }
    case FrameType::Particles: {
      const std::size_t rec = mode == Mode::Full ? kParticleFullRecord : kParticleDeltaRecord;
      if (n % rec != 0) return DecodeStatus::TrailingBytes;
      if (mode == Mode::Full) {
        ParticlesFull p;
        p.records.resize(n / rec);
        for (auto& x : p.records) {
          x.id = r.u32();
          x.position = r.f32x3();
          x.value = r.f32();
        }
        out = std::move(p);
      } else {
        ParticlesDelta p;
        p.records.resize(n / rec);
        for (auto& x : p.records) {
          x.id = r.u32();
          x.value = r.f32();
        }
        out = std::move(p);
      }
      return DecodeStatus::Ok;
    }
    case FrameType::Footer: {
      if (auto s = fixed_size(n, kFooterPayloadSize); s != DecodeStatus::Ok) return s;
      Footer f;
      f.tick = r.u64();
      f.crc = r.u32();
      out = f;
      return DecodeStatus::Ok;
    }
    case FrameType::Ack: {
      if (auto s = fixed_size(n, kAckPayloadSize); s != DecodeStatus::Ok) return s;
      Ack a;
      const auto t = r.u8();
      a.status = r.u8();
      if (!valid_frame_type(t) || a.status > 1) return DecodeStatus::InvalidField;
      a.acked = static_cast<FrameType>(t);
      out = a;
      return DecodeStatus::Ok;
    }
    case FrameType::Command: {
      if (n < 1) return DecodeStatus::ShortPayload;
      Command c;
      const auto code = r.u8();
      switch (code) {
        case 1:
          if (auto s = fixed_size(n, 13); s != DecodeStatus::Ok) return s;
          c.code = CommandCode::SetViewpoint;
          c.viewpoint = r.f32x3();
          break;
        case 2: {
          if (auto s = fixed_size(n, 2); s != DecodeStatus::Ok) return s;
          c.code = CommandCode::SetMode;
          const auto m = r.u8();
          if (!valid_mode(m)) return DecodeStatus::InvalidField;
          c.mode = static_cast<Mode>(m);
          break;
        }
        case 3:
          if (auto s = fixed_size(n, 1); s != DecodeStatus::Ok) return s;
          c.code = CommandCode::RequestFull;
          break;
        default:
          return DecodeStatus::InvalidField;
      }
      out = c;
      return DecodeStatus::Ok;
    }
  }
  return DecodeStatus::UnknownFrameType;
}

DecodeStatus decode(std::span<const std::uint8_t> bytes, Mode mode, Message& out, std::uint32_t max_payload) {
  const auto frame = decode_frame(bytes, max_payload);
  if (frame.status != DecodeStatus::Ok) return frame.status;
  if (frame.consumed != bytes.size()) return DecodeStatus::TrailingBytes;
  return decode_payload(frame.frame.type, frame.frame.payload, mode, out);
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t crc) {
  // zlib takes uInt lengths; feed in chunks.
  std::size_t offset = 0;
  uLong value = crc;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    value = ::crc32(value, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(value);
}

std::vector<ValueUpdate> delta_payload(const std::vector<float>& last_sent, std::span<const float> current,
                                       double epsilon) {
  std::vector<ValueUpdate> out;
  for (std::size_t id = 0; id < current.size(); ++id) {
    const float last = id < last_sent.size() ? last_sent[id] : std::numeric_limits<float>::quiet_NaN();
    if (needs_send(current[id], last, epsilon)) out.push_back({static_cast<std::uint32_t>(id), current[id]});
  }
  return out;
}

}  // namespace thermoviz::wire
