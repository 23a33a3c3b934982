#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "thermoviz/field_model.hpp"

// Binary wire format. Every frame is
//
//   magic 'D' 'C' | version u8 (=1) | frame_type u8 | payload_length u32 | payload
//
// with all multi-byte integers and f32 fields little-endian. Payload layouts:
//
//   HEADER     mode u8, tick u64, sensor_count u16, particle_count u32,
//              room l,w,h f32 x3, band u8                              (28 bytes)
//   SENSORS    full: {id u16, x,y,z f32, value f32}*   delta: {id u16, value f32}*
//   PARTICLES  full: {id u32, x,y,z f32, value f32}*   delta: {id u32, value f32}*
//   FOOTER     tick u64, crc32 u32 over the tick's SENSORS+PARTICLES payloads
//   ACK        acked_type u8, status u8 (0 ok, 1 error)
//   COMMAND    cmd u8, then SET_VIEWPOINT: x,y,z f32 (cm) | SET_MODE: mode u8 | REQUEST_FULL: -
namespace thermoviz::wire {

inline constexpr std::uint8_t kMagic0 = 0x44;
inline constexpr std::uint8_t kMagic1 = 0x43;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 8;
inline constexpr std::uint32_t kDefaultMaxPayload = 16u << 20;

inline constexpr std::size_t kHeaderPayloadSize = 28;
inline constexpr std::size_t kSensorFullRecord = 18;
inline constexpr std::size_t kSensorDeltaRecord = 6;
inline constexpr std::size_t kParticleFullRecord = 20;
inline constexpr std::size_t kParticleDeltaRecord = 8;
inline constexpr std::size_t kFooterPayloadSize = 12;
inline constexpr std::size_t kAckPayloadSize = 2;

enum class FrameType : std::uint8_t { Header = 1, Sensors = 2, Particles = 3, Footer = 4, Ack = 5, Command = 6 };
enum class Mode : std::uint8_t { Full = 0, Delta = 1 };
enum class CommandCode : std::uint8_t { SetViewpoint = 1, SetMode = 2, RequestFull = 3 };

std::string_view to_string(FrameType type);
std::string_view to_string(Mode mode);

struct Header {
  Mode mode = Mode::Full;
  std::uint64_t tick = 0;
  std::uint16_t sensor_count = 0;
  std::uint32_t particle_count = 0;
  std::array<float, 3> room{};  // l, w, h in meters
  std::uint8_t band = 0;
  friend bool operator==(const Header&, const Header&) = default;
};

struct SensorRecord {
  std::uint16_t id = 0;
  std::array<float, 3> position{};
  float value = 0;
  friend bool operator==(const SensorRecord&, const SensorRecord&) = default;
};

struct SensorUpdate {
  std::uint16_t id = 0;
  float value = 0;
  friend bool operator==(const SensorUpdate&, const SensorUpdate&) = default;
};

struct ParticleRecord {
  std::uint32_t id = 0;
  std::array<float, 3> position{};
  float value = 0;
  friend bool operator==(const ParticleRecord&, const ParticleRecord&) = default;
};

struct SensorsFull {
  std::vector<SensorRecord> records;
  friend bool operator==(const SensorsFull&, const SensorsFull&) = default;
};
struct SensorsDelta {
  std::vector<SensorUpdate> records;
  friend bool operator==(const SensorsDelta&, const SensorsDelta&) = default;
};
struct ParticlesFull {
  std::vector<ParticleRecord> records;
  friend bool operator==(const ParticlesFull&, const ParticlesFull&) = default;
};
struct ParticlesDelta {
  std::vector<ValueUpdate> records;
  friend bool operator==(const ParticlesDelta&, const ParticlesDelta&) = default;
};

struct Footer {
  std::uint64_t tick = 0;
  std::uint32_t crc = 0;
  friend bool operator==(const Footer&, const Footer&) = default;
};

struct Ack {
  FrameType acked = FrameType::Header;
  std::uint8_t status = 0;
  friend bool operator==(const Ack&, const Ack&) = default;
};

struct Command {
  CommandCode code = CommandCode::RequestFull;
  std::array<float, 3> viewpoint{};  // SetViewpoint only, centimeters
  Mode mode = Mode::Full;            // SetMode only
  friend bool operator==(const Command&, const Command&) = default;
};

using Message = std::variant<Header, SensorsFull, SensorsDelta, ParticlesFull, ParticlesDelta, Footer, Ack, Command>;

FrameType frame_type(const Message& message);

/// The mode a SENSORS/PARTICLES message is encoded in (Full for other types).
Mode payload_mode(const Message& message);

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_payload(const Message& message);

/// Wraps `payload` in a frame header. Throws EncodeError when the payload
/// exceeds kDefaultMaxPayload.
std::vector<std::uint8_t> encode_frame(FrameType type, std::span<const std::uint8_t> payload);

inline std::vector<std::uint8_t> encode(const Message& message) {
  return encode_frame(frame_type(message), encode_payload(message));
}

enum class DecodeStatus : std::uint8_t {
  Ok,
  NeedMoreBytes,
  BadMagic,
  UnknownVersion,
  UnknownFrameType,
  LengthOverrun,   // payload_length above the configured maximum
  TrailingBytes,   // payload longer than its layout, or not a whole number of records
  ShortPayload,    // fixed-size payload shorter than its layout
  InvalidField,    // enum field out of range inside the payload
};

std::string_view to_string(DecodeStatus status);

struct RawFrame {
  FrameType type = FrameType::Header;
  std::vector<std::uint8_t> payload;
};

struct FrameDecode {
  DecodeStatus status = DecodeStatus::NeedMoreBytes;
  RawFrame frame;
  std::size_t consumed = 0;  // bytes to drop from the input on Ok; 0 otherwise
};

/// Decodes the first frame in `bytes`. Never reads past `bytes`, never
/// allocates more than `max_payload`, consumes nothing unless Ok.
FrameDecode decode_frame(std::span<const std::uint8_t> bytes, std::uint32_t max_payload = kDefaultMaxPayload);

/// Typed payload decode. SENSORS and PARTICLES record sizes depend on `mode`,
/// which the receiver takes from the cycle's HEADER.
DecodeStatus decode_payload(FrameType type, std::span<const std::uint8_t> payload, Mode mode, Message& out);

/// Frame plus payload in one call.
DecodeStatus decode(std::span<const std::uint8_t> bytes, Mode mode, Message& out,
                    std::uint32_t max_payload = kDefaultMaxPayload);

/// CRC-32 (IEEE 802.3 polynomial), chainable through `crc`.
std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t crc = 0);

/// Ids whose current value differs from what was last sent by more than
/// `epsilon`, or that were never sent (NaN). `last_sent` is indexed by id.
std::vector<ValueUpdate> delta_payload(const std::vector<float>& last_sent, std::span<const float> current,
                                       double epsilon);

}  // namespace thermoviz::wire
