#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "thermoviz/channel.hpp"
#include "thermoviz/protocol.hpp"

namespace thermoviz::client {

class ChecksumMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConnectionLost : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Process exit statuses of the client CLI.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConnectionRefused = 2,
  kProtocolViolation = 3,
  kChecksumMismatch = 4,
  kConnectionLost = 5,
  kVerifyFailed = 6,
};

/// What the client knows about the server field: the last HEADER, sensors and
/// particles ordered by id. Delta cycles update values in place; positions
/// come from the last full cycle.
struct Mirror {
  wire::Header header;
  std::vector<wire::SensorRecord> sensors;
  std::vector<wire::ParticleRecord> particles;
  bool complete = false;  // at least one full cycle applied

  /// Index of particle `id`, or nullopt.
  std::optional<std::size_t> find(std::uint32_t id) const;
};

struct CycleReport {
  std::uint64_t cycle = 0;
  std::uint64_t tick = 0;
  int band = 0;
  wire::Mode mode = wire::Mode::Full;
  std::size_t points = 0;       // HEADER particle count
  std::size_t sensor_records = 0;
  std::size_t particle_records = 0;
  std::size_t sensor_bytes = 0;
  std::size_t particle_bytes = 0;
  bool crc_ok = true;
  std::optional<wire::Command> command;  // sent in place of the footer ACK
};

/// One JSON object per line.
std::string to_json_line(const CycleReport& report, double elapsed_ms);

/// Client side of the five-step exchange over one channel.
class Client {
 public:
  explicit Client(std::unique_ptr<FrameChannel> channel);

  using CommandHook = std::function<std::optional<wire::Command>()>;

  /// Receives HEADER, SENSORS, PARTICLES and FOOTER, acknowledging each, and
  /// applies the cycle to the mirror once the checksum matches. `at_footer`
  /// is asked, after the footer arrived, for a command to send instead of the
  /// final ACK. Throws ProtocolError, ChecksumMismatch or ConnectionLost.
  CycleReport run_cycle(const CommandHook& at_footer = {});
  CycleReport run_cycle(std::optional<wire::Command> command) {
    return run_cycle([&] { return command; });
  }

  const Mirror& mirror() const { return mirror_; }
  std::uint64_t cycles() const { return cycles_; }
  /// HEADER band of every cycle so far.
  const std::vector<int>& band_history() const { return bands_; }
  void close() { channel_->close(); }

 private:
  wire::RawFrame expect(wire::FrameType type);
  void ack(wire::FrameType type, std::uint8_t status = 0);

  std::unique_ptr<FrameChannel> channel_;
  Mirror mirror_;
  std::uint64_t cycles_ = 0;
  std::vector<int> bands_;
};

wire::Command set_viewpoint(const Eigen::Vector3d& cm);
wire::Command set_mode(wire::Mode mode);
wire::Command request_full();

/// One camera position of a script: `at` after the start of the run.
struct ScriptStep {
  std::chrono::milliseconds at{0};
  Eigen::Vector3d viewpoint = Eigen::Vector3d::Zero();  // centimeters
};

/// Reads a `t_ms,x,y,z` CSV; a non-numeric first line is taken as a header.
/// Steps are returned in time order.
std::vector<ScriptStep> load_script(const std::filesystem::path& path);

struct RunOptions {
  std::size_t tail_cycles = 3;  // cycles to run after the last command
  std::size_t max_cycles = 0;   // 0: no cap
};

/// Drives `client` through `script`, sending SET_VIEWPOINT at the footer step
/// for the latest step that has come due. Writes and flushes one report line
/// per cycle. Exceptions propagate after the lines so far are written.
std::vector<CycleReport> run_script(Client& client, const std::vector<ScriptStep>& script, std::ostream& report,
                                    const RunOptions& options = {});

/// Points ordered by id as `x,y,z,value` rows under a header line.
void export_csv(const Mirror& mirror, std::ostream& out);
/// ASCII PLY point cloud with a float `value` property per vertex.
void export_ply(const Mirror& mirror, std::ostream& out);
/// Writes `path` in `format` ("csv" or "ply"). Throws std::runtime_error when
/// the mirror has not seen a full cycle yet.
void export_snapshot(const Mirror& mirror, const std::filesystem::path& path, const std::string& format);

struct VerifyOptions {
  double epsilon = 0.01;               // per-particle tolerance, matches the server's
  std::size_t quiet_cycles = 8;        // consecutive empty delta cycles taken as a steady field (covers every diffusion wave)
  std::size_t settle_cycles = 100;     // give up waiting for a steady field after this many
  std::vector<double> thresholds{500, 1000, 1500, 2000};  // band upper edges, cm
  std::optional<std::uint32_t> mutate;  // planted fault: perturb this particle before comparing
};

struct CheckResult {
  enum class Outcome { Pass, Fail, Skip };
  std::string name;
  Outcome outcome = Outcome::Skip;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool passed() const;
};

std::string to_string(CheckResult::Outcome outcome);

/// Runs the client-side checks against a live server:
///  - crc: every FOOTER checksum matched its payloads;
///  - delta_soundness: once the field is steady, the delta-maintained mirror
///    equals a freshly requested full cycle within epsilon;
///  - band_switch: a viewpoint crossing a threshold changes the band in the
///    very next HEADER.
/// Check failures are report entries; connection problems still throw.
VerifyReport verify(Client& client, const VerifyOptions& options = {});

/// First particle whose values differ by more than `tolerance`, comparing two
/// mirrors with the same id set. A missing id counts as a difference.
std::optional<std::string> compare_mirrors(const Mirror& expected, const Mirror& actual, double tolerance);

}  // namespace thermoviz::client
