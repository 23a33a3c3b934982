#include "thermoviz/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <thread>

#include "csv.hpp"

namespace thermoviz {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// [0, 1) from the top 53 bits; avoids implementation-defined distributions.
double unit_interval(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

}  // namespace

bool sleep_until(std::chrono::steady_clock::time_point deadline, const std::stop_token& stop) {
  using namespace std::chrono_literals;
  while (std::chrono::steady_clock::now() < deadline) {
    if (stop.stop_requested()) return false;
    std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(deadline - std::chrono::steady_clock::now(), 20ms));
  }
  return !stop.stop_requested();
}

CsvReplay::CsvReplay(const std::filesystem::path& path, double speed, const std::set<SensorId>& known_ids,
                     std::string channel)
    : speed_(speed) {
  if (speed < 0) throw InvalidArgument("replay speed must be >= 0");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open readings file " + path.string());

  std::string line;
  if (!std::getline(in, line) || csv::trim(line).empty()) {
    throw std::runtime_error(path.string() + ": empty readings file");
  }
  const auto header = csv::split(line);
  const bool has_channel = header.size() == 4 && header[3] == "channel";
  if (header.size() < 3 || header[0] != "timestamp" || header[1] != "sensor_id" || header[2] != "value" ||
      (header.size() == 4 && !has_channel) || header.size() > 4) {
    throw std::runtime_error(path.string() + ": expected header timestamp,sensor_id,value[,channel]");
  }

  struct Row {
    std::uint64_t timestamp;
    SensorId id;
    double value;
  };
  std::vector<Row> rows;
  for (int line_no = 2; std::getline(in, line); ++line_no) {
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    const bool shape_ok = f.size() == header.size();
    const auto ts = shape_ok ? csv::parse_number<std::uint64_t>(f[0]) : std::nullopt;
    const auto id = shape_ok ? csv::parse_number<unsigned>(f[1]) : std::nullopt;
    const auto value = shape_ok ? csv::parse_number<double>(f[2]) : std::nullopt;
    if (!ts || !id || !value || *id > 0xFFFF || !std::isfinite(*value)) {
      throw std::runtime_error(path.string() + ": malformed row at line " + std::to_string(line_no));
    }
    if (has_channel && f[3] != channel) continue;
    if (!known_ids.contains(static_cast<SensorId>(*id))) {
      warnings_.push_back("line " + std::to_string(line_no) + ": unknown sensor id " + std::to_string(*id) +
                          " skipped");
      continue;
    }
    rows.push_back({*ts, static_cast<SensorId>(*id), *value});
  }
  if (rows.empty() && warnings_.empty()) throw std::runtime_error(path.string() + ": empty readings file");

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.timestamp < b.timestamp; });
  for (const auto& r : rows) {
    if (batches_.empty() || batches_.back().tick != r.timestamp) batches_.push_back({r.timestamp, {}});
    batches_.back().readings[r.id] = r.value;
  }
}

std::vector<std::chrono::milliseconds> CsvReplay::offsets() const {
  std::vector<std::chrono::milliseconds> out;
  for (const auto& b : batches_) {
    if (speed_ == 0) {
      out.emplace_back(0);
    } else {
      const double ms = static_cast<double>(b.tick - batches_.front().tick) / speed_;
      out.emplace_back(static_cast<std::int64_t>(std::llround(ms)));
    }
  }
  return out;
}

std::optional<ReadingBatch> CsvReplay::next(std::stop_token stop) {
  if (cursor_ >= batches_.size() || stop.stop_requested()) return std::nullopt;
  if (!start_) start_ = std::chrono::steady_clock::now();
  if (speed_ > 0) {
    const double ms = static_cast<double>(batches_[cursor_].tick - batches_.front().tick) / speed_;
    const auto due = *start_ + std::chrono::microseconds(static_cast<std::int64_t>(ms * 1000));
    if (!sleep_until(due, stop)) return std::nullopt;
  }
  return batches_[cursor_++];
}

std::unique_ptr<CsvReplay> replay_csv(const std::filesystem::path& path, double speed,
                                      const std::set<SensorId>& known_ids, std::string channel) {
  return std::make_unique<CsvReplay>(path, speed, known_ids, std::move(channel));
}

SyntheticStream::SyntheticStream(const SensorSet& sensors, std::uint64_t seed, std::chrono::milliseconds period,
                                 SyntheticParams params)
    : seed_(seed), period_(period), params_(params) {
  if (period.count() <= 0) throw InvalidArgument("synthetic period must be positive");
  std::mt19937_64 rng(seed);
  for (const auto& s : sensors.sensors()) {
    ids_.push_back(s.id);
    phases_.push_back(2 * std::numbers::pi * unit_interval(rng()));
  }
}

ReadingBatch SyntheticStream::generate(std::uint64_t tick) const {
  ReadingBatch batch{tick, {}};
  std::mt19937_64 rng(splitmix64(seed_ ^ splitmix64(tick)));
  const double t = static_cast<double>(tick) * std::chrono::duration<double>(period_).count();
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const double wave = params_.amplitude * std::sin(2 * std::numbers::pi * t / params_.period_s + phases_[i]);
    const double jitter = params_.noise == 0 ? 0.0 : (2 * unit_interval(rng()) - 1) * params_.noise;
    batch.readings[ids_[i]] = params_.base + wave + jitter;
  }
  return batch;
}

std::optional<ReadingBatch> SyntheticStream::next(std::stop_token stop) {
  if (!start_) start_ = std::chrono::steady_clock::now();
  if (!sleep_until(*start_ + period_ * static_cast<std::int64_t>(tick_), stop)) return std::nullopt;
  return generate(tick_++);
}

std::unique_ptr<SyntheticStream> synthetic_stream(const SensorSet& sensors, std::uint64_t seed,
                                                  std::chrono::milliseconds period, SyntheticParams params) {
  return std::make_unique<SyntheticStream>(sensors, seed, period, params);
}

}  // namespace thermoviz
