#include <doctest.h>

#include <random>

#include "harness.hpp"

using namespace thermoviz;
using harness::LoopbackSession;

namespace {

FieldEngine make(EngineOptions options = {}) {
  return FieldEngine(Room{}, GridDims{}, harness::default_sensors(), std::move(options));
}

ReadingBatch random_batch(const FieldEngine& engine, std::mt19937& rng, double p_change = 0.5) {
  std::uniform_real_distribution<double> value(14.0, 30.0);
  std::bernoulli_distribution change(p_change);
  ReadingBatch batch;
  for (const auto& s : engine.sensors().sensors()) {
    if (change(rng)) batch.readings[s.id] = value(rng);
  }
  return batch;
}

// Exact comparison of the client mirror with the server's level at the same tick.
void check_mirror_exact(const client::Mirror& mirror, const EncodedLevel& level, const FieldSnapshot& snap) {
  REQUIRE(mirror.particles.size() == level.size());
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < level.size(); ++i) {
    mismatched += mirror.particles[i].id != level.layout->ids[i] || mirror.particles[i].value != level.values_f32[i];
  }
  CHECK(mismatched == 0);
  REQUIRE(mirror.sensors.size() == snap.sensor_values.size());
  for (std::size_t i = 0; i < mirror.sensors.size(); ++i) CHECK(mirror.sensors[i].value == snap.sensor_values[i]);
}

}  // namespace

TEST_CASE("full cycles carry the band's level for the newest tick") {
  auto engine = make();
  SessionOptions options;
  options.viewpoint = harness::at_distance(engine, 750);
  LoopbackSession session(engine, options);
  client::Client c(session.take());

  // Latest wins: three ticks land before the footer ACK releases the server,
  // so the next cycle serves only the newest of them.
  const auto r0 = c.run_cycle([&]() -> std::optional<wire::Command> {
    engine.tick({});
    engine.tick({});
    engine.tick({0, {{engine.sensors()[0].id, 27.0}}});
    return std::nullopt;
  });
  CHECK(r0.tick == 0);
  CHECK(r0.band == 1);
  CHECK(r0.mode == wire::Mode::Full);
  CHECK(r0.points == 30000);
  CHECK(r0.particle_bytes == 30000 * wire::kParticleFullRecord);
  CHECK(r0.sensor_bytes == 35 * wire::kSensorFullRecord);

  const auto r1 = c.run_cycle(std::nullopt);
  CHECK(r1.tick == 3);
  check_mirror_exact(c.mirror(), *engine.level(engine.latest(), 1), *engine.latest());
  // The server commits once it has read the final ACK, just after run_cycle returns.
  for (int i = 0; i < 1000 && session.status().cycles < 2; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  CHECK(session.status().cycles == 2);
  CHECK(session.status().band == 1);
}

TEST_CASE("viewpoint commands switch bands on the next cycle") {
  auto engine = make();
  SessionOptions options;
  options.viewpoint = harness::at_distance(engine, 250);
  LoopbackSession session(engine, options);
  client::Client c(session.take());

  CHECK(c.run_cycle(std::nullopt).points == 120000);
  const std::vector<std::pair<double, std::size_t>> steps{{750, 30000}, {1250, 7500}, {1750, 1875}, {450, 120000}};
  int expected_band = 0;
  for (const auto& [distance, points] : steps) {
    engine.tick({});
    const auto r = c.run_cycle(client::set_viewpoint(harness::at_distance(engine, distance)));
    CHECK(r.band == expected_band);
    engine.tick({});
    const auto next = c.run_cycle(std::nullopt);
    CHECK(next.points == points);
    CHECK(next.mode == wire::Mode::Full);
    expected_band = next.band;
  }
  CHECK(c.band_history() == std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3, 0});
}

TEST_CASE("delta cycles keep the mirror exact at zero tolerance") {
  for (const bool diffusion : {false, true}) {
    CAPTURE(diffusion);
    EngineOptions eo;
    eo.diffusion = diffusion;
    auto engine = make(eo);
    SessionOptions options;
    options.mode = wire::Mode::Delta;
    options.epsilon_v = 0.0;
    options.diffusion = diffusion;
    options.viewpoint = harness::at_distance(engine, 750);
    LoopbackSession session(engine, options);
    client::Client c(session.take());
    std::mt19937 rng(11);

    CHECK(c.run_cycle(std::nullopt).mode == wire::Mode::Full);
    for (int i = 0; i < 20; ++i) {
      engine.tick(random_batch(engine, rng));
      const auto r = c.run_cycle(std::nullopt);
      CHECK(r.mode == wire::Mode::Delta);
      CHECK(r.particle_bytes == r.particle_records * wire::kParticleDeltaRecord);
      CHECK(r.particle_bytes <= 30000 * wire::kParticleFullRecord);
      if (!diffusion) check_mirror_exact(c.mirror(), *engine.level(engine.latest(), 1), *engine.latest());
    }
    if (diffusion) {
      // Readings stop changing; one sweep over the waves completes the mirror.
      const auto waves = engine.level(engine.latest(), 1)->layout->schedule->wave_count();
      for (std::size_t w = 0; w < waves; ++w) {
        engine.tick({});
        c.run_cycle(std::nullopt);
      }
      check_mirror_exact(c.mirror(), *engine.level(engine.latest(), 1), *engine.latest());
    }
  }
}

TEST_CASE("delta payloads carry 8 bytes per changed particle") {
  const Room room;
  SensorSet sensors({{1, 0.0, 0.0, 0.0}, {2, 4.0, 0.0, 0.0}, {3, 0.0, 3.0, 0.0}, {4, 0.0, 0.0, 2.0},
                     {5, 4.0, 3.0, 2.0}},
                    {0.0, 2.0}, room);
  EngineOptions eo;
  eo.lod_kind = LodKind::Cluster;
  FieldEngine engine(room, GridDims{2, 2, 2}, sensors, eo);
  SessionOptions options;
  options.mode = wire::Mode::Delta;
  options.epsilon_v = 0.0;
  options.viewpoint = engine.target_cm();
  LoopbackSession session(engine, options);
  client::Client c(session.take());

  const auto full = c.run_cycle(std::nullopt);
  CHECK(full.points == 8);
  CHECK(full.particle_bytes == 8 * 20);
  engine.tick({0, {{5, 21.0}}});
  const auto delta = c.run_cycle(std::nullopt);
  CHECK(delta.mode == wire::Mode::Delta);
  std::size_t expected_changes = 0;
  for (std::size_t p = 0; p < 8; ++p) expected_changes += engine.weights().references(p, 4);
  CHECK(expected_changes >= 1);
  CHECK(expected_changes < 8);
  CHECK(delta.particle_records == expected_changes);
  CHECK(delta.particle_bytes == 8 * expected_changes);
  CHECK(delta.sensor_bytes == 6);
}

TEST_CASE("two clients: own bands from one snapshot, identical bytes within a band") {
  auto engine = make();
  SessionOptions near_opts;
  near_opts.viewpoint = harness::at_distance(engine, 300);
  SessionOptions far_opts;
  far_opts.viewpoint = harness::at_distance(engine, 1600);
  engine.tick({0, {{engine.sensors()[2].id, 31.0}}});
  LoopbackSession a(engine, near_opts);
  LoopbackSession b(engine, far_opts);
  LoopbackSession c(engine, near_opts);
  const auto fa = harness::raw_cycle(a.raw());
  const auto fb = harness::raw_cycle(b.raw());
  const auto fc = harness::raw_cycle(c.raw());
  wire::Message m;
  REQUIRE(wire::decode_payload(fa[0].type, fa[0].payload, wire::Mode::Full, m) == wire::DecodeStatus::Ok);
  const auto ha = std::get<wire::Header>(m);
  REQUIRE(wire::decode_payload(fb[0].type, fb[0].payload, wire::Mode::Full, m) == wire::DecodeStatus::Ok);
  const auto hb = std::get<wire::Header>(m);
  CHECK(ha.tick == hb.tick);
  CHECK(ha.band == 0);
  CHECK(ha.particle_count == 120000);
  CHECK(hb.band == 3);
  CHECK(hb.particle_count == 1875);
  for (int i = 0; i < 4; ++i) CHECK(fa[static_cast<std::size_t>(i)].payload == fc[static_cast<std::size_t>(i)].payload);
}

TEST_CASE("ticks delivered to one client strictly increase") {
  auto engine = make();
  SessionOptions options;
  options.mode = wire::Mode::Delta;
  LoopbackSession session(engine, options);
  client::Client c(session.take());
  std::jthread ticker([&](std::stop_token stop) {
    while (!stop.stop_requested()) {
      engine.tick({});
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  });
  std::uint64_t last = 0;
  for (int i = 0; i < 50; ++i) {
    const auto r = c.run_cycle(std::nullopt);
    if (i > 0) CHECK(r.tick > last);
    last = r.tick;
  }
}

TEST_CASE("REQUEST_FULL and SET_MODE steer the cycle mode") {
  auto engine = make();
  SessionOptions options;
  options.viewpoint = harness::at_distance(engine, 1600);
  LoopbackSession session(engine, options);
  client::Client c(session.take());
  CHECK(c.run_cycle(client::set_mode(wire::Mode::Delta)).mode == wire::Mode::Full);
  engine.tick({});
  CHECK(c.run_cycle(client::request_full()).mode == wire::Mode::Delta);
  engine.tick({});
  CHECK(c.run_cycle(std::nullopt).mode == wire::Mode::Full);
  engine.tick({});
  CHECK(c.run_cycle(client::set_mode(wire::Mode::Full)).mode == wire::Mode::Delta);
  engine.tick({});
  CHECK(c.run_cycle(std::nullopt).mode == wire::Mode::Full);
}

TEST_CASE("a well-formed out-of-phase frame resets the cycle") {
  auto engine = make();
  SessionOptions options;
  options.mode = wire::Mode::Delta;
  options.viewpoint = harness::at_distance(engine, 1600);
  LoopbackSession session(engine, options);
  auto& ch = session.raw();
  (void)harness::raw_cycle(ch);  // full cycle, tick 0

  engine.tick({});
  auto header = ch.receive();
  REQUIRE(header);
  CHECK(header->type == wire::FrameType::Header);
  // A client may not send FOOTER frames at all.
  ch.send(wire::encode(wire::Footer{1, 0}));

  engine.tick({});
  const auto frames = harness::raw_cycle(ch);
  wire::Message m;
  REQUIRE(wire::decode_payload(frames[0].type, frames[0].payload, wire::Mode::Full, m) == wire::DecodeStatus::Ok);
  CHECK(std::get<wire::Header>(m).mode == wire::Mode::Full);
  CHECK(std::get<wire::Header>(m).tick == 2);
  CHECK(session.status().violations == 1);
}

TEST_CASE("undecodable bytes end the session") {
  auto engine = make();
  SessionOptions options;
  options.viewpoint = harness::at_distance(engine, 1600);
  LoopbackSession session(engine, options);
  auto& ch = session.raw();
  REQUIRE(ch.receive());
  const std::vector<std::uint8_t> junk{'X', 'Y', 1, 5, 2, 0, 0, 0, 0, 0};
  ch.send(junk);
  session.join();
  CHECK(session.finished());
}

TEST_CASE("the session ends when the client goes away") {
  auto engine = make();
  LoopbackSession session(engine, {});
  session.raw().close();
  session.join();
  CHECK(session.finished());
}
