#pragma once

#include <cstdint>
#include <random>

namespace fsra {

using Rng = std::mt19937_64;

enum class Stream : std::uint32_t {
  activity = 1,
  channel = 2,
  channel_error = 3,
  noise = 4,
  data = 5,
};

// Test frames and threshold-calibration frames never share a substream.
enum class Purpose : std::uint32_t { test = 0, validation = 1 };

// Independent generator keyed by (seed, point, frame, stream, purpose).
inline Rng substream(std::uint64_t seed, std::uint64_t point, std::uint64_t frame, Stream stream,
                     Purpose purpose = Purpose::test) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed),  hi(seed),  lo(point),
                    hi(point), lo(frame), hi(frame),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

struct FrameStreams {
  Rng activity;
  Rng channel;
  Rng channel_error;
  Rng noise;
  Rng data;

  static FrameStreams derive(std::uint64_t seed, std::uint64_t point, std::uint64_t frame,
                             Purpose purpose = Purpose::test) {
    return {substream(seed, point, frame, Stream::activity, purpose),
            substream(seed, point, frame, Stream::channel, purpose),
            substream(seed, point, frame, Stream::channel_error, purpose),
            substream(seed, point, frame, Stream::noise, purpose),
            substream(seed, point, frame, Stream::data, purpose)};
  }
};

}  // namespace fsra
