#pragma once

// 16-bit PCM mono WAV reading and writing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtcn/frames.hpp"

namespace dtcn {

struct WavError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  os.write(b, 2);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_le(const unsigned char* p, int n) {
  std::uint32_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
}  // namespace detail

inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw WavError("cannot open for writing: " + path);
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  os.write("RIFF", 4);
  detail::put_u32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  detail::put_u32(os, 16);
  detail::put_u16(os, 1);  // PCM
  detail::put_u16(os, 1);  // mono
  detail::put_u32(os, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(os, static_cast<std::uint32_t>(w.sample_rate) * 2);
  detail::put_u16(os, 2);
  detail::put_u16(os, 16);
  os.write("data", 4);
  detail::put_u32(os, data_bytes);
  for (double x : w.samples) {
    const double s = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    detail::put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
  }
  if (!os) throw WavError("write failed: " + path);
}

inline Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw WavError("cannot open: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::string(buf.begin(), buf.begin() + 4) != "RIFF" || std::string(buf.begin() + 8, buf.begin() + 12) != "WAVE")
    throw WavError("not a RIFF/WAVE file: " + path);
  Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.begin() + pos, buf.begin() + pos + 4);
    const std::size_t size = detail::get_le(&buf[pos + 4], 4);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) throw WavError("truncated chunk '" + id + "' in " + path);
    if (id == "fmt ") {
      if (size < 16) throw WavError("short fmt chunk in " + path);
      const auto format = detail::get_le(&buf[body], 2);
      const auto channels = detail::get_le(&buf[body + 2], 2);
      const auto bits = detail::get_le(&buf[body + 14], 2);
      if (format != 1 || bits != 16) throw WavError("only 16-bit PCM is supported: " + path);
      if (channels != 1) throw WavError("only mono input is supported, got " + std::to_string(channels) + " channels: " + path);
      w.sample_rate = static_cast<int>(detail::get_le(&buf[body + 4], 4));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw WavError("data chunk before fmt chunk in " + path);
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<std::int16_t>(detail::get_le(&buf[body + 2 * i], 2)) / 32768.0;
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw WavError("no data chunk in " + path);
}

}  // namespace dtcn
