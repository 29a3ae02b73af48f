#pragma once

// RIFF/WAVE PCM reader and writer (16-bit signed little-endian, mono).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sslse {

struct WavData {
  std::uint32_t sample_rate = 16000;
  std::vector<float> samples;  // in [-1, 1)
};

namespace detail {

inline void put_u16(std::vector<char>& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xFF));
  b.push_back(static_cast<char>(v >> 8));
}
inline void put_u32(std::vector<char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t get_u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

}  // namespace detail

inline std::int16_t float_to_pcm16(float v) {
  const double s = std::nearbyint(static_cast<double>(v) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(s, -32768.0, 32767.0));
}

inline std::vector<char> encode_wav(const WavData& wav) {
  const auto data_bytes = static_cast<std::uint32_t>(wav.samples.size() * 2);
  std::vector<char> b;
  b.reserve(44 + data_bytes);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(b, 36 + data_bytes);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(b, 16);
  detail::put_u16(b, 1);  // PCM
  detail::put_u16(b, 1);  // mono
  detail::put_u32(b, wav.sample_rate);
  detail::put_u32(b, wav.sample_rate * 2);
  detail::put_u16(b, 2);
  detail::put_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(b, data_bytes);
  for (float v : wav.samples) detail::put_u16(b, static_cast<std::uint16_t>(float_to_pcm16(v)));
  return b;
}

inline WavData decode_wav(const std::vector<unsigned char>& bytes, const std::string& what = "wav") {
  auto fail = [&](const std::string& why) { throw std::runtime_error(what + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail("not a RIFF/WAVE file");
  WavData out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::get_u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) fail("truncated chunk");
    const unsigned char* body = chunk + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) fail("short fmt chunk");
      if (detail::get_u16(body) != 1) fail("only PCM encoding is supported");
      if (detail::get_u16(body + 2) != 1) fail("only mono audio is supported");
      out.sample_rate = detail::get_u32(body + 4);
      if (detail::get_u16(body + 14) != 16) fail("only 16-bit samples are supported");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) fail("data chunk before fmt chunk");
      out.samples.resize(size / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] = static_cast<float>(static_cast<std::int16_t>(detail::get_u16(body + 2 * i))) / 32768.0f;
      return out;
    }
    pos += 8 + size + (size & 1);
  }
  fail("missing data chunk");
  return out;
}

inline void write_wav(const std::filesystem::path& path, const WavData& wav) {
  auto bytes = encode_wav(wav);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline WavData read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

}  // namespace sslse
