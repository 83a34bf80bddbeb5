#include "affect/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "affect/error.hpp"

namespace affect {

namespace {

constexpr int kWavSampleRate = 22050;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8 & 0xFF));
  out.push_back(static_cast<char>(v >> 16 & 0xFF));
  out.push_back(static_cast<char>(v >> 24 & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8 & 0xFF));
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path);
  return bytes;
}

}  // namespace

std::vector<double> load_wav(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ParseError(path + " is not a RIFF/WAVE file", 1);
  }

  bool have_fmt = false;
  std::vector<double> samples;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t chunk_size = read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      throw ParseError(path + ": truncated chunk '" + std::string(id, 4) + "'", 1);
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw ParseError(path + ": fmt chunk too small", 1);
      const std::uint16_t format = read_u16(bytes.data() + body);
      const std::uint16_t channels = read_u16(bytes.data() + body + 2);
      const std::uint32_t rate = read_u32(bytes.data() + body + 4);
      const std::uint16_t bits = read_u16(bytes.data() + body + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        throw DataError(path + ": expected mono 16-bit PCM, got format " +
                        std::to_string(format) + ", " + std::to_string(channels) +
                        " channel(s), " + std::to_string(bits) + " bits");
      }
      if (rate != kWavSampleRate) {
        throw DataError(path + ": expected " + std::to_string(kWavSampleRate) +
                        " Hz, got " + std::to_string(rate));
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw ParseError(path + ": data chunk before fmt chunk", 1);
      samples.reserve(chunk_size / 2);
      for (std::size_t i = 0; i + 1 < chunk_size; i += 2) {
        const auto v = static_cast<std::int16_t>(read_u16(bytes.data() + body + i));
        samples.push_back(v / 32767.0);
      }
      return samples;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  throw ParseError(path + ": no data chunk", 1);
}

void save_wav(const std::string& path, const std::vector<double>& samples) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size()) * 2;
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, kWavSampleRate);
  put_u32(out, kWavSampleRate * 2);  // byte rate
  put_u16(out, 2);                   // block align
  put_u16(out, 16);                  // bits
  out += "data";
  put_u32(out, data_bytes);
  for (const double s : samples) {
    const double clamped = std::min(1.0, std::max(-1.0, s));
    put_u16(out, static_cast<std::uint16_t>(
                     static_cast<std::int16_t>(std::lround(clamped * 32767.0))));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path);
}

std::vector<double> load_raw_f32(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  if (bytes.size() % 4 != 0) {
    throw DataError(path + ": raw f32 size " + std::to_string(bytes.size()) +
                    " is not a multiple of 4");
  }
  std::vector<double> samples(bytes.size() / 4);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::uint32_t u = read_u32(bytes.data() + i * 4);
    float f;
    std::memcpy(&f, &u, 4);
    samples[i] = f;
  }
  return samples;
}

void save_raw_f32(const std::string& path, const std::vector<double>& samples) {
  std::string out;
  out.reserve(samples.size() * 4);
  for (const double s : samples) {
    const auto f = static_cast<float>(s);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(out, u);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path);
}

}  // namespace affect
