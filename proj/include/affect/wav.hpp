#pragma once

#include <string>
#include <vector>

namespace affect {

// Audio IO. Two on-disk forms are supported: classic 16-bit PCM WAV
// (mono, 22050 Hz) and headerless 32-bit little-endian float ("raw f32").
// In memory samples are doubles in [-1, 1].

// Reads a mono 16-bit PCM WAV file. Unknown RIFF chunks are skipped.
// Throws IoError on filesystem trouble, ParseError on malformed headers,
// DataError when the format is not mono/16-bit/22050 Hz PCM.
std::vector<double> load_wav(const std::string& path);

// Writes samples as mono 16-bit PCM at 22050 Hz, clamping to [-1, 1].
void save_wav(const std::string& path, const std::vector<double>& samples);

// Headerless little-endian float32 stream.
std::vector<double> load_raw_f32(const std::string& path);
void save_raw_f32(const std::string& path, const std::vector<double>& samples);

}  // namespace affect
