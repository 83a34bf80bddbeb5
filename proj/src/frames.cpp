#include "affect/frames.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "affect/error.hpp"
#include "affect/ops.hpp"

namespace affect {

std::vector<WaveformSegment> segment_waveform(const std::vector<double>& audio) {
  std::vector<WaveformSegment> segments;
  for (std::size_t begin = 0; begin < audio.size(); begin += kSegmentSamples) {
    const std::size_t end = std::min(audio.size(), begin + kSegmentSamples);
    WaveformSegment seg;
    seg.samples.assign(audio.begin() + static_cast<std::ptrdiff_t>(begin),
                       audio.begin() + static_cast<std::ptrdiff_t>(end));
    seg.valid_samples = static_cast<int>(end - begin);
    seg.samples.resize(kSegmentSamples, 0.0);
    segments.push_back(std::move(seg));
  }
  return segments;
}

void validate_events(const std::vector<WordEvent>& events, double duration) {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const WordEvent& e = events[i];
    if (!(e.start_time >= 0.0 && e.start_time < e.end_time && e.end_time <= duration)) {
      throw ArgumentError("word event '" + e.token + "' has bad span [" +
                          std::to_string(e.start_time) + ", " + std::to_string(e.end_time) +
                          "] within duration " + std::to_string(duration));
    }
    if (i > 0 && events[i - 1].end_time > e.start_time) {
      throw ArgumentError("word events '" + events[i - 1].token + "' and '" + e.token +
                          "' overlap or are out of order");
    }
  }
}

std::map<std::string, std::vector<WordEvent>> load_word_events(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word events " + path);
  std::map<std::string, std::vector<WordEvent>> by_segment;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("segment_id,", 0) == 0) continue;  // header
    std::istringstream ss(line);
    std::string segment, token, start_str, end_str;
    if (!std::getline(ss, segment, ',') || !std::getline(ss, token, ',') ||
        !std::getline(ss, start_str, ',') || !std::getline(ss, end_str)) {
      throw ParseError("word event line needs segment_id,token,start,end", line_no);
    }
    WordEvent e;
    e.token = token;
    try {
      std::size_t used = 0;
      e.start_time = std::stod(start_str, &used);
      if (used != start_str.size()) throw std::invalid_argument(start_str);
      e.end_time = std::stod(end_str, &used);
      if (used != end_str.size()) throw std::invalid_argument(end_str);
    } catch (const std::exception&) {
      throw ParseError("non-numeric time in word event line", line_no);
    }
    by_segment[segment].push_back(std::move(e));
  }
  for (const auto& [segment, events] : by_segment) {
    try {
      validate_events(events);
    } catch (const ArgumentError& err) {
      throw DataError("segment " + segment + ": " + err.what());
    }
  }
  return by_segment;
}

void save_word_events(const std::string& path,
                      const std::map<std::string, std::vector<WordEvent>>& by_segment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write word events " + path);
  out << "segment_id,token,start,end\n";
  char buf[64];
  for (const auto& [segment, events] : by_segment) {
    for (const WordEvent& e : events) {
      std::snprintf(buf, sizeof buf, "%.9g,%.9g", e.start_time, e.end_time);
      out << segment << ',' << e.token << ',' << buf << '\n';
    }
  }
  if (!out) throw IoError("failed writing word events " + path);
}

int FrameSequence::valid_count() const {
  int n = 0;
  for (const std::uint8_t m : mask) n += m != 0;
  return n;
}

Tensor apply_frame_mask(const Tensor& frames, const std::vector<std::uint8_t>& mask) {
  const int t = frames.dim(0), d = frames.dim(1);
  if (static_cast<int>(mask.size()) != t) {
    throw ArgumentError("mask length " + std::to_string(mask.size()) + " does not match " +
                        std::to_string(t) + " frames");
  }
  if (std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    return frames;
  }
  std::vector<double> weights(static_cast<std::size_t>(t) * d);
  for (int i = 0; i < t; ++i) {
    if (mask[static_cast<std::size_t>(i)] == 0) continue;
    std::fill_n(weights.begin() + static_cast<std::size_t>(i) * d, d, 1.0);
  }
  return mul(frames, Tensor::from_raw({t, d}, std::move(weights)));
}

}  // namespace affect
