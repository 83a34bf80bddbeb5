#include "affect/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <type_traits>

#include "affect/error.hpp"

namespace affect {

namespace {

constexpr char kMagic[4] = {'A', 'F', 'C', 'K'};

// Scalars are written little-endian. This implementation assembles bytes
// explicitly so the file format does not depend on host endianness.
template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
}

void put_f64(std::string& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  put(out, bits);
}

void put_str(std::string& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  template <typename T>
  T get() {
    static_assert(std::is_integral_v<T>);
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      u |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return static_cast<T>(u);
  }

  double get_f64() {
    const std::uint64_t bits = get<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string get_str() {
    const std::uint32_t n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ParseError("truncated checkpoint file " + path_);
  }
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put(out, ckpt.version);
  put(out, ckpt.rng_state);
  put(out, ckpt.adam_step);
  put(out, ckpt.epoch);
  put_f64(out, ckpt.best_dev);
  put_str(out, ckpt.config_json);
  put(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    put_str(out, name);
    put(out, static_cast<std::uint32_t>(tensor.ndim()));
    for (int i = 0; i < tensor.ndim(); ++i) put(out, static_cast<std::int32_t>(tensor.dim(i)));
    for (double v : tensor.data()) put_f64(out, v);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a checkpoint file: " + path);
  }

  const std::string body = bytes.substr(sizeof(kMagic));
  Reader r(body, path);
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>();
  if (ckpt.version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(ckpt.version) + " in " +
                     path);
  }
  ckpt.rng_state = r.get<std::uint64_t>();
  ckpt.adam_step = r.get<std::int64_t>();
  ckpt.epoch = r.get<std::int32_t>();
  ckpt.best_dev = r.get_f64();
  ckpt.config_json = r.get_str();
  const std::uint32_t count = r.get<std::uint32_t>();
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_str();
    const std::uint32_t ndim = r.get<std::uint32_t>();
    if (ndim > 8) throw ParseError("implausible tensor rank in checkpoint " + path);
    Shape shape;
    long long total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::int32_t dim = r.get<std::int32_t>();
      if (dim <= 0) throw ParseError("bad tensor dimension in checkpoint " + path);
      shape.push_back(dim);
      total *= dim;
    }
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(total));
    for (long long k = 0; k < total; ++k) data.push_back(r.get_f64());
    ckpt.tensors.emplace_back(std::move(name), Tensor::from_raw(shape, std::move(data)));
  }
  if (!r.done()) throw ParseError("trailing bytes in checkpoint " + path);
  return ckpt;
}

}  // namespace affect
