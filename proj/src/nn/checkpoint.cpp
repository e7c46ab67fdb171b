#include "nicu/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nicu::nn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kMagic[4] = {'N', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T take() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string take_string() {
    const auto n = take<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void take_doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) {
      throw std::runtime_error("checkpoint: truncated at byte " + std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Network<double>& net, const Metadata& meta) {
  std::string out(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& s : net.layers()) {
    put(out, static_cast<std::uint8_t>(s.kind));
    for (int v : {s.in_channels, s.out_channels, s.kernel_h, s.kernel_w, s.stride_h, s.stride_w,
                  s.pad_h, s.pad_w}) {
      put(out, static_cast<std::int32_t>(v));
    }
    put(out, s.scale_h);
    put(out, s.scale_w);
  }
  put(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put(out, static_cast<std::uint32_t>(net.params().size()));
  for (const auto& p : net.params()) {
    put_string(out, p.name);
    put(out, static_cast<std::uint8_t>(p.trainable));
    put(out, static_cast<std::uint32_t>(p.tensor.shape.size()));
    for (auto d : p.tensor.shape) put(out, static_cast<std::uint64_t>(d));
    out.append(reinterpret_cast<const char*>(p.tensor.data.data()),
               static_cast<std::size_t>(p.tensor.size()) * sizeof(double));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  Reader r(bytes);
  r.take<std::uint32_t>();
  const auto version = r.take<std::uint32_t>();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  std::vector<LayerSpec> layers(r.take<std::uint32_t>());
  for (auto& s : layers) {
    s.kind = static_cast<LayerKind>(r.take<std::uint8_t>());
    for (int* v : {&s.in_channels, &s.out_channels, &s.kernel_h, &s.kernel_w, &s.stride_h,
                   &s.stride_w, &s.pad_h, &s.pad_w}) {
      *v = r.take<std::int32_t>();
    }
    s.scale_h = r.take<double>();
    s.scale_w = r.take<double>();
  }
  Metadata meta;
  for (auto n = r.take<std::uint32_t>(); n > 0; --n) {
    std::string k = r.take_string();
    meta[k] = r.take_string();
  }
  std::vector<Parameter<double>> params(r.take<std::uint32_t>());
  for (auto& p : params) {
    p.name = r.take_string();
    p.trainable = r.take<std::uint8_t>() != 0;
    Shape shape(r.take<std::uint32_t>());
    for (auto& d : shape) d = static_cast<Eigen::Index>(r.take<std::uint64_t>());
    p.tensor = Tensor<double>(shape);
    r.take_doubles(p.tensor.data.data(), static_cast<std::size_t>(p.tensor.size()));
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  try {
    return {Network<double>::from_parts(std::move(layers), std::move(params)), std::move(meta)};
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Network<double>& net,
                     const Metadata& meta) {
  const std::string bytes = encode_checkpoint(net, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

std::uint64_t parameter_hash(const Network<double>& net) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& p : net.params()) {
    mix(p.name.data(), p.name.size());
    for (auto d : p.tensor.shape) {
      const auto u = static_cast<std::uint64_t>(d);
      mix(&u, sizeof u);
    }
    mix(p.tensor.data.data(), static_cast<std::size_t>(p.tensor.size()) * sizeof(double));
  }
  return h;
}

}  // namespace nicu::nn
