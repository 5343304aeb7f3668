#include "bgm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "bgm/imagecore.hpp"
#include "bgm/png_io.hpp"

namespace bgm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'B', 'G', 'M', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <class T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const std::vector<double>& v) {
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 26)) throw IoError(path_ + ": implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    check();
    return s;
  }
  void doubles(std::vector<double>& v) {
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    check();
  }

 private:
  void check() {
    if (!in_) throw IoError(path_ + ": truncated checkpoint");
  }
  std::ifstream& in_;
  std::string path_;
};

}  // namespace

std::uint64_t hash_text(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  note_file_open();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.pod(kCheckpointVersion);
    w.pod(ckpt.config_hash);
    w.str(ckpt.config_text);
    w.pod(static_cast<std::uint32_t>(ckpt.metadata.size()));
    for (const auto& [k, v] : ckpt.metadata) {
      w.str(k);
      w.str(v);
    }
    w.pod(static_cast<std::int64_t>(ckpt.params.step));
    w.pod(static_cast<std::uint32_t>(ckpt.params.entries().size()));
    for (const auto& [name, p] : ckpt.params.entries()) {
      w.str(name);
      w.pod(static_cast<std::uint8_t>(p.group));
      w.pod(static_cast<std::uint8_t>(p.trainable ? 1 : 0));
      w.pod(static_cast<std::int64_t>(p.adam_steps));
      w.pod(static_cast<std::uint32_t>(p.shape.size()));
      for (int d : p.shape) w.pod(static_cast<std::int32_t>(d));
      w.doubles(p.value);
      w.doubles(p.adam_m);
      w.doubles(p.adam_v);
    }
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  note_file_open();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError(path.string() + ": not a checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_hash = r.pod<std::uint64_t>();
  ckpt.config_text = r.str();
  const auto nmeta = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    ckpt.metadata[k] = r.str();
  }
  ckpt.params.step = r.pod<std::int64_t>();
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const auto group = r.pod<std::uint8_t>();
    const auto trainable = r.pod<std::uint8_t>();
    const auto adam_steps = r.pod<std::int64_t>();
    if (group >= kParamGroupCount) throw IoError(path.string() + ": bad parameter group");
    const auto ndims = r.pod<std::uint32_t>();
    if (ndims > 8) throw IoError(path.string() + ": bad rank");
    std::vector<int> shape(ndims);
    for (auto& d : shape) {
      d = r.pod<std::int32_t>();
      if (d < 0) throw IoError(path.string() + ": negative dimension");
    }
    Parameter& p = ckpt.params.add(name, shape, static_cast<ParamGroup>(group), trainable != 0);
    p.adam_steps = adam_steps;
    r.doubles(p.value);
    r.doubles(p.adam_m);
    r.doubles(p.adam_v);
  }
  return ckpt;
}

void copy_parameters(const ParameterStore& src, ParameterStore& dst) {
  for (auto& [name, p] : dst.entries()) {
    if (!src.contains(name)) throw ShapeError("checkpoint is missing parameter '" + name + "'");
    const Parameter& s = src.get(name);
    if (s.shape != p.shape) throw ShapeError("checkpoint parameter '" + name + "' has a different shape");
    p.value = s.value;
    p.adam_m = s.adam_m;
    p.adam_v = s.adam_v;
    p.adam_steps = s.adam_steps;
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }
  dst.step = src.step;
}

}  // namespace bgm
