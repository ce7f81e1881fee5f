// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dccrn/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dccrn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename U>
  void pod(U v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}
  template <typename U>
  U pod() {
    U v{};
    bytes(&v, sizeof(U));
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw DataError("checkpoint " + what_ + ": truncated file");
  }

 private:
  std::istream& in_;
  std::string what_;
};

constexpr std::uint64_t kMaxBlobBytes = std::uint64_t{1} << 34;

}  // namespace

template <typename T>
Blob Blob::from_tensor(const std::string& name, const Tensor<T>& t) {
  Blob b;
  b.name = name;
  b.dtype = dtype_of<T>();
  b.shape = t.shape();
  b.bytes.resize(t.size() * sizeof(T));
  std::memcpy(b.bytes.data(), t.ptr(), b.bytes.size());
  return b;
}

template <typename T>
Tensor<T> Blob::to_tensor() const {
  const std::size_t n = shape_size(shape);
  const std::size_t width = dtype == DType::kF32 ? 4 : 8;
  if (bytes.size() != n * width)
    throw DataError("checkpoint blob " + name + ": byte length does not match its shape");
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < n; ++i) {
    if (dtype == DType::kF32) {
      float v;
      std::memcpy(&v, bytes.data() + 4 * i, 4);
      t[i] = static_cast<T>(v);
    } else {
      double v;
      std::memcpy(&v, bytes.data() + 8 * i, 8);
      t[i] = static_cast<T>(v);
    }
  }
  return t;
}

const Blob* Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return &b;
  return nullptr;
}

const std::string& Checkpoint::at(const std::string& key) const {
  auto it = header.find(key);
  if (it == header.end()) throw DataError("checkpoint: missing header key " + key);
  return it->second;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream head;
  for (const auto& [k, v] : ckpt.header) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw DataError("checkpoint: header entry " + k + " contains '=' or a newline");
    head << k << '=' << v << '\n';
  }
  const std::string text = head.str();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open " + tmp.string() + " for writing");
    Writer w(out);
    w.bytes(kCheckpointMagic, 8);
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
    w.bytes(text.data(), text.size());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.blobs.size()));
    for (const auto& b : ckpt.blobs) {
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(b.name.size()));
      w.bytes(b.name.data(), b.name.size());
      w.pod<std::uint8_t>(static_cast<std::uint8_t>(b.dtype));
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(b.shape.size()));
      for (std::size_t d : b.shape) w.pod<std::uint64_t>(d);
      w.pod<std::uint64_t>(b.bytes.size());
      w.bytes(b.bytes.data(), b.bytes.size());
    }
    if (!out) throw DataError("checkpoint: write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  Reader r(in, path.string());
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError("checkpoint " + path.string() + ": bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw DataError("checkpoint " + path.string() + ": unsupported version " +
                    std::to_string(version));
  Checkpoint ck;
  std::string text(r.pod<std::uint32_t>(), '\0');
  r.bytes(text.data(), text.size());
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: malformed header line " + line);
    ck.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Blob b;
    b.name.resize(r.pod<std::uint32_t>());
    r.bytes(b.name.data(), b.name.size());
    const auto dt = r.pod<std::uint8_t>();
    if (dt > 1) throw DataError("checkpoint blob " + b.name + ": unknown dtype");
    b.dtype = static_cast<DType>(dt);
    b.shape.resize(r.pod<std::uint32_t>());
    for (auto& d : b.shape) d = static_cast<std::size_t>(r.pod<std::uint64_t>());
    const auto len = r.pod<std::uint64_t>();
    if (len > kMaxBlobBytes) throw DataError("checkpoint blob " + b.name + ": implausible size");
    b.bytes.resize(len);
    r.bytes(b.bytes.data(), b.bytes.size());
    ck.blobs.push_back(std::move(b));
  }
  return ck;
}

std::string exact_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw DataError("checkpoint: bad number '" + s + "'");
  return v;
}

template <typename T>
void export_model(const Model<T>& model, Checkpoint& ckpt) {
  for (const auto& [k, v] : model.config().to_map()) ckpt.header["model." + k] = v;
  for (const auto& e : model.params().entries())
    ckpt.blobs.push_back(Blob::from_tensor("param/" + e.name, e.var.value()));
  for (const auto& [name, buf] : model.params().buffers()) {
    ckpt.blobs.push_back(Blob::from_tensor("buffer/" + name + "/mean", buf.running_mean));
    ckpt.blobs.push_back(Blob::from_tensor("buffer/" + name + "/var", buf.running_var));
  }
}

namespace {

ModelConfig stored_config(const Checkpoint& ckpt) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : ckpt.header)
    if (k.rfind("model.", 0) == 0) kv[k.substr(6)] = v;
  try {
    return ModelConfig::from_map(kv);
  } catch (const ShapeError& e) {
    throw DataError(std::string("checkpoint: invalid model config: ") + e.what());
  }
}

template <typename T>
void load_tensor(const Checkpoint& ckpt, const std::string& name, Tensor<T>& dst) {
  const Blob* b = ckpt.find(name);
  if (!b) throw DataError("checkpoint: missing tensor " + name);
  if (b->shape != dst.shape())
    throw DataError("checkpoint: tensor " + name + " has shape " + shape_str(b->shape) +
                    ", model expects " + shape_str(dst.shape()));
  dst = b->to_tensor<T>();
}

}  // namespace

template <typename T>
void load_model_state(const Checkpoint& ckpt, Model<T>& model) {
  if (!(stored_config(ckpt) == model.config()))
    throw DataError("checkpoint: model config does not match");
  for (auto& e : model.params().entries())
    load_tensor(ckpt, "param/" + e.name, e.var.mutable_value());
  for (auto& [name, buf] : model.params().buffers()) {
    load_tensor(ckpt, "buffer/" + name + "/mean", buf.running_mean);
    load_tensor(ckpt, "buffer/" + name + "/var", buf.running_var);
  }
}

template <typename T>
std::unique_ptr<Model<T>> import_model(const Checkpoint& ckpt) {
  auto model = std::make_unique<Model<T>>(stored_config(ckpt));
  load_model_state(ckpt, *model);
  return model;
}

#define DCCRN_INSTANTIATE(T)                                                        \
  template Blob Blob::from_tensor<T>(const std::string&, const Tensor<T>&);         \
  template Tensor<T> Blob::to_tensor<T>() const;                                    \
  template void export_model<T>(const Model<T>&, Checkpoint&);                      \
  template std::unique_ptr<Model<T>> import_model<T>(const Checkpoint&);            \
  template void load_model_state<T>(const Checkpoint&, Model<T>&);

DCCRN_INSTANTIATE(float)
DCCRN_INSTANTIATE(double)

}  // namespace dccrn
