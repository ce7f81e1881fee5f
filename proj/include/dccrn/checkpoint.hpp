// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Versioned binary checkpoint: a key=value text header followed by named
// little-endian tensor blobs. Layout in docs/checkpoint_format.md.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dccrn/model.hpp"

namespace dccrn {

inline constexpr char kCheckpointMagic[9] = "DCRNCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct Blob {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<unsigned char> bytes;

  template <typename T>
  static Blob from_tensor(const std::string& name, const Tensor<T>& t);
  // Converts to T when the stored dtype differs.
  template <typename T>
  Tensor<T> to_tensor() const;
};

struct Checkpoint {
  std::map<std::string, std::string> header;
  std::vector<Blob> blobs;

  const Blob* find(const std::string& name) const;
  const std::string& at(const std::string& key) const;  // DataError if absent
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Exact text form of a double (hexadecimal float) and its inverse.
std::string exact_double(double v);
double parse_double(const std::string& s);

// Model config under "model.<key>", parameters as "param/<name>", batch-norm
// buffers as "buffer/<name>/mean" and "buffer/<name>/var".
template <typename T>
void export_model(const Model<T>& model, Checkpoint& ckpt);
// Builds a model from the stored config and loads every tensor; missing or
// misshapen tensors raise DataError naming the tensor.
template <typename T>
std::unique_ptr<Model<T>> import_model(const Checkpoint& ckpt);
// Loads tensors into an existing model after checking its config matches.
template <typename T>
void load_model_state(const Checkpoint& ckpt, Model<T>& model);

}  // namespace dccrn
