// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "shardlm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace shardlm {

static_assert(std::endian::native == std::endian::little,
              "MWT1 I/O writes host byte order and assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'W', 'T', '1'};

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T take(const std::string& tensor) {
    T value;
    take_bytes(&value, sizeof(T), tensor);
    return value;
  }

  void take_bytes(void* dst, std::size_t n, const std::string& tensor) {
    if (bytes_.size() - pos_ < n) {
      throw TruncatedCheckpointError(
          tensor, "checkpoint truncated while reading '" + tensor + "' (needed " +
                      std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ", " +
                      std::to_string(bytes_.size() - pos_) + " available)");
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ModelWeights& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, sizeof(kMagic));

  std::uint32_t count = 0;
  for_each_tensor(w, [&](const std::string&, const Tensor&) { ++count; });
  put<std::uint32_t>(out, count);

  for_each_tensor(w, [&](const std::string& name, const Tensor& t) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.cols()));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  });
  if (!out) throw CheckpointError("write to '" + path.string() + "' failed");
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  char magic[4];
  r.take_bytes(magic, sizeof(magic), "<header>");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw BadMagicError("'" + path.string() + "' is not an MWT1 checkpoint (bad magic)");
  }
  const auto count = r.take<std::uint32_t>("<header>");

  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string placeholder = "<tensor #" + std::to_string(i) + ">";
    const auto name_len = r.take<std::uint16_t>(placeholder);
    std::string name(name_len, '\0');
    r.take_bytes(name.data(), name_len, placeholder);

    const auto ndim = r.take<std::uint8_t>(name);
    if (ndim != 1 && ndim != 2) {
      throw CheckpointMismatchError("tensor '" + name + "' has unsupported rank " +
                                    std::to_string(ndim));
    }
    std::uint64_t dims[2] = {1, 1};
    for (std::uint8_t d = 0; d < ndim; ++d) dims[ndim == 1 ? 1 : d] = r.take<std::uint64_t>(name);

    if (dims[1] != 0 && dims[0] > r.remaining() / sizeof(float) / dims[1]) {
      throw TruncatedCheckpointError(name, "checkpoint truncated inside tensor '" + name + "'");
    }
    Tensor t(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
    r.take_bytes(t.data(), static_cast<std::size_t>(t.size()) * sizeof(float), name);
    tensors.push_back({std::move(name), std::move(t)});
  }
  return tensors;
}

ModelWeights load_checkpoint(const std::filesystem::path& path, const ModelConfig& config) {
  std::vector<NamedTensor> records = read_checkpoint(path);
  ModelWeights w = allocate_weights(config);

  std::size_t next = 0;
  for_each_tensor(w, [&](const std::string& name, Tensor& t) {
    if (next >= records.size()) {
      throw CheckpointMismatchError("checkpoint is missing tensor '" + name + "'");
    }
    NamedTensor& rec = records[next++];
    if (rec.name != name) {
      throw CheckpointMismatchError("expected tensor '" + name + "', found '" + rec.name + "'");
    }
    if (rec.value.rows() != t.rows() || rec.value.cols() != t.cols()) {
      throw CheckpointMismatchError("tensor '" + name + "' has shape " + shape_string(rec.value) +
                                    ", config expects " + shape_string(t));
    }
    t = std::move(rec.value);
  });
  if (next != records.size()) {
    throw CheckpointMismatchError("checkpoint holds " + std::to_string(records.size()) +
                                  " tensors, config expects " + std::to_string(next));
  }
  return w;
}

}  // namespace shardlm
