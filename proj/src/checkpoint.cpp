// Copyright 2026 The qprior Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qprior/checkpoint.hpp"

#include <chrono>
#include <cstring>
#include <fstream>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace qprior {
namespace {

constexpr char kMagic[8] = {'Q', 'P', 'R', 'I', 'O', 'R', 'C', 'K'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8 + 8 + 8;

class Writer {
 public:
  template <class T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void str(const std::string& s) {
    pod<uint32_t>(static_cast<uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void floats(const std::vector<float>& v) {
    const auto* p = reinterpret_cast<const uint8_t*>(v.data());
    bytes_.insert(bytes_.end(), p, p + v.size() * sizeof(float));
  }
  std::vector<uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_, sizeof(T));
    p_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  std::vector<float> floats(std::size_t n) {
    need(n * sizeof(float));
    std::vector<float> v(n);
    std::memcpy(v.data(), p_, n * sizeof(float));
    p_ += n * sizeof(float);
    return v;
  }
  bool done() const { return p_ == end_; }

 private:
  void need(std::size_t n) const {
    require(static_cast<std::size_t>(end_ - p_) >= n, ErrorKind::kData,
            "checkpoint payload is truncated");
  }
  const uint8_t* p_;
  const uint8_t* end_;
};

uint64_t fnv1a_bytes(const std::vector<uint8_t>& b) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t c : b) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct RawFile {
  uint32_t version;
  uint64_t timestamp;
  std::vector<uint8_t> payload;
};

RawFile read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kData, "cannot open checkpoint " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(bytes.size() >= sizeof(kMagic) && std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0,
          ErrorKind::kData, "not a qprior checkpoint (bad magic): " + path.string());
  require(bytes.size() >= kHeaderSize, ErrorKind::kData, "checkpoint header is truncated");
  Reader r(bytes.data() + sizeof(kMagic), kHeaderSize - sizeof(kMagic));
  RawFile f;
  f.version = r.pod<uint32_t>();
  if (f.version != kCheckpointVersion) {
    fail(ErrorKind::kData, "checkpoint version " + std::to_string(f.version) +
                               " is not supported (this build reads version " +
                               std::to_string(kCheckpointVersion) + ")");
  }
  f.timestamp = r.pod<uint64_t>();
  const auto length = r.pod<uint64_t>();
  const auto hash = r.pod<uint64_t>();
  require(bytes.size() - kHeaderSize == length, ErrorKind::kData,
          "checkpoint is truncated: expected " + std::to_string(length) + " payload bytes, found " +
              std::to_string(bytes.size() - kHeaderSize));
  f.payload.assign(bytes.begin() + kHeaderSize, bytes.end());
  require(fnv1a_bytes(f.payload) == hash, ErrorKind::kData, "checkpoint payload hash mismatch");
  return f;
}

}  // namespace

const ParamBlock& CheckpointBundle::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  fail(ErrorKind::kData, "checkpoint has no parameter block '" + name + "'");
}

bool CheckpointBundle::has_block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return true;
  return false;
}

const std::string& CheckpointBundle::value(const std::string& key) const {
  const auto it = config.find(key);
  require(it != config.end(), ErrorKind::kData, "checkpoint has no config key '" + key + "'");
  return it->second;
}

std::string CheckpointBundle::value_or(const std::string& key, const std::string& fallback) const {
  const auto it = config.find(key);
  return it == config.end() ? fallback : it->second;
}

void CheckpointBundle::add_params(const std::string& prefix, const nn::ParamList& params) {
  for (const auto& [name, t] : params) blocks.push_back({prefix + name, t.shape(), t.values()});
}

void CheckpointBundle::load_params(const std::string& prefix, const nn::ParamList& params) const {
  for (const auto& [name, t] : params) {
    const ParamBlock& b = block(prefix + name);
    if (b.shape != t.shape()) {
      fail(ErrorKind::kData, "parameter '" + prefix + name + "' has shape " + ag::shape_str(b.shape) +
                                 ", model expects " + ag::shape_str(t.shape()));
    }
    nn::Tensor handle = t;
    std::copy(b.data.begin(), b.data.end(), handle.mutable_data().begin());
  }
}

std::vector<uint8_t> encode_payload(const CheckpointBundle& bundle) {
  Writer w;
  w.str(bundle.stage);
  w.pod<uint32_t>(static_cast<uint32_t>(bundle.config.size()));
  for (const auto& [k, v] : bundle.config) {
    w.str(k);
    w.str(v);
  }
  w.pod<uint32_t>(static_cast<uint32_t>(bundle.blocks.size()));
  for (const auto& b : bundle.blocks) {
    require(b.data.size() == ag::numel(b.shape), ErrorKind::kData,
            "block '" + b.name + "' data does not match its shape");
    w.str(b.name);
    w.pod<uint32_t>(static_cast<uint32_t>(b.shape.size()));
    for (int d : b.shape) w.pod<int32_t>(d);
    w.floats(b.data);
  }
  return std::move(w.bytes());
}

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path) {
  const std::vector<uint8_t> payload = encode_payload(bundle);
  Writer header;
  for (char c : kMagic) header.pod<char>(c);
  header.pod<uint32_t>(kCheckpointVersion);
  header.pod<uint64_t>(static_cast<uint64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count()));
  header.pod<uint64_t>(payload.size());
  header.pod<uint64_t>(fnv1a_bytes(payload));
  // Concurrent writers serialize on an advisory lock; readers never see a
  // partial file thanks to the temp-file rename.
  const std::string lock_path = path.string() + ".lock";
  const int lock_fd = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  require(lock_fd >= 0, ErrorKind::kData, "cannot create lock file " + lock_path);
  struct LockGuard {
    int fd;
    ~LockGuard() {
      ::flock(fd, LOCK_UN);
      ::close(fd);
    }
  } guard{lock_fd};
  ::flock(lock_fd, LOCK_EX);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::kData, "cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(header.bytes().data()),
              static_cast<std::streamsize>(header.bytes().size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    require(static_cast<bool>(out), ErrorKind::kData, "error writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path) {
  const RawFile f = read_raw(path);
  Reader r(f.payload.data(), f.payload.size());
  CheckpointBundle b;
  b.stage = r.str();
  const auto n = r.pod<uint32_t>();
  for (uint32_t i = 0; i < n; ++i) {
    std::string k = r.str();
    b.config[k] = r.str();
  }
  const auto m = r.pod<uint32_t>();
  for (uint32_t i = 0; i < m; ++i) {
    ParamBlock blk;
    blk.name = r.str();
    const auto rank = r.pod<uint32_t>();
    require(rank <= 8, ErrorKind::kData, "implausible tensor rank in checkpoint");
    for (uint32_t j = 0; j < rank; ++j) {
      const auto d = r.pod<int32_t>();
      require(d >= 0, ErrorKind::kData, "negative dimension in checkpoint");
      blk.shape.push_back(d);
    }
    blk.data = r.floats(ag::numel(blk.shape));
    b.blocks.push_back(std::move(blk));
  }
  require(r.done(), ErrorKind::kData, "trailing bytes after checkpoint payload");
  return b;
}

std::vector<uint8_t> read_checkpoint_payload(const std::filesystem::path& path) {
  return read_raw(path).payload;
}

}  // namespace qprior
