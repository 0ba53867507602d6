// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <fstream>
#include <set>
#include <sstream>

#include "engage/error.hpp"
#include "engage/models/models.hpp"

namespace engage::models {
namespace {

constexpr std::string_view kMagic = "ENGAGECK";

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) h = (h ^ c) * 1099511628211ULL;
  return h;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() { return unsigned_le(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(unsigned_le(4)); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string_view str() { return take(u32()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t unsigned_le(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string save_checkpoint(const Network& net) {
  std::string out(kMagic);
  put_u32(out, kCheckpointVersion);
  put_str(out, net.config().fingerprint());
  put_u64(out, net.seed());
  const auto params = net.store().all();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_str(out, p->name);
    put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) put_u64(out, d);
    for (double v : p->value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  put_u64(out, fnv1a(out));
  return out;
}

Network load_checkpoint(std::string_view bytes, const ModelConfig& config) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw CheckpointError("not a model checkpoint (bad magic)");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  if (Reader(bytes.substr(bytes.size() - 8)).u64() != fnv1a(body)) {
    throw CheckpointError("checkpoint checksum mismatch (corrupt or truncated file)");
  }
  Reader in(body);
  in.take(kMagic.size());
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::string fingerprint(in.str());
  if (fingerprint != config.fingerprint()) {
    throw CheckpointError("checkpoint was saved for a different model: '" + fingerprint + "' vs configured '" +
                          config.fingerprint() + "'");
  }
  Network net(config, in.u64());
  const std::uint32_t count = in.u32();
  if (count != net.store().all().size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                          std::to_string(net.store().all().size()));
  }
  std::set<std::string> seen;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string name(in.str());
    Parameter* p = net.store().find(name);
    if (p == nullptr || !seen.insert(name).second) throw CheckpointError("unexpected parameter record '" + name + "'");
    Shape shape(in.u32());
    for (auto& d : shape) d = in.u64();
    if (shape != p->value.shape()) {
      throw CheckpointError("parameter '" + name + "' has shape " + shape_string(shape) + ", model expects " +
                            shape_string(p->value.shape()));
    }
    for (double& v : p->value.data()) v = in.f64();
  }
  if (!in.done()) throw CheckpointError("trailing bytes after parameter records");
  return net;
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace engage::models
