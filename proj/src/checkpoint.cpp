#include "fskv/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fskv/error.hpp"

namespace fskv {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'S', 'K', 'V', 'C', 'K', 'P', 'T'};
// Guards allocations driven by corrupt length fields.
constexpr std::uint64_t kMaxRank = 8;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) {
      throw Error(ErrorKind::kCheckpointCorrupt, "checkpoint truncated at byte " +
                                                     std::to_string(pos_));
    }
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::string text(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, c.version);
  const std::string meta = c.metadata.dump();
  put_u64(out, meta.size());
  out += meta;
  put_u64(out, c.arrays.size());
  for (std::size_t i = 0; i < c.arrays.size(); ++i) {
    const auto& p = c.arrays[i];
    put_u64(out, p.name.size());
    out += p.name;
    put_u64(out, 2);
    put_u64(out, static_cast<std::uint64_t>(p.value.rows()));
    put_u64(out, static_cast<std::uint64_t>(p.value.cols()));
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      std::uint64_t bits;
      std::memcpy(&bits, p.value.data() + k, sizeof bits);
      put_u64(out, bits);
    }
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.text(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw Error(ErrorKind::kCheckpointCorrupt, "not a checkpoint (bad magic)");
  }
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) {
    throw Error(ErrorKind::kCheckpointVersion,
                "checkpoint format version " + std::to_string(c.version) +
                    " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t meta_len = r.u64();
  try {
    c.metadata = json::parse(r.text(meta_len));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCheckpointCorrupt, std::string("checkpoint metadata: ") + e.what());
  }
  const std::uint64_t count = r.u64();
  for (std::uint64_t a = 0; a < count; ++a) {
    const std::string name = r.text(r.u64());
    const std::uint64_t rank = r.u64();
    if (rank == 0 || rank > kMaxRank) {
      throw Error(ErrorKind::kCheckpointCorrupt, "array '" + name + "' has rank " +
                                                     std::to_string(rank));
    }
    std::uint64_t rows = r.u64();
    std::uint64_t cols = 1;
    for (std::uint64_t k = 1; k < rank; ++k) cols *= r.u64();
    if (rank == 1) std::swap(rows, cols);
    if (rows != 0 && cols > r.remaining() / 8 / rows) {
      throw Error(ErrorKind::kCheckpointCorrupt, "array '" + name + "' overruns the file");
    }
    if (c.arrays.contains(name)) {
      throw Error(ErrorKind::kCheckpointCorrupt, "array '" + name + "' appears twice");
    }
    auto& p = c.arrays.add(name, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = r.f64();
  }
  if (!r.done()) throw Error(ErrorKind::kCheckpointCorrupt, "trailing bytes after checkpoint");
  return c;
}

Checkpoint make_checkpoint(const Model& model, const json& extra) {
  Checkpoint c;
  c.metadata = extra.is_object() ? extra : json::object();
  c.metadata["model"] = model_config_to_json(model.config);
  c.metadata["seed"] = model.seed;
  c.arrays = model.params;
  return c;
}

Model model_from_checkpoint(const Checkpoint& c) {
  ModelConfig config;
  std::uint64_t seed = 0;
  try {
    config = model_config_from_json(c.metadata.at("model"));
    seed = c.metadata.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kCheckpointCorrupt, std::string("checkpoint metadata: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::kCheckpointCorrupt, std::string("checkpoint config: ") + e.what());
  }
  Model m = init_model(config, seed);
  if (m.params.size() != c.arrays.size()) {
    throw Error(ErrorKind::kCheckpointCorrupt,
                "checkpoint holds " + std::to_string(c.arrays.size()) + " arrays, model needs " +
                    std::to_string(m.params.size()));
  }
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    auto& p = m.params[i];
    if (!c.arrays.contains(p.name)) {
      throw Error(ErrorKind::kCheckpointCorrupt, "checkpoint lacks array '" + p.name + "'");
    }
    const auto& src = c.arrays.at(p.name).value;
    if (src.rows() != p.value.rows() || src.cols() != p.value.cols()) {
      throw Error(ErrorKind::kCheckpointCorrupt, "array '" + p.name + "' has the wrong shape");
    }
    p.value = src;
  }
  return m;
}

void save_checkpoint(const Model& model, const std::string& path, const json& extra) {
  const std::string bytes = serialize_checkpoint(make_checkpoint(model, extra));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

Model load_model(const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); }

}  // namespace fskv
