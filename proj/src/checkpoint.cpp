#include "hrf/checkpoint.hpp"

#include "hrf/config.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hrf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'H', 'R', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kFloat32 = 4;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.append(p, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.append(s);
  }
  void matrix(const Matrix<float>& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    bytes_.append(reinterpret_cast<const char*>(m.data()), sizeof(float) * static_cast<std::size_t>(m.size()));
  }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  template <typename T>
  T pod() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix<float> matrix() {
    const auto rows = pod<std::int64_t>(), cols = pod<std::int64_t>();
    if (rows < 0 || cols < 0) throw CheckpointError("checkpoint: negative matrix size");
    need(sizeof(float) * static_cast<std::size_t>(rows * cols));
    Matrix<float> m(rows, cols);
    std::memcpy(m.data(), bytes_.data() + pos_, sizeof(float) * static_cast<std::size_t>(rows * cols));
    pos_ += sizeof(float) * static_cast<std::size_t>(rows * cols);
    return m;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CheckpointTruncatedError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

}  // namespace

std::uint64_t Checkpoint::config_hash() const { return hrf::config_hash(model.config); }

std::vector<std::pair<std::string, const ParameterSet<float>*>> named_networks(const HumanModel<float>& m) {
  return {{"encoder", &m.encoder},
          {"view_blend", &m.view_blend},
          {"deform", &m.deform},
          {"field", &m.field},
          {"appearance", &m.appearance}};
}

ParameterSet<float>& network(HumanModel<float>& m, const std::string& name) {
  if (name == "encoder") return m.encoder;
  if (name == "view_blend") return m.view_blend;
  if (name == "deform") return m.deform;
  if (name == "field") return m.field;
  if (name == "appearance") return m.appearance;
  throw CheckpointError("unknown network '" + name + "'");
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes().append(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(kFloat32);
  w.pod<std::uint64_t>(ckpt.config_hash());
  w.str(model_config_json(ckpt.model.config));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.stage));
  w.pod<std::int64_t>(ckpt.stage_step);
  w.str(ckpt.rng_state);
  w.pod<std::uint32_t>(ckpt.appearance_trained ? 1u : 0u);
  const auto nets = named_networks(ckpt.model);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(nets.size()));
  for (const auto& [name, set] : nets) {
    w.str(name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(set->size()));
    for (const auto& e : set->entries()) {
      w.str(e.name);
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.value.shape().size()));
      for (Index d : e.value.shape()) w.pod<std::int64_t>(d);
      w.matrix(e.value.values());
    }
  }
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.optimizer.size()));
  for (const auto& [name, state] : ckpt.optimizer) {
    w.str(name);
    w.pod<std::int64_t>(state.step);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(state.first.size()));
    for (std::size_t i = 0; i < state.first.size(); ++i) {
      w.matrix(state.first[i]);
      w.matrix(state.second[i]);
    }
  }
  const std::uint32_t crc = crc_of(w.bytes(), w.bytes().size());
  w.pod<std::uint32_t>(crc);
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 8) throw CheckpointTruncatedError("checkpoint is truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), 4);
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != crc_of(bytes, body)) throw CheckpointChecksumError("checkpoint checksum mismatch (file is corrupted or truncated)");

  Reader r(bytes, body);
  for (std::size_t i = 0; i < sizeof(kMagic) + 4; ++i) r.pod<char>();
  if (r.pod<std::uint32_t>() != kFloat32) throw CheckpointError("checkpoint: unsupported scalar type");
  const auto hash = r.pod<std::uint64_t>();
  Checkpoint ckpt;
  const ModelConfig config = model_config_from_json(r.str());
  if (config_hash(config) != hash) throw CheckpointError("checkpoint: config hash does not match its config");
  ckpt.model.config = config;
  const auto stage = r.pod<std::uint32_t>();
  if (stage > 2) throw CheckpointError("checkpoint: unknown training stage");
  ckpt.stage = static_cast<Stage>(stage);
  ckpt.stage_step = r.pod<std::int64_t>();
  ckpt.rng_state = r.str();
  const auto flags = r.pod<std::uint32_t>();
  if (flags > 1) throw CheckpointError("checkpoint: unknown flags");
  ckpt.appearance_trained = flags == 1;

  // Architecture comes from the config; stored tensors must match it.
  ckpt.model = HumanModel<float>{config, make_encoder<float>(config), make_view_blend<float>(config),
                                 make_deform<float>(config), make_field<float>(config), make_appearance<float>(config)};
  const auto nets = r.pod<std::uint32_t>();
  if (nets != 5) throw CheckpointError("checkpoint: expected 5 networks");
  for (std::uint32_t n = 0; n < nets; ++n) {
    ParameterSet<float>& set = network(ckpt.model, r.str());
    const auto count = r.pod<std::uint32_t>();
    if (count != set.size()) throw CheckpointError("checkpoint: parameter count does not match the architecture");
    for (auto& e : set.entries()) {
      if (r.str() != e.name) throw CheckpointError("checkpoint: parameter order does not match the architecture");
      const auto dims = r.pod<std::uint32_t>();
      Shape shape(dims);
      for (auto& d : shape) d = r.pod<std::int64_t>();
      if (shape != e.value.shape())
        throw CheckpointError("checkpoint: parameter '" + e.name + "' has shape " + shape_string(shape) +
                              ", architecture expects " + shape_string(e.value.shape()));
      Matrix<float> m = r.matrix();
      if (m.rows() != e.value.rows() || m.cols() != e.value.cols())
        throw CheckpointError("checkpoint: parameter '" + e.name + "' storage does not match its shape");
      e.value.values() = std::move(m);
    }
  }
  const auto states = r.pod<std::uint32_t>();
  for (std::uint32_t s = 0; s < states; ++s) {
    const std::string name = r.str();
    const ParameterSet<float>& set = network(ckpt.model, name);
    AdamState<float> st;
    st.step = r.pod<std::int64_t>();
    const auto n = r.pod<std::uint32_t>();
    if (n != set.size()) throw CheckpointError("checkpoint: optimizer state for '" + name + "' does not match");
    for (std::uint32_t i = 0; i < n; ++i) {
      st.first.push_back(r.matrix());
      st.second.push_back(r.matrix());
    }
    ckpt.optimizer[name] = std::move(st);
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::uint64_t parameter_digest(const ParameterSet<float>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& e : params.entries()) {
    mix(e.name.data(), e.name.size());
    for (Index d : e.value.shape()) mix(&d, sizeof(d));
    mix(e.value.data(), sizeof(float) * static_cast<std::size_t>(e.value.numel()));
  }
  return h;
}

}  // namespace hrf
