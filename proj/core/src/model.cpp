#include "metaslot/model.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace metaslot {

Model Model::create(const TrainConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0x6d6f64656cULL));
  SlotAttentionConfig sa;
  sa.dim = config.dim;
  sa.max_slots = config.metaslot.max_slots;
  sa.mlp_hidden = config.mlp_hidden;
  sa.residual_mlp = config.residual_mlp;
  sa.shared_init = config.aggregator == AggregatorKind::kSlotAttention;

  Model m;
  m.slot_attention = SlotAttentionParams::create(sa, rng);
  m.decoder = DecoderParams::create(config.scene.height * config.scene.width, config.dim,
                                    config.decoder_hidden, rng, config.positional_std);
  if (config.positional_init == PositionalInit::kCoordinates) {
    // slot + position then carries the offset between a slot's coordinates and the pixel's.
    const std::size_t h = config.scene.height, w = config.scene.width, d = config.dim;
    auto pos = m.decoder.positional.mutable_data();
    for (std::size_t i = 0; i < h * w; ++i) {
      pos[i * d + scene_channel::kX] = -static_cast<double>(i % w) / static_cast<double>(w - 1);
      pos[i * d + scene_channel::kY] = -static_cast<double>(i / w) / static_cast<double>(h - 1);
    }
  }
  m.codebook = init_codebook(rng, config.metaslot.codebook.size, config.dim, config.metaslot.codebook);
  return m;
}

ParamList Model::params() const {
  ParamList list;
  slot_attention.collect("slot_attention", list);
  decoder.collect("decoder", list);
  return list;
}

namespace {

constexpr std::array<char, 8> kMagic{'M', 'S', 'L', 'T', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void pod(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(std::span<const double> v) {
    pod<std::uint64_t>(v.size());
    os_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  template <typename T>
  T pod() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 24)) throw std::runtime_error("checkpoint: string too long");
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  std::vector<double> doubles() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 28)) throw std::runtime_error("checkpoint: array too long");
    std::vector<double> v(n);
    is_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    check();
    return v;
  }

 private:
  void check() {
    if (!is_) throw std::runtime_error("checkpoint: truncated record");
  }
  std::istream& is_;
};

}  // namespace

void save_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  Writer w(os);
  os.write(kMagic.data(), kMagic.size());
  w.pod<std::uint32_t>(Checkpoint::kVersion);
  w.pod<std::uint64_t>(config_hash(ckpt.config));
  w.str(format_config(ckpt.config));
  w.pod<std::int64_t>(ckpt.step);

  const auto params = ckpt.model.params();
  w.pod<std::uint64_t>(params.size());
  for (const auto& [name, tensor] : params) {
    w.str(name);
    w.pod<std::uint64_t>(tensor.rank());
    for (auto d : tensor.shape()) w.pod<std::uint64_t>(d);
    w.doubles(tensor.data());
  }

  w.pod<std::int64_t>(ckpt.optimizer.step);
  w.pod<std::uint64_t>(ckpt.optimizer.first.size());
  for (std::size_t i = 0; i < ckpt.optimizer.first.size(); ++i) {
    w.doubles(ckpt.optimizer.first[i]);
    w.doubles(ckpt.optimizer.second[i]);
  }

  const auto& cb = ckpt.model.codebook;
  w.pod<std::uint64_t>(cb.dim());
  w.pod<double>(cb.ema_rate());
  w.pod<std::int64_t>(cb.timeout());
  w.doubles(cb.vectors());
  w.pod<std::uint64_t>(cb.size());
  for (auto s : cb.last_used()) w.pod<std::int64_t>(s);
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint load_checkpoint(std::istream& is) {
  Reader r(is);
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw std::runtime_error("checkpoint: bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw std::runtime_error("checkpoint: version " + std::to_string(version) + ", expected " +
                             std::to_string(Checkpoint::kVersion));
  }
  const auto hash = r.pod<std::uint64_t>();
  std::istringstream config_text(r.str());

  Checkpoint ckpt;
  ckpt.config = parse_config(config_text);
  if (config_hash(ckpt.config) != hash) throw std::runtime_error("checkpoint: config hash mismatch");
  ckpt.step = r.pod<std::int64_t>();
  ckpt.model = Model::create(ckpt.config);

  auto params = ckpt.model.params();
  if (r.pod<std::uint64_t>() != params.size()) throw std::runtime_error("checkpoint: parameter count");
  for (auto& [name, tensor] : params) {
    if (r.str() != name) throw std::runtime_error("checkpoint: expected parameter " + name);
    const auto rank = r.pod<std::uint64_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.pod<std::uint64_t>();
    if (shape != tensor.shape()) throw std::runtime_error("checkpoint: shape of " + name);
    const auto data = r.doubles();
    if (data.size() != tensor.numel()) throw std::runtime_error("checkpoint: size of " + name);
    std::copy(data.begin(), data.end(), tensor.mutable_data().begin());
  }

  ckpt.optimizer.step = r.pod<std::int64_t>();
  const auto moments = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < moments; ++i) {
    ckpt.optimizer.first.push_back(r.doubles());
    ckpt.optimizer.second.push_back(r.doubles());
  }

  const auto dim = r.pod<std::uint64_t>();
  const auto ema = r.pod<double>();
  const auto timeout = r.pod<std::int64_t>();
  auto vectors = r.doubles();
  PrototypeCodebook cb(dim, std::move(vectors), ema, timeout);
  const auto count = r.pod<std::uint64_t>();
  std::vector<std::int64_t> last(count);
  for (auto& s : last) s = r.pod<std::int64_t>();
  cb.set_last_used(std::move(last));
  ckpt.model.codebook = std::move(cb);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace metaslot
