#include "scanpriv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "scanpriv/errors.hpp"

namespace scanpriv {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'P', 'R', 'V'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw CheckpointError("truncated container");
  }
  return v;
}

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32:
    case DType::kI32:
      return 4;
    case DType::kU64:
      return 8;
    case DType::kU8:
      return 1;
  }
  throw CheckpointError("unknown dtype");
}

template <typename T>
Blob make_blob(std::string name, DType d, nn::Shape shape, std::span<const T> v) {
  if (nn::shape_size(shape) != v.size()) {
    throw ShapeError("blob '" + name + "' size does not match its shape");
  }
  Blob b{std::move(name), d, std::move(shape), {}};
  b.bytes.resize(v.size_bytes());
  if (!v.empty()) std::memcpy(b.bytes.data(), v.data(), v.size_bytes());
  return b;
}

template <typename T>
std::vector<T> unpack(const Blob& b, DType want) {
  if (b.dtype != want) throw CheckpointError("blob '" + b.name + "' has another dtype");
  std::vector<T> v(b.bytes.size() / sizeof(T));
  if (!v.empty()) std::memcpy(v.data(), b.bytes.data(), b.bytes.size());
  return v;
}

void expect_kind(const Container& c, ArtifactKind kind) {
  if (c.header().kind != kind) {
    throw CheckpointError("container holds artifact kind " +
                          std::to_string(static_cast<std::uint32_t>(c.header().kind)) +
                          ", expected " +
                          std::to_string(static_cast<std::uint32_t>(kind)));
  }
}

}  // namespace

void Container::add_f32(std::string name, nn::Shape shape, std::span<const float> v) {
  blobs_.push_back(make_blob(std::move(name), DType::kF32, std::move(shape), v));
}
void Container::add_i32(std::string name, std::span<const std::int32_t> v) {
  blobs_.push_back(make_blob(std::move(name), DType::kI32,
                             nn::Shape{static_cast<int>(v.size())}, v));
}
void Container::add_u64(std::string name, std::span<const std::uint64_t> v) {
  blobs_.push_back(make_blob(std::move(name), DType::kU64,
                             nn::Shape{static_cast<int>(v.size())}, v));
}
void Container::add_u8(std::string name, std::span<const std::uint8_t> v) {
  blobs_.push_back(make_blob(std::move(name), DType::kU8,
                             nn::Shape{static_cast<int>(v.size())}, v));
}

bool Container::has(const std::string& name) const {
  for (const auto& b : blobs_) {
    if (b.name == name) return true;
  }
  return false;
}

const Blob& Container::get(const std::string& name) const {
  for (const auto& b : blobs_) {
    if (b.name == name) return b;
  }
  throw CheckpointError("missing tensor '" + name + "'");
}

std::vector<float> Container::f32(const std::string& n) const {
  return unpack<float>(get(n), DType::kF32);
}
std::vector<std::int32_t> Container::i32(const std::string& n) const {
  return unpack<std::int32_t>(get(n), DType::kI32);
}
std::vector<std::uint64_t> Container::u64(const std::string& n) const {
  return unpack<std::uint64_t>(get(n), DType::kU64);
}
std::vector<std::uint8_t> Container::u8(const std::string& n) const {
  return unpack<std::uint8_t>(get(n), DType::kU8);
}

void Container::write(std::ostream& out) const {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header_.kind));
  put<std::uint32_t>(out, header_.resolution);
  put<std::uint32_t>(out, header_.n_classes);
  put<std::uint64_t>(out, header_.seed);
  put<std::uint64_t>(out, header_.epoch);
  put<std::uint64_t>(out, header_.config_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(blobs_.size()));
  for (const Blob& b : blobs_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(b.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.shape.size()));
    for (int d : b.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(b.bytes.data()),
              static_cast<std::streamsize>(b.bytes.size()));
  }
  if (!out) throw CheckpointError("write failed");
}

Container Container::read(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint container (bad magic)");
  }
  const auto version = take<std::uint32_t>(in);
  if (version != kVersion) {
    throw CheckpointError("unsupported container version " + std::to_string(version));
  }
  Container c;
  c.header_.kind = static_cast<ArtifactKind>(take<std::uint32_t>(in));
  c.header_.resolution = take<std::uint32_t>(in);
  c.header_.n_classes = take<std::uint32_t>(in);
  c.header_.seed = take<std::uint64_t>(in);
  c.header_.epoch = take<std::uint64_t>(in);
  c.header_.config_hash = take<std::uint64_t>(in);
  const auto count = take<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    Blob b;
    const auto len = take<std::uint32_t>(in);
    if (len > 4096) throw CheckpointError("implausible tensor name length");
    b.name.resize(len);
    if (!in.read(b.name.data(), len)) throw CheckpointError("truncated container");
    b.dtype = static_cast<DType>(take<std::uint8_t>(in));
    const auto rank = take<std::uint32_t>(in);
    if (rank > 8) throw CheckpointError("implausible tensor rank");
    for (std::uint32_t r = 0; r < rank; ++r) {
      b.shape.push_back(static_cast<int>(take<std::uint32_t>(in)));
    }
    b.bytes.resize(nn::shape_size(b.shape) * dtype_size(b.dtype));
    if (!in.read(reinterpret_cast<char*>(b.bytes.data()),
                 static_cast<std::streamsize>(b.bytes.size()))) {
      throw CheckpointError("truncated tensor '" + b.name + "'");
    }
    c.blobs_.push_back(std::move(b));
  }
  return c;
}

void Container::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string());
    write(out);
  }
  std::filesystem::rename(tmp, path);
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read(in);
}

void add_network(Container& c, const std::string& prefix,
                 const nn::Network<float>& net) {
  const auto names = net.parameter_names();
  const auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.add_f32(prefix + names[i], params[i]->shape(), params[i]->values());
  }
}

void read_network(const Container& c, const std::string& prefix,
                  nn::Network<float>& net) {
  const auto names = net.parameter_names();
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Blob& b = c.get(prefix + names[i]);
    if (b.shape != params[i]->shape()) {
      throw CheckpointError("tensor '" + b.name + "' has shape " +
                            nn::shape_string(b.shape) + ", expected " +
                            nn::shape_string(params[i]->shape()));
    }
    const auto v = c.f32(b.name);
    std::copy(v.begin(), v.end(), params[i]->values().begin());
  }
}

Container to_container(const AutoencoderModel& m, std::uint64_t seed,
                       std::uint64_t config_hash) {
  Container c({ArtifactKind::kAutoencoder, static_cast<std::uint32_t>(m.resolution()),
               0, seed, static_cast<std::uint64_t>(m.epochs_trained), config_hash});
  add_network(c, "encoder.", m.encoder());
  add_network(c, "decoder.", m.decoder());
  const float loss = static_cast<float>(m.training_loss);
  c.add_f32("training_loss", nn::Shape{1}, std::span<const float>(&loss, 1));
  return c;
}

Container to_container(const ClassifierModel& m, std::uint64_t seed,
                       std::uint64_t config_hash) {
  Container c({ArtifactKind::kClassifier, static_cast<std::uint32_t>(m.resolution()),
               static_cast<std::uint32_t>(m.n_classes()), seed,
               static_cast<std::uint64_t>(m.epochs_trained), config_hash});
  add_network(c, "", m.network());
  return c;
}

Container to_container(const DqlModel& m, std::uint64_t seed,
                       std::uint64_t config_hash) {
  Container c({ArtifactKind::kDql, static_cast<std::uint32_t>(m.resolution()), 0,
               seed, 0, config_hash});
  add_network(c, "", m.network());
  return c;
}

AutoencoderModel autoencoder_from(const Container& c) {
  expect_kind(c, ArtifactKind::kAutoencoder);
  Rng rng(0);
  AutoencoderModel m(static_cast<int>(c.header().resolution), rng);
  read_network(c, "encoder.", m.encoder());
  read_network(c, "decoder.", m.decoder());
  m.epochs_trained = static_cast<long>(c.header().epoch);
  if (c.has("training_loss")) m.training_loss = c.f32("training_loss").at(0);
  return m;
}

ClassifierModel classifier_from(const Container& c) {
  expect_kind(c, ArtifactKind::kClassifier);
  Rng rng(0);
  ClassifierModel m(static_cast<int>(c.header().resolution),
                    static_cast<int>(c.header().n_classes), rng);
  read_network(c, "", m.network());
  m.epochs_trained = static_cast<long>(c.header().epoch);
  return m;
}

DqlModel dql_from(const Container& c) {
  expect_kind(c, ArtifactKind::kDql);
  Rng rng(0);
  DqlModel m(static_cast<int>(c.header().resolution), rng);
  read_network(c, "", m.network());
  return m;
}

}  // namespace scanpriv
