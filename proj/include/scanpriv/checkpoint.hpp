#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "scanpriv/models.hpp"

namespace scanpriv {

// Binary container, little-endian:
//   "SPRV" u32 version
//   u32 kind, u32 resolution, u32 n_classes, u64 seed, u64 epoch,
//   u64 config_hash, u32 tensor_count
//   per tensor: u32 name_len, name bytes, u8 dtype, u32 rank, u32 dims[rank],
//               raw values
// Tensors are written in insertion order; saves are byte-reproducible.
enum class ArtifactKind : std::uint32_t {
  kAutoencoder = 1,
  kClassifier = 2,
  kDql = 3,
  kClassifierMemory = 4,
  kReplayMemory = 5,
  kAgentState = 6,
};

enum class DType : std::uint8_t { kF32 = 1, kI32 = 2, kU64 = 3, kU8 = 4 };

struct ContainerHeader {
  ArtifactKind kind = ArtifactKind::kAutoencoder;
  std::uint32_t resolution = 0;
  std::uint32_t n_classes = 0;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t config_hash = 0;
  friend bool operator==(const ContainerHeader&, const ContainerHeader&) = default;
};

struct Blob {
  std::string name;
  DType dtype = DType::kF32;
  nn::Shape shape;
  std::vector<std::uint8_t> bytes;
};

class Container {
 public:
  static constexpr std::uint32_t kVersion = 1;

  Container() = default;
  explicit Container(ContainerHeader header) : header_(header) {}

  ContainerHeader& header() { return header_; }
  const ContainerHeader& header() const { return header_; }
  const std::vector<Blob>& blobs() const { return blobs_; }

  void add_f32(std::string name, nn::Shape shape, std::span<const float> v);
  void add_i32(std::string name, std::span<const std::int32_t> v);
  void add_u64(std::string name, std::span<const std::uint64_t> v);
  void add_u8(std::string name, std::span<const std::uint8_t> v);

  bool has(const std::string& name) const;
  const Blob& get(const std::string& name) const;
  std::vector<float> f32(const std::string& name) const;
  std::vector<std::int32_t> i32(const std::string& name) const;
  std::vector<std::uint64_t> u64(const std::string& name) const;
  std::vector<std::uint8_t> u8(const std::string& name) const;

  void write(std::ostream& out) const;
  static Container read(std::istream& in);
  // Writes to a temporary file and renames it into place.
  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

 private:
  ContainerHeader header_;
  std::vector<Blob> blobs_;
};

// Network parameters under "<prefix><layer>.weight" etc.
void add_network(Container& c, const std::string& prefix,
                 const nn::Network<float>& net);
void read_network(const Container& c, const std::string& prefix,
                  nn::Network<float>& net);

Container to_container(const AutoencoderModel& m, std::uint64_t seed,
                       std::uint64_t config_hash);
Container to_container(const ClassifierModel& m, std::uint64_t seed,
                       std::uint64_t config_hash);
Container to_container(const DqlModel& m, std::uint64_t seed,
                       std::uint64_t config_hash);
AutoencoderModel autoencoder_from(const Container& c);
ClassifierModel classifier_from(const Container& c);
DqlModel dql_from(const Container& c);

}  // namespace scanpriv
