// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace osd {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Storage type for every weight, delta, gradient and importance matrix.
/// Row-major so that flat indices match the on-disk layout.
using DenseMatrix = Matrix<float>;

struct Layer {
  std::string id;
  DenseMatrix matrix;
};

/// Ordered collection of named 2-D tensors. Order is significant and is
/// preserved by every transformation in the library.
class LayerSet {
 public:
  LayerSet() = default;

  // Throws ArgumentError on duplicate ids.
  void add(std::string id, DenseMatrix matrix);

  std::size_t size() const noexcept { return layers_.size(); }
  bool empty() const noexcept { return layers_.empty(); }

  const Layer& operator[](std::size_t i) const { return layers_[i]; }
  const Layer& at(const std::string& id) const;
  bool contains(const std::string& id) const;

  std::vector<Layer>::const_iterator begin() const { return layers_.begin(); }
  std::vector<Layer>::const_iterator end() const { return layers_.end(); }

  std::vector<std::string> ids() const;

 private:
  std::vector<Layer> layers_;
};

/// SDT1 container: magic "SDT1", u32 layer count, then per layer
/// u16 id length, UTF-8 id, u32 rows, u32 cols, rows*cols little-endian f32.
LayerSet load_layer_set(const std::filesystem::path& path);
LayerSet decode_layer_set(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");

void save_layer_set(const std::filesystem::path& path, const LayerSet& set);
std::vector<std::uint8_t> encode_layer_set(const LayerSet& set);

/// Elementwise fine_tuned - pretrained, per layer.
LayerSet delta(const LayerSet& fine_tuned, const LayerSet& pretrained);

/// Elementwise base + update, per layer. Used to rebuild fine-tuned weights.
LayerSet add(const LayerSet& base, const LayerSet& update);

/// Role -> container path mapping stored as a small JSON object, e.g.
/// {"pretrained": "w0.sdt", "delta": "dw.sdt"}. Relative paths resolve
/// against the manifest's directory.
struct Manifest {
  std::map<std::string, std::filesystem::path> roles;

  bool has(const std::string& role) const { return roles.count(role) != 0; }
  const std::filesystem::path& path(const std::string& role) const;
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace osd
