// SPDX-License-Identifier: Apache-2.0
#include "osd/matio.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "byteio.hpp"
#include "osd/error.hpp"

namespace osd {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace detail

namespace {
constexpr char kMagic[4] = {'S', 'D', 'T', '1'};
}

void LayerSet::add(std::string id, DenseMatrix matrix) {
  if (contains(id)) throw ArgumentError("duplicate layer id '" + id + "'");
  layers_.push_back({std::move(id), std::move(matrix)});
}

const Layer& LayerSet::at(const std::string& id) const {
  for (const auto& l : layers_)
    if (l.id == id) return l;
  throw StructuralError("no layer named '" + id + "'");
}

bool LayerSet::contains(const std::string& id) const {
  for (const auto& l : layers_)
    if (l.id == id) return true;
  return false;
}

std::vector<std::string> LayerSet::ids() const {
  std::vector<std::string> out;
  out.reserve(layers_.size());
  for (const auto& l : layers_) out.push_back(l.id);
  return out;
}

LayerSet decode_layer_set(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  detail::ByteReader in(bytes.data(), bytes.size(), source);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(source + ": missing SDT1 magic");
  in.take(4, "magic");
  const auto count = in.le<std::uint32_t>("layer count");

  LayerSet set;
  std::set<std::string> seen;
  for (std::uint32_t l = 0; l < count; ++l) {
    const auto id_len = in.le<std::uint16_t>("id length of layer " + std::to_string(l));
    const auto* id_bytes = in.take(id_len, "id of layer " + std::to_string(l));
    std::string id(reinterpret_cast<const char*>(id_bytes), id_len);
    if (!seen.insert(id).second) throw FormatError(source + ": duplicate layer id '" + id + "'");
    const auto rows = in.le<std::uint32_t>("rows of layer '" + id + "'");
    const auto cols = in.le<std::uint32_t>("cols of layer '" + id + "'");
    if (rows == 0 || cols == 0) throw FormatError(source + ": layer '" + id + "' has an empty shape");

    const std::uint64_t n = std::uint64_t{rows} * cols;
    if (in.remaining() / 4 < n)
      throw IntegrityError(source + ": layer '" + id + "' declares " + std::to_string(rows) + "x" +
                           std::to_string(cols) + " but payload holds only " +
                           std::to_string(in.remaining() / 4) + " floats");
    DenseMatrix m(rows, cols);
    float* dst = m.data();
    for (std::uint64_t i = 0; i < n; ++i) {
      const float v = in.f32("payload");
      if (!std::isfinite(v))
        throw DataError(source + ": non-finite value in layer '" + id + "' at flat index " + std::to_string(i));
      dst[i] = v;
    }
    set.add(std::move(id), std::move(m));
  }
  if (in.remaining() != 0)
    throw IntegrityError(source + ": " + std::to_string(in.remaining()) + " trailing bytes after last layer");
  return set;
}

LayerSet load_layer_set(const std::filesystem::path& path) {
  return decode_layer_set(detail::read_file(path.string()), path.string());
}

std::vector<std::uint8_t> encode_layer_set(const LayerSet& set) {
  std::vector<std::uint8_t> out;
  detail::ByteWriter w(out);
  w.bytes(kMagic, 4);
  w.le(static_cast<std::uint32_t>(set.size()));
  for (const auto& layer : set) {
    if (layer.id.size() > 0xFFFF) throw ArgumentError("layer id too long: '" + layer.id.substr(0, 32) + "...'");
    w.le(static_cast<std::uint16_t>(layer.id.size()));
    w.bytes(layer.id.data(), layer.id.size());
    w.le(static_cast<std::uint32_t>(layer.matrix.rows()));
    w.le(static_cast<std::uint32_t>(layer.matrix.cols()));
    const float* p = layer.matrix.data();
    for (Eigen::Index i = 0; i < layer.matrix.size(); ++i) w.f32(p[i]);
  }
  return out;
}

void save_layer_set(const std::filesystem::path& path, const LayerSet& set) {
  detail::write_file(path.string(), encode_layer_set(set));
}

namespace {

template <typename Op>
LayerSet zip_layers(const LayerSet& a, const LayerSet& b, Op op, const char* what) {
  std::string problems;
  if (a.size() != b.size())
    problems += " layer count " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ";";
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i].id != b[i].id) {
      problems += " position " + std::to_string(i) + " '" + a[i].id + "' vs '" + b[i].id + "';";
    } else if (a[i].matrix.rows() != b[i].matrix.rows() || a[i].matrix.cols() != b[i].matrix.cols()) {
      problems += " '" + a[i].id + "' shape " + std::to_string(a[i].matrix.rows()) + "x" +
                  std::to_string(a[i].matrix.cols()) + " vs " + std::to_string(b[i].matrix.rows()) + "x" +
                  std::to_string(b[i].matrix.cols()) + ";";
    }
  }
  if (!problems.empty()) throw StructuralError(std::string(what) + ": mismatched layer sets:" + problems);

  LayerSet out;
  for (std::size_t i = 0; i < n; ++i) out.add(a[i].id, op(a[i].matrix, b[i].matrix));
  return out;
}

}  // namespace

LayerSet delta(const LayerSet& fine_tuned, const LayerSet& pretrained) {
  return zip_layers(
      fine_tuned, pretrained, [](const DenseMatrix& f, const DenseMatrix& p) -> DenseMatrix { return f - p; },
      "delta");
}

LayerSet add(const LayerSet& base, const LayerSet& update) {
  return zip_layers(
      base, update, [](const DenseMatrix& b, const DenseMatrix& u) -> DenseMatrix { return b + u; }, "add");
}

const std::filesystem::path& Manifest::path(const std::string& role) const {
  auto it = roles.find(role);
  if (it == roles.end()) throw ArgumentError("manifest has no '" + role + "' entry");
  return it->second;
}

namespace {
const std::set<std::string> kRoles = {"pretrained", "finetuned", "delta", "importance", "gradient"};
}

Manifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError(path.string() + ": manifest must be a JSON object");
  Manifest m;
  const auto base = path.parent_path();
  for (const auto& [role, value] : j.items()) {
    if (!kRoles.count(role)) throw FormatError(path.string() + ": unknown role '" + role + "'");
    if (!value.is_string()) throw FormatError(path.string() + ": role '" + role + "' must map to a path string");
    std::filesystem::path p = value.get<std::string>();
    m.roles[role] = p.is_absolute() ? p : base / p;
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [role, p] : manifest.roles) j[role] = p.string();
  const auto text = j.dump(2) + "\n";
  detail::write_file(path.string(), std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace osd
