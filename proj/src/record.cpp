// SPDX-License-Identifier: Apache-2.0
#include "osd/record.hpp"

#include <cstdio>
#include <cstring>

#include <json.hpp>

#include "byteio.hpp"
#include "osd/error.hpp"

namespace osd {

std::string to_string(Method m) {
  switch (m) {
    case Method::TruncSvd: return "truncsvd";
    case Method::Mag: return "mag";
    case Method::Osd: return "osd";
    case Method::SparseOnly: return "sparse-only";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "truncsvd") return Method::TruncSvd;
  if (name == "mag") return Method::Mag;
  if (name == "osd") return Method::Osd;
  if (name == "sparse-only") return Method::SparseOnly;
  throw ArgumentError("unknown method '" + name + "' (expected truncsvd, mag, osd or sparse-only)");
}

namespace {

constexpr char kFactorMagic[4] = {'O', 'S', 'D', '1'};
constexpr char kSparseMagic[4] = {'S', 'P', 'M', '1'};
constexpr char kDenseMagic[4] = {'T', 'S', 'V', '1'};

std::uint64_t stream_bytes(std::uint64_t count, unsigned width) { return (count * width + 7) / 8; }
std::uint64_t padding_bits(std::uint64_t count, unsigned width) {
  return stream_bytes(count, width) * 8 - count * width;
}

void write_stream(detail::ByteWriter& w, const std::vector<SparseEntry>& entries, unsigned width) {
  const auto packed = pack_indices(entries, width);
  w.bytes(packed.data(), packed.size());
  for (const auto& e : entries) w.f32(e.value);
}

std::vector<SparseEntry> read_stream(detail::ByteReader& in, std::uint64_t count, unsigned width,
                                     const char* what) {
  const std::uint64_t nbytes = stream_bytes(count, width);
  const std::uint8_t* p = in.take(nbytes, std::string(what) + " index stream");
  std::vector<SparseEntry> entries(count);
  std::uint64_t pos = 0;
  for (auto& e : entries) {
    std::uint64_t idx = 0;
    for (unsigned b = 0; b < width; ++b, ++pos) idx = (idx << 1) | ((p[pos / 8] >> (7 - pos % 8)) & 1u);
    e.index = idx;
  }
  for (; pos < nbytes * 8; ++pos)
    if ((p[pos / 8] >> (7 - pos % 8)) & 1u)
      throw FormatError(std::string(what) + " index stream has nonzero padding bits");
  in.need(count * 4, std::string(what) + " value stream");
  for (auto& e : entries) e.value = in.f32("value");
  return entries;
}

void check_magic(const std::vector<std::uint8_t>& bytes, const char (&magic)[4], const char* name) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0)
    throw FormatError(std::string("record does not start with ") + name + " magic");
}

SparseMatrix decode_sparse(const std::vector<std::uint8_t>& bytes, std::uint32_t& r) {
  check_magic(bytes, kSparseMagic, "SPM1");
  detail::ByteReader in(bytes.data(), bytes.size(), "SPM1 record");
  in.take(4, "magic");
  SparseMatrix sm;
  sm.rows = in.le<std::uint32_t>("rows");
  sm.cols = in.le<std::uint32_t>("cols");
  r = in.le<std::uint32_t>("r");
  const auto s = in.le<std::uint64_t>("s");
  const auto width = in.le<std::uint8_t>("idx_bits");
  if (sm.rows == 0 || sm.cols == 0) throw FormatError("SPM1 record has an empty shape");
  if (width != sm.index_bits()) throw FormatError("SPM1 index width does not match the matrix size");
  if (s > sm.rows * sm.cols) throw FormatError("SPM1 entry count exceeds the matrix size");
  sm.entries = read_stream(in, s, width, "SPM1");
  if (in.remaining() != 0) throw FormatError("SPM1 record has trailing bytes");
  validate(sm);
  return sm;
}

FactorPair decode_dense(const std::vector<std::uint8_t>& bytes) {
  check_magic(bytes, kDenseMagic, "TSV1");
  detail::ByteReader in(bytes.data(), bytes.size(), "TSV1 record");
  in.take(4, "magic");
  const auto n = in.le<std::uint32_t>("n");
  const auto d = in.le<std::uint32_t>("d");
  const auto k = in.le<std::uint32_t>("k");
  if (n == 0 || d == 0 || k == 0) throw FormatError("TSV1 record has an empty shape");
  in.need((std::uint64_t{n} * k + std::uint64_t{k} * d) * 4, "TSV1 factors");
  FactorPair f;
  f.u_prime.resize(n, k);
  f.v_prime.resize(k, d);
  for (Eigen::Index i = 0; i < f.u_prime.size(); ++i) f.u_prime.data()[i] = in.f32("U'");
  for (Eigen::Index i = 0; i < f.v_prime.size(); ++i) f.v_prime.data()[i] = in.f32("V'");
  if (in.remaining() != 0) throw FormatError("TSV1 record has trailing bytes");
  if (!f.u_prime.allFinite() || !f.v_prime.allFinite()) throw DataError("TSV1 record holds non-finite values");
  return f;
}

}  // namespace

std::vector<std::uint8_t> encode(const SparseFactorPair& sp) {
  validate(sp);
  std::vector<std::uint8_t> out;
  detail::ByteWriter w(out);
  w.bytes(kFactorMagic, 4);
  w.le(sp.n);
  w.le(sp.d);
  w.le(sp.k);
  w.le(sp.r);
  w.le(sp.c);
  w.le(static_cast<std::uint64_t>(sp.entries_u.size()));
  w.le(static_cast<std::uint64_t>(sp.entries_v.size()));
  w.le(sp.idx_bits_u);
  w.le(sp.idx_bits_v);
  write_stream(w, sp.entries_u, sp.idx_bits_u);
  write_stream(w, sp.entries_v, sp.idx_bits_v);
  return out;
}

SparseFactorPair decode(const std::vector<std::uint8_t>& bytes) {
  check_magic(bytes, kFactorMagic, "OSD1");
  detail::ByteReader in(bytes.data(), bytes.size(), "OSD1 record");
  in.take(4, "magic");
  SparseFactorPair sp;
  sp.n = in.le<std::uint32_t>("n");
  sp.d = in.le<std::uint32_t>("d");
  sp.k = in.le<std::uint32_t>("k");
  sp.r = in.le<std::uint32_t>("r");
  sp.c = in.le<std::uint32_t>("c");
  const auto s_u = in.le<std::uint64_t>("s_u");
  const auto s_v = in.le<std::uint64_t>("s_v");
  sp.idx_bits_u = in.le<std::uint8_t>("idx_bits_u");
  sp.idx_bits_v = in.le<std::uint8_t>("idx_bits_v");
  if (sp.n == 0 || sp.d == 0 || sp.k == 0) throw FormatError("OSD1 record has an empty shape");
  const std::uint64_t size_u = std::uint64_t{sp.n} * sp.k, size_v = std::uint64_t{sp.k} * sp.d;
  if (sp.idx_bits_u != ceil_log2(size_u) || sp.idx_bits_v != ceil_log2(size_v))
    throw FormatError("OSD1 index widths do not match the factor shapes");
  if (s_u > size_u || s_v > size_v) throw FormatError("OSD1 entry counts exceed the factor sizes");
  sp.entries_u = read_stream(in, s_u, sp.idx_bits_u, "U'");
  sp.entries_v = read_stream(in, s_v, sp.idx_bits_v, "V'");
  if (in.remaining() != 0) throw FormatError("OSD1 record has trailing bytes");
  validate(sp);
  return sp;
}

std::vector<std::uint8_t> encode(const SparseMatrix& sm, std::uint32_t r) {
  validate(sm);
  std::vector<std::uint8_t> out;
  detail::ByteWriter w(out);
  w.bytes(kSparseMagic, 4);
  w.le(static_cast<std::uint32_t>(sm.rows));
  w.le(static_cast<std::uint32_t>(sm.cols));
  w.le(r);
  w.le(static_cast<std::uint64_t>(sm.entries.size()));
  w.le(static_cast<std::uint8_t>(sm.index_bits()));
  write_stream(w, sm.entries, sm.index_bits());
  return out;
}

std::vector<std::uint8_t> encode_dense(const FactorPair& f) {
  std::vector<std::uint8_t> out;
  detail::ByteWriter w(out);
  w.bytes(kDenseMagic, 4);
  w.le(static_cast<std::uint32_t>(f.rows()));
  w.le(static_cast<std::uint32_t>(f.cols()));
  w.le(static_cast<std::uint32_t>(f.rank()));
  for (Eigen::Index i = 0; i < f.u_prime.size(); ++i) w.f32(f.u_prime.data()[i]);
  for (Eigen::Index i = 0; i < f.v_prime.size(); ++i) w.f32(f.v_prime.data()[i]);
  return out;
}

BitCost CompressedLayer::payload_bits() const {
  if (const auto* sp = std::get_if<SparseFactorPair>(&payload)) return payload_cost(*sp);
  if (const auto* sm = std::get_if<SparseMatrix>(&payload)) return sparse_cost(sm->entries.size(), sm->rows, sm->cols);
  const auto& f = std::get<FactorPair>(payload);
  return svd_cost(f.rows(), f.cols(), f.rank());
}

std::uint64_t CompressedLayer::overhead_bits() const {
  if (const auto* sp = std::get_if<SparseFactorPair>(&payload))
    return kFactorHeaderBytes * 8 + padding_bits(sp->entries_u.size(), sp->idx_bits_u) +
           padding_bits(sp->entries_v.size(), sp->idx_bits_v);
  if (const auto* sm = std::get_if<SparseMatrix>(&payload))
    return kSparseHeaderBytes * 8 + padding_bits(sm->entries.size(), sm->index_bits());
  return kDenseHeaderBytes * 8;
}

DenseMatrix CompressedLayer::reconstruct() const {
  if (const auto* sp = std::get_if<SparseFactorPair>(&payload)) return osd::reconstruct(*sp);
  if (const auto* sm = std::get_if<SparseMatrix>(&payload)) return densify(*sm);
  return osd::reconstruct(std::get<FactorPair>(payload));
}

std::vector<std::uint8_t> CompressedLayer::encode() const {
  if (const auto* sp = std::get_if<SparseFactorPair>(&payload)) return osd::encode(*sp);
  if (const auto* sm = std::get_if<SparseMatrix>(&payload)) return osd::encode(*sm, r);
  return encode_dense(std::get<FactorPair>(payload));
}

CompressedLayer CompressedLayer::decode(const std::string& id, const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw IntegrityError("record for layer '" + id + "' is truncated");
  CompressedLayer layer;
  layer.id = id;
  try {
    if (std::memcmp(bytes.data(), kFactorMagic, 4) == 0) {
      auto sp = osd::decode(bytes);
      layer.n = sp.n;
      layer.d = sp.d;
      layer.r = sp.r;
      layer.c = sp.c;
      layer.payload = std::move(sp);
    } else if (std::memcmp(bytes.data(), kSparseMagic, 4) == 0) {
      std::uint32_t r = 0;
      auto sm = decode_sparse(bytes, r);
      layer.method = Method::SparseOnly;
      layer.n = static_cast<std::uint32_t>(sm.rows);
      layer.d = static_cast<std::uint32_t>(sm.cols);
      layer.r = r;
      layer.payload = std::move(sm);
    } else if (std::memcmp(bytes.data(), kDenseMagic, 4) == 0) {
      auto f = decode_dense(bytes);
      layer.method = Method::TruncSvd;
      layer.n = static_cast<std::uint32_t>(f.rows());
      layer.d = static_cast<std::uint32_t>(f.cols());
      layer.r = static_cast<std::uint32_t>(f.rank());
      layer.payload = std::move(f);
    } else {
      throw FormatError("unknown record magic");
    }
  } catch (const Error& e) {
    throw Error(e.kind(), "layer '" + id + "': " + e.what());
  }
  return layer;
}

LayerSet CompressedModel::reconstruct_deltas() const {
  LayerSet out;
  for (const auto& layer : layers) out.add(layer.id, layer.reconstruct());
  return out;
}

void save_compressed_model(const std::filesystem::path& path, const CompressedModel& model) {
  namespace fs = std::filesystem;
  const fs::path dir_name = path.filename().string() + ".records";
  const fs::path dir = path.parent_path() / dir_name;
  fs::create_directories(dir);
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".rec") fs::remove(entry.path());

  nlohmann::json j;
  j["format"] = "osd-model";
  j["version"] = 1;
  j["method"] = to_string(model.method);
  j["rank"] = model.r;
  j["c"] = model.c;
  j["pretrained"] = model.pretrained ? nlohmann::json(model.pretrained->string()) : nlohmann::json(nullptr);
  j["layers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.rec", i);
    detail::write_file((dir / name).string(), model.layers[i].encode());
    j["layers"].push_back({{"id", model.layers[i].id}, {"record", (dir_name / name).generic_string()}});
  }
  const auto text = j.dump(2) + "\n";
  detail::write_file(path.string(), std::vector<std::uint8_t>(text.begin(), text.end()));
}

CompressedModel load_compressed_model(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  CompressedModel model;
  try {
    if (j.at("format") != "osd-model") throw FormatError(path.string() + ": not an osd-model manifest");
    model.method = parse_method(j.at("method").get<std::string>());
    model.r = j.at("rank").get<std::uint32_t>();
    model.c = j.at("c").get<std::uint32_t>();
    if (!j.at("pretrained").is_null()) model.pretrained = j.at("pretrained").get<std::string>();
    for (const auto& entry : j.at("layers")) {
      const auto id = entry.at("id").get<std::string>();
      const auto rec = path.parent_path() / entry.at("record").get<std::string>();
      auto layer = CompressedLayer::decode(id, detail::read_file(rec.string()));
      layer.method = model.method;
      model.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace osd
