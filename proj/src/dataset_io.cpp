// SPDX-License-Identifier: Apache-2.0
// LPFF feature files, CSV manifests, and dataset descriptors.

#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "lpf/dataset.hpp"
#include "lpf/errors.hpp"

namespace lpf {

namespace detail {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

void write_file_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

namespace {

constexpr char kFeatureMagic[4] = {'L', 'P', 'F', 'F'};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

FeatureFileHeader parse_header(detail::ByteReader& r, const std::string& where) {
  const auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kFeatureMagic)) {
    throw FormatError(where + ": not an LPFF feature file (bad magic)");
  }
  FeatureFileHeader h;
  h.version = r.u32();
  if (h.version != kFeatureFileVersion) {
    throw VersionError(where + ": unsupported LPFF version " + std::to_string(h.version));
  }
  h.count = r.u64();
  h.dim = r.u32();
  h.dtype = r.u8();
  r.raw(7);
  if (h.dtype != 0) {
    throw FormatError(where + ": unsupported dtype " + std::to_string(h.dtype) + " (only f32)");
  }
  if (h.dim == 0) throw FormatError(where + ": feature dim is zero");
  return h;
}

}  // namespace

void write_feature_file(const std::filesystem::path& path, const Matrix& features) {
  detail::ByteWriter w;
  w.raw(kFeatureMagic, 4);
  w.u32(kFeatureFileVersion);
  w.u64(features.rows());
  w.u32(static_cast<std::uint32_t>(features.cols()));
  w.u8(0);
  w.zeros(7);
  for (double v : features.values()) w.f32(static_cast<float>(v));
  detail::write_file_bytes(path, w.bytes());
}

FeatureFileHeader read_feature_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> head(kFeatureHeaderBytes);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  detail::ByteReader r(head, path.string());
  return parse_header(r, path.string());
}

Matrix read_feature_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  detail::ByteReader r(bytes, path.string());
  const FeatureFileHeader h = parse_header(r, path.string());
  const std::uint64_t expected = h.count * h.dim * 4;
  if (r.remaining() < expected) {
    throw TruncatedError(path.string() + ": payload has " + std::to_string(r.remaining()) +
                         " bytes, header promises " + std::to_string(expected));
  }
  if (r.remaining() > expected) {
    throw FormatError(path.string() + ": " + std::to_string(r.remaining() - expected) +
                      " trailing bytes after payload");
  }
  Matrix m(h.count, h.dim);
  for (double& v : m.values()) {
    v = static_cast<double>(r.f32());
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite feature value");
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, std::span<const std::string> ids,
                    std::span<const double> scores) {
  if (ids.size() != scores.size()) throw DataError("write_manifest: ids/scores length mismatch");
  std::ostringstream os;
  os << "id,score\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i].find_first_of(",\n\r") != std::string::npos) {
      throw DataError("write_manifest: id '" + ids[i] + "' contains a separator");
    }
    os << ids[i] << ',' << format_double(scores[i]) << '\n';
  }
  detail::write_file_text(path, os.str());
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty manifest");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (trim(line) != "id,score") {
    throw DataError(path.string() + ": header must be 'id,score', got '" + trim(line) + "'");
  }
  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected exactly two fields");
    }
    ManifestRow row;
    row.id = trim(std::string_view(line).substr(0, comma));
    const std::string score = trim(std::string_view(line).substr(comma + 1));
    const auto res = std::from_chars(score.data(), score.data() + score.size(), row.score);
    if (res.ec != std::errc() || res.ptr != score.data() + score.size() ||
        !std::isfinite(row.score)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad score '" + score +
                      "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_descriptor(const std::filesystem::path& path, const DatasetDescriptor& d) {
  std::ostringstream os;
  if (!d.name.empty()) os << "name = " << d.name << '\n';
  os << "features = " << d.features.generic_string() << '\n';
  os << "manifest = " << d.manifest.generic_string() << '\n';
  os << "polarity = " << polarity_name(d.polarity) << '\n';
  detail::write_file_text(path, os.str());
}

DatasetDescriptor read_descriptor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open descriptor '" + path.string() + "'");
  DatasetDescriptor d;
  bool have_features = false, have_manifest = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key == "name") {
      d.name = value;
    } else if (key == "features") {
      d.features = value;
      have_features = true;
    } else if (key == "manifest") {
      d.manifest = value;
      have_manifest = true;
    } else if (key == "polarity") {
      d.polarity = parse_polarity(value);
    } else {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key +
                      "'");
    }
  }
  if (!have_features || !have_manifest) {
    throw DataError(path.string() + ": descriptor needs both 'features' and 'manifest'");
  }
  const auto base = path.parent_path();
  if (d.features.is_relative()) d.features = base / d.features;
  if (d.manifest.is_relative()) d.manifest = base / d.manifest;
  return d;
}

LoadedDataset load_dataset(const std::filesystem::path& descriptor_path) {
  const DatasetDescriptor d = read_descriptor(descriptor_path);
  Matrix features = read_feature_file(d.features);
  std::vector<ManifestRow> rows = read_manifest(d.manifest);
  if (rows.size() != features.rows()) {
    throw DataError("manifest '" + d.manifest.string() + "' has " + std::to_string(rows.size()) +
                    " rows but feature file '" + d.features.string() + "' has " +
                    std::to_string(features.rows()));
  }
  std::vector<std::string> ids;
  std::vector<double> scores;
  ids.reserve(rows.size());
  scores.reserve(rows.size());
  for (auto& r : rows) {
    ids.push_back(std::move(r.id));
    scores.push_back(r.score);
  }
  LoadedDataset out;
  out.dataset = FeatureDataset::from_raw(std::move(ids), std::move(features), std::move(scores),
                                         d.polarity, &out.warnings);
  out.dataset.name = d.name.empty() ? descriptor_path.stem().string() : d.name;
  return out;
}

}  // namespace lpf
