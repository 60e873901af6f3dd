#pragma once

// On-disk networks and vectors.
//
// A network directory holds manifest.json
//   {"widths": [k, n1, ..., nd], "scale": "two_over_fanout" | "one_over_fanout" | "external",
//    "layers": [{"rows": n1, "cols": k, "file": "W1.bin"}, ...]}
// plus one file per layer of rows*cols little-endian IEEE-754 doubles, row-major.
//
// A vector file is raw little-endian doubles with a sidecar FILE.json {"dim": n}.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "genprior/errors.hpp"
#include "genprior/generator.hpp"
#include "genprior/numerics.hpp"

namespace genprior {

class ManifestError : public Error {
 public:
  enum class Kind { io, malformed, shape_mismatch, non_finite, truncated };

  ManifestError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return out;
  }
}

inline void write_doubles(const std::filesystem::path& path, const double* data, std::size_t count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ManifestError(ManifestError::Kind::io, "cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(data[i]);
    bits = to_little_endian(bits);
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
  if (!out) throw ManifestError(ManifestError::Kind::io, "write failed for " + path.string());
}

// Reads exactly `count` doubles; a short or long file is a truncation error.
inline void read_doubles(const std::filesystem::path& path, double* data, std::size_t count) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw ManifestError(ManifestError::Kind::io, "cannot stat " + path.string());
  if (size != count * 8) {
    throw ManifestError(ManifestError::Kind::truncated,
                        path.string() + " holds " + std::to_string(size) + " bytes, expected " +
                            std::to_string(count * 8));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError(ManifestError::Kind::io, "cannot open " + path.string());
  for (std::size_t i = 0; i < count; ++i) {
    char buf[8];
    in.read(buf, 8);
    if (!in) throw ManifestError(ManifestError::Kind::truncated, "unexpected end of " + path.string());
    std::uint64_t bits;
    std::memcpy(&bits, buf, 8);
    data[i] = std::bit_cast<double>(to_little_endian(bits));
    if (!std::isfinite(data[i]))
      throw ManifestError(ManifestError::Kind::non_finite,
                          path.string() + ": entry " + std::to_string(i) + " is not finite");
  }
}

template <typename T>
T json_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw ManifestError(ManifestError::Kind::malformed, where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(ManifestError::Kind::malformed, where + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline void save_manifest(const std::filesystem::path& dir, const GeneratorNetwork& g) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ManifestError(ManifestError::Kind::io, "cannot create " + dir.string());
  nlohmann::json j;
  j["widths"] = g.widths();
  j["scale"] = to_string(g.scale());
  j["layers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < g.depth(); ++i) {
    const Matrix& w = g.layer(i);
    const std::string file = "W" + std::to_string(i + 1) + ".bin";
    j["layers"].push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"file", file}});
    detail::write_doubles(dir / file, w.data(), static_cast<std::size_t>(w.size()));
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw ManifestError(ManifestError::Kind::io, "cannot write manifest in " + dir.string());
  out << j.dump(2) << "\n";
}

inline GeneratorNetwork load_manifest(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ManifestError(ManifestError::Kind::io, "cannot open " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(ManifestError::Kind::malformed, manifest_path.string() + ": " + e.what());
  }
  const std::string where = manifest_path.string();
  const auto widths = detail::json_field<std::vector<std::int64_t>>(j, "widths", where);
  const auto scale_name = detail::json_field<std::string>(j, "scale", where);
  const auto layers = detail::json_field<nlohmann::json>(j, "layers", where);
  WeightScale scale;
  try {
    scale = weight_scale_from_string(scale_name);
  } catch (const ConfigError& e) {
    throw ManifestError(ManifestError::Kind::malformed, where + ": " + e.what());
  }
  if (!layers.is_array() || layers.empty())
    throw ManifestError(ManifestError::Kind::malformed, where + ": 'layers' must be a nonempty array");
  if (widths.size() != layers.size() + 1)
    throw ManifestError(ManifestError::Kind::shape_mismatch, where + ": widths do not match layer count");
  for (auto w : widths)
    if (w < 1) throw ManifestError(ManifestError::Kind::malformed, where + ": widths must be positive");

  std::vector<Matrix> weights;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string lw = where + " layer " + std::to_string(i + 1);
    const auto rows = detail::json_field<std::int64_t>(layers[i], "rows", lw);
    const auto cols = detail::json_field<std::int64_t>(layers[i], "cols", lw);
    const auto file = detail::json_field<std::string>(layers[i], "file", lw);
    if (rows != widths[i + 1] || cols != widths[i])
      throw ManifestError(ManifestError::Kind::shape_mismatch,
                          lw + ": shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                              " does not chain with widths");
    Matrix w(rows, cols);
    detail::read_doubles(dir / file, w.data(), static_cast<std::size_t>(rows * cols));
    weights.push_back(std::move(w));
  }
  return GeneratorNetwork(std::move(weights), scale);
}

inline void write_vector(const std::filesystem::path& path, const Vector& v) {
  detail::write_doubles(path, v.data(), static_cast<std::size_t>(v.size()));
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) throw ManifestError(ManifestError::Kind::io, "cannot write sidecar for " + path.string());
  side << nlohmann::json{{"dim", v.size()}}.dump() << "\n";
}

inline Vector read_vector(const std::filesystem::path& path) {
  const std::string side_path = path.string() + ".json";
  std::ifstream side(side_path);
  if (!side) throw ManifestError(ManifestError::Kind::io, "cannot open sidecar " + side_path);
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(ManifestError::Kind::malformed, side_path + ": " + e.what());
  }
  const auto dim = detail::json_field<std::int64_t>(j, "dim", side_path);
  if (dim < 1) throw ManifestError(ManifestError::Kind::malformed, side_path + ": dim must be positive");
  Vector v(dim);
  detail::read_doubles(path, v.data(), static_cast<std::size_t>(dim));
  return v;
}

}  // namespace genprior
