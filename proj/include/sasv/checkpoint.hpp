// sasv/checkpoint.hpp

// Copyright 2026  The sasv-toolkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Model checkpoints, little-endian:
//
//   char[4] "SVCK" | u32 version = 1 | u32 kind (1 asp, 2 mlp, 3 rssd)
//   f64 scalar (asp: sigma floor; mlp, rssd: leaky ReLU slope)
//   u32 layer count
//   per layer: u32 out | u32 in | f64[out * in] weight (row-major) | f64[out] bias
//
// Layer order: asp = attention hidden, attention out, projection, classifier;
// mlp = fc1, fc2, fc3, classifier; rssd = fc1, fc2, fc3.

#pragma once

#include <string>
#include <variant>
#include <vector>

#include "sasv/backends.hpp"
#include "sasv/dataio.hpp"
#include "sasv/rssd.hpp"

namespace sasv {

inline constexpr std::string_view kCheckpointMagic = "SVCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kRssdKindTag = 3;

using CmModel = std::variant<AspBackend, MlpBackend>;

namespace detail {

inline void encode_layers(std::string& out, std::uint32_t kind, double scalar,
                          const std::vector<const DenseLayer*>& layers) {
  out.append(kCheckpointMagic);
  le::put(out, kCheckpointVersion);
  le::put(out, kind);
  le::put(out, scalar);
  le::put(out, checked_u32(layers.size(), "layer count"));
  for (const DenseLayer* l : layers) {
    le::put(out, checked_u32(l->out_dim(), "layer rows"));
    le::put(out, checked_u32(l->in_dim(), "layer cols"));
    for (double w : l->weight.data()) le::put(out, w);
    for (double b : l->bias) le::put(out, b);
  }
}

struct DecodedCheckpoint {
  std::uint32_t kind;
  double scalar;
  std::vector<DenseLayer> layers;
};

inline DecodedCheckpoint decode_layers(std::string_view bytes, const std::string& source) {
  le::Reader r(bytes, source);
  r.expect_magic(kCheckpointMagic);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError(FormatError::Kind::kBadVersion, 4,
                      source + ": unsupported checkpoint version " + std::to_string(version));
  DecodedCheckpoint d;
  d.kind = r.get<std::uint32_t>("kind");
  d.scalar = r.get<double>("scalar");
  const auto count = r.get<std::uint32_t>("layer count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto rows = r.get<std::uint32_t>("layer rows");
    const auto cols = r.get<std::uint32_t>("layer cols");
    if (rows == 0 || cols == 0)
      throw FormatError(FormatError::Kind::kBadShape, r.offset(),
                        source + ": layer " + std::to_string(k) + " has a zero dimension");
    r.need(8ull * (std::uint64_t{rows} * cols + rows), "layer parameters");
    DenseLayer l(cols, rows);
    for (double& w : l.weight.data()) w = r.get<double>("weight");
    for (double& b : l.bias) b = r.get<double>("bias");
    d.layers.push_back(std::move(l));
  }
  r.expect_end();
  return d;
}

inline void expect_layout(const DecodedCheckpoint& d, std::size_t count,
                          const std::vector<std::pair<std::size_t, std::size_t>>& chained,
                          const std::string& source) {
  if (d.layers.size() != count)
    throw FormatError(FormatError::Kind::kBadShape, 0,
                      source + ": expected " + std::to_string(count) + " layers, found " +
                          std::to_string(d.layers.size()));
  for (auto [from, to] : chained)
    if (d.layers[from].out_dim() != d.layers[to].in_dim())
      throw FormatError(FormatError::Kind::kBadShape, 0,
                        source + ": layer " + std::to_string(from) + " output does not feed layer " +
                            std::to_string(to));
}

}  // namespace detail

inline std::string encode_checkpoint(const AspBackend& b) {
  std::string out;
  detail::encode_layers(out, static_cast<std::uint32_t>(BackendKind::kAsp), b.sigma_floor,
                        {&b.attention.hidden, &b.attention.out, &b.projection, &b.classifier});
  return out;
}

inline std::string encode_checkpoint(const MlpBackend& b) {
  std::string out;
  detail::encode_layers(out, static_cast<std::uint32_t>(BackendKind::kMlp), b.slope,
                        {&b.layers[0], &b.layers[1], &b.layers[2], &b.classifier});
  return out;
}

inline std::string encode_checkpoint(const RssdModel& m) {
  std::string out;
  detail::encode_layers(out, kRssdKindTag, m.slope, {&m.layers[0], &m.layers[1], &m.layers[2]});
  return out;
}

inline std::string encode_checkpoint(const CmModel& m) {
  return std::visit([](const auto& b) { return encode_checkpoint(b); }, m);
}

inline CmModel decode_cm_checkpoint(std::string_view bytes, const std::string& source) {
  auto d = detail::decode_layers(bytes, source);
  if (d.kind == static_cast<std::uint32_t>(BackendKind::kAsp)) {
    detail::expect_layout(d, 4, {{2, 3}}, source);
    if (d.layers[1].out_dim() != 1 || d.layers[0].out_dim() != d.layers[1].in_dim() ||
        d.layers[2].in_dim() != 2 * d.layers[0].in_dim() || d.layers[3].out_dim() != 2)
      throw FormatError(FormatError::Kind::kBadShape, 0, source + ": inconsistent ASP layer shapes");
    return AspBackend{{std::move(d.layers[0]), std::move(d.layers[1])},
                      std::move(d.layers[2]),
                      std::move(d.layers[3]),
                      d.scalar};
  }
  if (d.kind == static_cast<std::uint32_t>(BackendKind::kMlp)) {
    detail::expect_layout(d, 4, {{0, 1}, {1, 2}, {2, 3}}, source);
    if (d.layers[3].out_dim() != 2)
      throw FormatError(FormatError::Kind::kBadShape, 0, source + ": classifier must have 2 outputs");
    return MlpBackend{{std::move(d.layers[0]), std::move(d.layers[1]), std::move(d.layers[2])},
                      std::move(d.layers[3]),
                      d.scalar};
  }
  throw FormatError(FormatError::Kind::kBadShape, 8,
                    source + ": checkpoint kind " + std::to_string(d.kind) + " is not a CM back-end");
}

inline RssdModel decode_rssd_checkpoint(std::string_view bytes, const std::string& source) {
  auto d = detail::decode_layers(bytes, source);
  if (d.kind != kRssdKindTag)
    throw FormatError(FormatError::Kind::kBadShape, 8,
                      source + ": checkpoint kind " + std::to_string(d.kind) + " is not RSSD");
  detail::expect_layout(d, 3, {{0, 1}, {1, 2}}, source);
  return RssdModel{{std::move(d.layers[0]), std::move(d.layers[1]), std::move(d.layers[2])},
                   d.scalar,
                   GateKind::kHadamard};
}

template <class Model>
void save_checkpoint(const fs::path& path, const Model& m) {
  write_file_bytes(path, encode_checkpoint(m));
}

inline CmModel load_cm_checkpoint(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_cm_checkpoint(bytes, path.string());
}

inline RssdModel load_rssd_checkpoint(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_rssd_checkpoint(bytes, path.string());
}

}  // namespace sasv
