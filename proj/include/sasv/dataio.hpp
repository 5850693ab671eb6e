// sasv/dataio.hpp

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

/*
   File formats shared with the feature / embedding extractor.

   Feature file (<utt>.layer<k>.w2vf), all fields little-endian:
     char[4] "W2VF" | u32 version = 1 | u32 frames T | u32 dim D | u32 layer
     float32[T * D] frame-major payload

   Embedding file (<id>.emb):
     char[4] "EMB1" | u32 version = 1 | u32 dim | float32[dim]

   Text formats are whitespace separated, one record per line:
     CM protocol   speaker utterance - attack|- bonafide|spoof
     SASV trials   enrollment test target|nontarget|spoof [attack]
     enrollment    model_id utt [utt ...]
     scores        enroll<TAB>test<TAB>score<TAB>label[<TAB>attack]
*/

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sasv/embedding_store.hpp"
#include "sasv/errors.hpp"
#include "sasv/metrics.hpp"
#include "sasv/types.hpp"

namespace sasv {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Little-endian byte buffers

namespace le {

template <class T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T> && (sizeof(T) == 4 || sizeof(T) == 8));
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

/// Cursor over an in-memory file image; every read is bounds checked.
class Reader {
 public:
  Reader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <class T>
  T get(const char* field) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    need(sizeof(T), field);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (bytes_.substr(pos_, magic.size()) != magic)
      throw FormatError(FormatError::Kind::kBadMagic, pos_,
                        source_ + ": bad magic, expected \"" + std::string(magic) + "\"");
    pos_ += magic.size();
  }

  void need(std::uint64_t n, const char* field) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError(FormatError::Kind::kTruncated, pos_,
                        source_ + ": truncated while reading " + field);
  }

  void expect_end() const {
    if (pos_ != bytes_.size())
      throw FormatError(FormatError::Kind::kTrailingData, pos_,
                        source_ + ": " + std::to_string(bytes_.size() - pos_) + " trailing bytes");
  }

  std::uint64_t offset() const { return pos_; }
  const std::string& source() const { return source_; }

 private:
  std::string_view bytes_;
  std::string source_;
  std::uint64_t pos_ = 0;
};

}  // namespace le

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, 0, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::kIo, 0, "short write to " + path.string());
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw std::overflow_error(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

// ---------------------------------------------------------------------------
// Feature files

inline constexpr std::string_view kFeatureMagic = "W2VF";
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 20;

inline std::string encode_feature_file(const FeatureMatrix& f) {
  if (f.values.empty()) throw ShapeError("write_feature_file: empty feature matrix");
  std::string out;
  out.reserve(kFeatureHeaderBytes + 4 * f.values.size());
  out.append(kFeatureMagic);
  le::put(out, kFeatureVersion);
  le::put(out, checked_u32(f.frames(), "frame count"));
  le::put(out, checked_u32(f.dim(), "feature dim"));
  le::put(out, f.layer);
  for (double v : f.values.data()) le::put(out, static_cast<float>(v));
  return out;
}

/// `utterance_id` is not stored in the file; callers pass it in.
inline FeatureMatrix decode_feature_file(std::string_view bytes, const std::string& source,
                                         std::string utterance_id = {}) {
  le::Reader r(bytes, source);
  r.expect_magic(kFeatureMagic);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFeatureVersion)
    throw FormatError(FormatError::Kind::kBadVersion, 4,
                      source + ": unsupported version " + std::to_string(version));
  const auto frames = r.get<std::uint32_t>("frame count");
  const auto dim = r.get<std::uint32_t>("feature dim");
  const auto layer = r.get<std::uint32_t>("layer index");
  if (frames == 0 || dim == 0)
    throw FormatError(FormatError::Kind::kBadShape, 8,
                      source + ": shape " + std::to_string(frames) + "x" + std::to_string(dim) +
                          " has a zero dimension");
  const std::uint64_t count = std::uint64_t{frames} * dim;
  r.need(4 * count, "payload");
  std::vector<double> values(count);
  for (auto& v : values) {
    const auto at = r.offset();
    v = r.get<float>("payload");
    if (!std::isfinite(v))
      throw FormatError(FormatError::Kind::kBadShape, at, source + ": non-finite feature value");
  }
  r.expect_end();
  return {std::move(utterance_id), layer, Matrix(frames, dim, std::move(values))};
}

inline void write_feature_file(const fs::path& path, const FeatureMatrix& f) {
  write_file_bytes(path, encode_feature_file(f));
}

inline FeatureMatrix read_feature_file(const fs::path& path, std::string utterance_id = {}) {
  const std::string bytes = read_file_bytes(path);
  return decode_feature_file(bytes, path.string(), std::move(utterance_id));
}

/// <dir>/<utt>.layer<k>.w2vf
inline fs::path feature_path(const fs::path& dir, const std::string& utterance_id, std::uint32_t layer) {
  return dir / (utterance_id + ".layer" + std::to_string(layer) + ".w2vf");
}

// ---------------------------------------------------------------------------
// Embedding files and stores

inline constexpr std::string_view kEmbeddingMagic = "EMB1";
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::string_view kEmbeddingExtension = ".emb";

inline std::string encode_embedding_file(std::span<const double> values) {
  if (values.empty()) throw ShapeError("write_embedding_file: empty embedding");
  std::string out;
  out.append(kEmbeddingMagic);
  le::put(out, kEmbeddingVersion);
  le::put(out, checked_u32(values.size(), "embedding dim"));
  for (double v : values) le::put(out, static_cast<float>(v));
  return out;
}

inline Vector decode_embedding_file(std::string_view bytes, const std::string& source) {
  le::Reader r(bytes, source);
  r.expect_magic(kEmbeddingMagic);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kEmbeddingVersion)
    throw FormatError(FormatError::Kind::kBadVersion, 4,
                      source + ": unsupported version " + std::to_string(version));
  const auto dim = r.get<std::uint32_t>("dim");
  if (dim == 0) throw FormatError(FormatError::Kind::kBadShape, 8, source + ": zero dimension");
  r.need(4ull * dim, "payload");
  Vector v(dim);
  for (auto& x : v) x = r.get<float>("payload");
  r.expect_end();
  return v;
}

inline void write_embedding_file(const fs::path& path, std::span<const double> values) {
  write_file_bytes(path, encode_embedding_file(values));
}

inline Vector read_embedding_file(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  return decode_embedding_file(bytes, path.string());
}

inline fs::path embedding_path(const fs::path& dir, const std::string& id) {
  return dir / (id + std::string(kEmbeddingExtension));
}

/// Loads every *.emb below `dir` (recursively); the id is the file stem.
inline EmbeddingStore load_embedding_store(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw FormatError(FormatError::Kind::kIo, 0, "embedding directory " + dir.string() + " not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == kEmbeddingExtension)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  EmbeddingStore store;
  std::map<std::string, fs::path> seen;
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    if (auto it = seen.find(id); it != seen.end())
      throw DataError("duplicate embedding id " + id + " in " + it->second.string() + " and " +
                      f.string());
    seen.emplace(id, f);
    store.insert(id, read_embedding_file(f));
  }
  return store;
}

inline void save_embedding_store(const fs::path& dir, const EmbeddingStore& store) {
  for (const auto& [id, v] : store) write_embedding_file(embedding_path(dir, id), v);
}

// ---------------------------------------------------------------------------
// Text protocols

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream ss(line);
  std::string f;
  while (ss >> f) fields.push_back(f);
  return fields;
}

/// Calls fn(line_number, fields) for every nonblank line.
template <class Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    fn(number, fields);
  }
}

inline bool is_attack_id(std::string_view s) {
  return s.size() == 3 && s[0] == 'A' && std::isdigit(static_cast<unsigned char>(s[1])) &&
         std::isdigit(static_cast<unsigned char>(s[2]));
}

}  // namespace detail

struct CmProtocolRecord {
  std::string speaker_id;
  std::string utterance_id;
  std::optional<std::string> attack;
  Label key = Label::kBonafide;

  friend bool operator==(const CmProtocolRecord&, const CmProtocolRecord&) = default;
};

inline std::vector<CmProtocolRecord> parse_cm_protocol(std::istream& in) {
  std::vector<CmProtocolRecord> out;
  detail::for_each_record(in, [&](std::size_t n, const std::vector<std::string>& f) {
    if (f.size() != 5)
      throw ParseError(n, "expected 5 fields, got " + std::to_string(f.size()));
    const auto key = parse_label(f[4]);
    if (!key || (*key != Label::kBonafide && *key != Label::kSpoof))
      throw ParseError(n, "unknown key '" + f[4] + "' (expected bonafide or spoof)");
    std::optional<std::string> attack;
    if (f[3] != "-") {
      if (!detail::is_attack_id(f[3])) throw ParseError(n, "malformed attack id '" + f[3] + "'");
      attack = f[3];
    }
    if ((*key == Label::kBonafide) == attack.has_value())
      throw ParseError(n, *key == Label::kBonafide ? "bonafide record carries attack id " + f[3]
                                                   : std::string("spoof record has no attack id"));
    out.push_back({f[0], f[1], std::move(attack), *key});
  });
  return out;
}

inline std::vector<SasvTrial> parse_sasv_trials(std::istream& in) {
  std::vector<SasvTrial> out;
  detail::for_each_record(in, [&](std::size_t n, const std::vector<std::string>& f) {
    if (f.size() != 3 && f.size() != 4)
      throw ParseError(n, "expected 3 or 4 fields, got " + std::to_string(f.size()));
    const auto label = parse_label(f[2]);
    if (!label || *label == Label::kBonafide)
      throw ParseError(n, "unknown label '" + f[2] + "' (expected target, nontarget or spoof)");
    std::optional<std::string> attack;
    if (f.size() == 4) {
      if (!detail::is_attack_id(f[3])) throw ParseError(n, "malformed attack id '" + f[3] + "'");
      attack = f[3];
    }
    if ((*label == Label::kSpoof) != attack.has_value())
      throw ParseError(n, *label == Label::kSpoof ? std::string("spoof trial has no attack id")
                                                  : f[2] + " trial carries attack id " + f[3]);
    out.push_back({f[0], f[1], *label, std::move(attack)});
  });
  return out;
}

/// model id -> enrollment utterance ids, in file order.
inline std::vector<std::pair<std::string, std::vector<std::string>>> parse_enrollment_list(
    std::istream& in) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::map<std::string, std::size_t> seen;
  detail::for_each_record(in, [&](std::size_t n, const std::vector<std::string>& f) {
    if (f.size() < 2) throw ParseError(n, "expected a model id and at least one utterance");
    if (seen.count(f[0])) throw ParseError(n, "duplicate enrollment model " + f[0]);
    seen.emplace(f[0], out.size());
    out.emplace_back(f[0], std::vector<std::string>(f.begin() + 1, f.end()));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Score files

inline void write_scores(std::ostream& os, std::span<const ScoreRecord> records) {
  for (const auto& r : records) {
    os << r.enrollment_id.value_or("-") << '\t' << r.test_id << '\t' << format_real(r.score) << '\t'
       << to_string(r.label);
    if (r.attack) os << '\t' << *r.attack;
    os << '\n';
  }
}

inline std::vector<ScoreRecord> read_scores(std::istream& in) {
  std::vector<ScoreRecord> out;
  detail::for_each_record(in, [&](std::size_t n, const std::vector<std::string>& f) {
    if (f.size() != 4 && f.size() != 5)
      throw ParseError(n, "expected 4 or 5 fields, got " + std::to_string(f.size()));
    ScoreRecord r;
    if (f[0] != "-") r.enrollment_id = f[0];
    r.test_id = f[1];
    std::size_t used = 0;
    try {
      r.score = std::stod(f[2], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != f[2].size() || !std::isfinite(r.score))
      throw ParseError(n, "score '" + f[2] + "' is not a finite number");
    const auto label = parse_label(f[3]);
    if (!label) throw ParseError(n, "unknown label '" + f[3] + "'");
    r.label = *label;
    if (f.size() == 5) r.attack = f[4];
    out.push_back(std::move(r));
  });
  return out;
}

inline void write_scores_file(const fs::path& path, std::span<const ScoreRecord> records) {
  std::ostringstream os;
  write_scores(os, records);
  write_file_bytes(path, os.str());
}

inline std::vector<ScoreRecord> read_scores_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + path.string());
  return read_scores(in);
}

template <class Parser>
auto parse_file(const fs::path& path, Parser parser) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, 0, "cannot open " + path.string());
  try {
    return parser(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " +
                                   std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
  }
}

}  // namespace sasv
