// tests/support/fixtures.hpp

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

// On-disk fixtures, scratch directories and random payloads for the file
// format tests.

#pragma once

#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "sasv/sasv.hpp"

#ifndef SASV_FIXTURE_DIR
#error "SASV_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace sasv::fixtures {

inline fs::path root() { return fs::path(SASV_FIXTURE_DIR); }

/// Removed with its contents on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "sasv") {
    std::string pattern = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (::mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed for " + pattern);
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) { write_file_bytes(path, text); }

/// tests/fixtures/malformed/<parser>_<case>.line<N>.txt
struct MalformedFixture {
  fs::path path;
  std::string parser;  // cm, trials, enroll or scores
  std::size_t line;
};

inline std::vector<MalformedFixture> malformed() {
  std::vector<MalformedFixture> out;
  for (const auto& e : fs::directory_iterator(root() / "malformed")) {
    const std::string name = e.path().filename().string();
    const auto dot = name.find(".line");
    out.push_back({e.path(), name.substr(0, name.find('_')),
                   static_cast<std::size_t>(std::stoul(name.substr(dot + 5)))});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  return out;
}

/// Runs the parser named by the fixture and returns the number of records.
inline std::size_t parse_with(const std::string& parser, const fs::path& path) {
  if (parser == "cm") return parse_file(path, parse_cm_protocol).size();
  if (parser == "trials") return parse_file(path, parse_sasv_trials).size();
  if (parser == "enroll") return parse_file(path, parse_enrollment_list).size();
  if (parser == "scores") return parse_file(path, read_scores).size();
  throw std::invalid_argument("unknown fixture parser " + parser);
}

/// Values exactly representable as 32-bit floats, including extremes.
inline double float_value(Rng& rng) {
  static const double special[] = {0.0,
                                   -0.0,
                                   1.0,
                                   static_cast<double>(std::numeric_limits<float>::max()),
                                   static_cast<double>(std::numeric_limits<float>::lowest()),
                                   static_cast<double>(std::numeric_limits<float>::denorm_min()),
                                   static_cast<double>(std::numeric_limits<float>::min())};
  std::uniform_int_distribution<int> pick(0, 19);
  std::normal_distribution<double> g(0.0, 10.0);
  const int k = pick(rng);
  if (k < 7) return special[k];
  return static_cast<double>(static_cast<float>(g(rng)));
}

inline FeatureMatrix random_features(Rng& rng, std::size_t max_frames = 12, std::size_t max_dim = 9) {
  std::uniform_int_distribution<std::size_t> t(1, max_frames), d(1, max_dim);
  std::uniform_int_distribution<std::uint32_t> layer(0, 23);
  Matrix m(t(rng), d(rng));
  for (double& v : m.data()) v = float_value(rng);
  return {"utt", layer(rng), std::move(m)};
}

inline Vector random_embedding(Rng& rng, std::size_t max_dim = 200) {
  std::uniform_int_distribution<std::size_t> d(1, max_dim);
  Vector v(d(rng));
  for (double& x : v) x = float_value(rng);
  return v;
}

}  // namespace sasv::fixtures
