// sasv/types.hpp

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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "sasv/tensor.hpp"

namespace sasv {

/// Trial / utterance labels.  CM sets use {bonafide, spoof}; SASV trial
/// sets use {target, nontarget, spoof}.
enum class Label { kBonafide, kSpoof, kTarget, kNontarget };

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::kBonafide: return "bonafide";
    case Label::kSpoof: return "spoof";
    case Label::kTarget: return "target";
    case Label::kNontarget: return "nontarget";
  }
  return "?";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "bonafide") return Label::kBonafide;
  if (s == "spoof") return Label::kSpoof;
  if (s == "target") return Label::kTarget;
  if (s == "nontarget") return Label::kNontarget;
  return std::nullopt;
}

/// True for every label that denotes genuine human speech.
inline bool is_bona_fide(Label l) { return l != Label::kSpoof; }

/// T x D feature sequence from one extractor layer.
struct FeatureMatrix {
  std::string utterance_id;
  std::uint32_t layer = 0;
  Matrix values;

  std::size_t frames() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }
};

enum class BackendKind : std::uint32_t { kAsp = 1, kMlp = 2 };

inline std::string_view to_string(BackendKind k) { return k == BackendKind::kAsp ? "asp" : "mlp"; }

inline std::optional<BackendKind> parse_backend_kind(std::string_view s) {
  if (s == "asp") return BackendKind::kAsp;
  if (s == "mlp") return BackendKind::kMlp;
  return std::nullopt;
}

struct CmEmbedding {
  std::string utterance_id;
  Vector values;
  BackendKind source = BackendKind::kAsp;
};

struct SpeakerEmbedding {
  std::string id;
  Vector values;

  double norm() const { return l2_norm(values); }
};

struct SasvTrial {
  std::string enrollment_id;
  std::string test_id;
  Label label = Label::kTarget;
  std::optional<std::string> attack;

  friend bool operator==(const SasvTrial&, const SasvTrial&) = default;
};

}  // namespace sasv
