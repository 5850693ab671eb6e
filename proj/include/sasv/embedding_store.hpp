// sasv/embedding_store.hpp

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

#include <map>
#include <string>
#include <vector>

#include "sasv/errors.hpp"
#include "sasv/tensor.hpp"

namespace sasv {

/// Id-keyed set of fixed-dimension embeddings.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  /// Throws DataError on a duplicate id or a dimension that differs from
  /// the first inserted embedding.
  void insert(const std::string& id, Vector values) {
    if (values.empty()) throw DataError("embedding " + id + " is empty");
    if (!entries_.empty() && values.size() != dim_)
      throw DataError("embedding " + id + " has dim " + std::to_string(values.size()) +
                      ", store dim is " + std::to_string(dim_));
    if (entries_.count(id)) throw DataError("duplicate embedding id " + id);
    dim_ = values.size();
    entries_.emplace(id, std::move(values));
  }

  const Vector& at(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw MissingEntryError("missing embedding " + id, id);
    return it->second;
  }

  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return dim_; }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [id, v] : entries_) out.push_back(id);
    return out;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, Vector> entries_;
  std::size_t dim_ = 0;
};

}  // namespace sasv
