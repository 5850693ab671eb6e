// sasv/sasv.hpp

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

#include "sasv/backends.hpp"
#include "sasv/checkpoint.hpp"
#include "sasv/dataio.hpp"
#include "sasv/embedding_store.hpp"
#include "sasv/errors.hpp"
#include "sasv/experiment.hpp"
#include "sasv/metrics.hpp"
#include "sasv/rssd.hpp"
#include "sasv/tensor.hpp"
#include "sasv/types.hpp"

namespace sasv {
inline constexpr const char* kVersion = "0.1.0";
}  // namespace sasv
