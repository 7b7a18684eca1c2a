// Copyright 2026 The latefuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LATEFUSE_LATEFUSE_HPP
#define LATEFUSE_LATEFUSE_HPP

#include "latefuse/core.hpp"
#include "latefuse/csv.hpp"
#include "latefuse/dataio.hpp"
#include "latefuse/fusion.hpp"
#include "latefuse/metrics.hpp"
#include "latefuse/nn.hpp"
#include "latefuse/noise.hpp"
#include "latefuse/pipeline.hpp"
#include "latefuse/rng.hpp"
#include "latefuse/synth.hpp"
#include "latefuse/text_clean.hpp"

#endif  // LATEFUSE_LATEFUSE_HPP
