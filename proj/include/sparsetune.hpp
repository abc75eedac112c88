// Copyright 2026 The sparsetune Authors
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

#pragma once

#include "sparsetune/activation_stats.hpp"
#include "sparsetune/allocation.hpp"
#include "sparsetune/dataset.hpp"
#include "sparsetune/errors.hpp"
#include "sparsetune/finite_diff.hpp"
#include "sparsetune/importance.hpp"
#include "sparsetune/matrix.hpp"
#include "sparsetune/network.hpp"
#include "sparsetune/rng.hpp"
#include "sparsetune/select.hpp"
#include "sparsetune/sparse_tuner.hpp"
#include "sparsetune/workbench/checkpoint.hpp"
#include "sparsetune/workbench/config.hpp"
#include "sparsetune/workbench/mask_file.hpp"
#include "sparsetune/workbench/metrics.hpp"
#include "sparsetune/workbench/pipeline.hpp"
#include "sparsetune/workbench/synthetic.hpp"
#include "sparsetune/workbench/tensor_dump.hpp"
