// Copyright 2026 The affsim Authors
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

#include "affsim/affordance.hpp"
#include "affsim/collision.hpp"
#include "affsim/common.hpp"
#include "affsim/controller.hpp"
#include "affsim/dataset.hpp"
#include "affsim/geo.hpp"
#include "affsim/learner.hpp"
#include "affsim/raster.hpp"
#include "affsim/road.hpp"
#include "affsim/scenario.hpp"
#include "affsim/service.hpp"
#include "affsim/sim.hpp"
#include "affsim/world.hpp"
