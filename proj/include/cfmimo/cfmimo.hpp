// SPDX-License-Identifier: Apache-2.0
//
// cfmimo - cell-free massive MIMO downlink beamforming toolkit
// Copyright (C) 2026 The cfmimo authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef CFMIMO_CFMIMO_HPP
#define CFMIMO_CFMIMO_HPP

#include "cfmimo/units.hpp"
#include "cfmimo/random.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/conic.hpp"
#include "cfmimo/beamform.hpp"
#include "cfmimo/downlink.hpp"
#include "cfmimo/harness.hpp"

#endif
