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

#ifndef CFMIMO_RANDOM_HPP
#define CFMIMO_RANDOM_HPP

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace cfmimo {

using Rng = std::mt19937_64;

// Counter-based seed split: a master seed and a path of integer keys
// (realization index, stream purpose, attempt, ...) map to an independent
// engine seed. Results do not depend on the order streams are created in.
inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys)
{
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t k : keys)
        h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
    return h;
}

inline Rng make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> keys)
{
    return Rng(derive_seed(master, keys));
}

// Stream purposes used by the experiment driver.
enum class Stream : std::uint64_t {
    layout = 1,
    shadowing = 2,
    pilots = 3,
    small_scale = 4,
    uplink_noise = 5,
    downlink_noise = 6,
};

// Circularly-symmetric complex normal with unit variance: E|z|^2 = 1.
inline std::complex<double> complex_normal(Rng& rng)
{
    std::normal_distribution<double> n(0.0, std::sqrt(0.5));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

} // namespace cfmimo

#endif
