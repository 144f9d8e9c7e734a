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

#include "cfmimo/scenario.hpp"
#include "test_oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace cfmimo;

TEST(WrapDistance, WrapsAcrossBoundary)
{
    EXPECT_NEAR(wrap_distance({0.05, 0.5}, {0.95, 0.5}, 1.0), 0.1, 1e-12);
}

TEST(WrapDistance, Identity)
{
    EXPECT_DOUBLE_EQ(wrap_distance({0.3, 0.7}, {0.3, 0.7}, 1.0), 0.0);
}

TEST(WrapDistance, NoWrapAtHalfDiagonal)
{
    EXPECT_NEAR(wrap_distance({0.0, 0.0}, {0.5, 0.5}, 1.0), std::sqrt(0.5), 1e-12);
}

TEST(WrapDistance, MatchesImageSearchAndIsAMetric)
{
    Rng rng(11);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int t = 0; t < 2000; ++t) {
        const Point p{u(rng), u(rng)}, q{u(rng), u(rng)}, r{u(rng), u(rng)};
        const double pq = wrap_distance(p, q, 2.0);
        EXPECT_NEAR(pq, oracle::torus_distance(p.x, p.y, q.x, q.y, 2.0), 1e-12);
        EXPECT_DOUBLE_EQ(pq, wrap_distance(q, p, 2.0));
        EXPECT_LE(pq, wrap_distance(p, r, 2.0) + wrap_distance(r, q, 2.0) + 1e-12);
        EXPECT_LE(pq, 2.0 * std::sqrt(2.0) / 2.0 + 1e-12);
    }
}

TEST(Layout, DeterministicAndInRange)
{
    SystemConfig cfg;
    Rng a(5), b(5);
    const Layout la = draw_layout(cfg, a);
    const Layout lb = draw_layout(cfg, b);
    ASSERT_EQ(la.ap_positions.size(), 100u);
    ASSERT_EQ(la.ue_positions.size(), 40u);
    for (std::size_t i = 0; i < la.ap_positions.size(); ++i) {
        EXPECT_EQ(la.ap_positions[i].x, lb.ap_positions[i].x);
        EXPECT_EQ(la.ap_positions[i].y, lb.ap_positions[i].y);
        EXPECT_GE(la.ap_positions[i].x, 0.0);
        EXPECT_LT(la.ap_positions[i].x, cfg.side_km);
    }
}

TEST(Layout, UniformMean)
{
    SystemConfig cfg;
    cfg.num_aps = 100000;
    cfg.num_ues = 1;
    Rng rng(3);
    const Layout l = draw_layout(cfg, rng);
    double sx = 0.0, sy = 0.0;
    for (const auto& p : l.ap_positions) {
        sx += p.x;
        sy += p.y;
    }
    EXPECT_NEAR(sx / 1e5, 0.5, 0.005);
    EXPECT_NEAR(sy / 1e5, 0.5, 0.005);
}

TEST(Pathloss, ReferenceDistance)
{
    SystemConfig cfg;
    EXPECT_NEAR(pathloss_db(1.0, cfg), -140.72, 1e-12);
}

TEST(Pathloss, HundredMetres)
{
    SystemConfig cfg;
    EXPECT_NEAR(pathloss_db(0.1, cfg), -105.72, 1e-9);
}

TEST(Pathloss, ClampsBelowMinimumDistance)
{
    SystemConfig cfg;
    EXPECT_DOUBLE_EQ(pathloss_db(0.0, cfg), pathloss_db(cfg.min_distance_km, cfg));
    EXPECT_DOUBLE_EQ(pathloss_db(0.001, cfg), pathloss_db(cfg.min_distance_km, cfg));
}

TEST(Pathloss, MonotoneInDistance)
{
    SystemConfig cfg;
    double prev = pathloss_db(0.01, cfg);
    for (double d = 0.02; d < 1.0; d += 0.01) {
        EXPECT_LT(pathloss_db(d, cfg), prev);
        prev = pathloss_db(d, cfg);
    }
}

TEST(LargeScale, ShadowingIsAdditiveInDb)
{
    SystemConfig cfg;
    cfg.num_aps = 1;
    cfg.num_ues = 1;
    Layout l{{{0.0, 0.0}}, {{0.1, 0.0}}};
    Rng rng(1);
    const BetaMatrix bm = large_scale(l, cfg, rng);
    const double base = std::pow(10.0, -105.72 / 10.0);
    EXPECT_NEAR(bm.beta(0, 0) / base, std::pow(10.0, bm.shadow_db(0, 0) / 10.0), 1e-9);
}

TEST(LargeScale, DeterministicWithoutShadowing)
{
    SystemConfig cfg;
    cfg.num_aps = 4;
    cfg.num_ues = 3;
    cfg.shadow_std_db = 0.0;
    Rng lr(2);
    const Layout l = draw_layout(cfg, lr);
    Rng a(7), b(99);
    EXPECT_TRUE(large_scale(l, cfg, a).beta.isApprox(large_scale(l, cfg, b).beta, 0.0));
}

TEST(LargeScale, ShadowingVariance)
{
    SystemConfig cfg;
    cfg.num_aps = 1000;
    cfg.num_ues = 100;
    Rng lr(4), sr(5);
    const BetaMatrix bm = large_scale(draw_layout(cfg, lr), cfg, sr);
    const double mean = bm.shadow_db.mean();
    const double var = (bm.shadow_db.array() - mean).square().mean();
    EXPECT_NEAR(var / 64.0, 1.0, 0.03);
    EXPECT_TRUE((bm.beta.array() > 0.0).all());
}

TEST(LinkBudget, NoisePowerAndSnr)
{
    SystemConfig cfg;
    const LinkBudget lb = link_budget(cfg);
    const double sigma2 = oracle::noise_power_w(20e6, 290.0, 9.0);
    EXPECT_NEAR(lb.noise_power_w / sigma2, 1.0, 1e-12);
    EXPECT_NEAR(lb.noise_power_w, 6.36e-13, 0.01e-13);
    EXPECT_NEAR(10.0 * std::log10(lb.noise_power_w) + 30.0, -91.97, 0.01);
    EXPECT_NEAR(lb.rho_d / (0.2 / sigma2), 1.0, 1e-2); // 23 dBm = 0.1995 W
    EXPECT_NEAR(lb.rho_d, 3.14e11, 0.01e11);
    EXPECT_DOUBLE_EQ(lb.rho_p, lb.rho_d);
}

TEST(LinkBudget, PowerEqualToNoiseGivesUnitSnr)
{
    SystemConfig cfg;
    const double noise_dbm = watt_to_dbm(link_budget(cfg).noise_power_w);
    cfg.pilot_power_dbm = noise_dbm;
    EXPECT_NEAR(link_budget(cfg).rho_p, 1.0, 1e-9);
}

TEST(Config, ParsesKeyValueFile)
{
    std::istringstream in("# comment\nnum_aps = 30  # trailing\nnum_ues=16\n\ntau_c = 300\ntau_b = 16\n"
                          "bandwidth_hz = 10e6\nrng_seed = 18446744073709551615\n");
    const SystemConfig cfg = parse_config(in);
    EXPECT_EQ(cfg.num_aps, 30);
    EXPECT_EQ(cfg.num_ues, 16);
    EXPECT_EQ(cfg.tau_c, 300);
    EXPECT_DOUBLE_EQ(cfg.bandwidth_hz, 10e6);
    EXPECT_EQ(cfg.rng_seed, 18446744073709551615ULL);
    EXPECT_DOUBLE_EQ(cfg.pathloss_ref_db, 140.72);
}

TEST(Config, RoundTrips)
{
    SystemConfig cfg;
    cfg.num_aps = 17;
    cfg.num_ues = 9;
    cfg.tau_b = 9;
    cfg.shadow_std_db = 6.5;
    std::stringstream ss;
    write_config(ss, cfg);
    const SystemConfig back = parse_config(ss);
    EXPECT_EQ(back.num_aps, 17);
    EXPECT_DOUBLE_EQ(back.shadow_std_db, 6.5);
}

TEST(Config, RejectsUnknownKeysAndBadValues)
{
    std::istringstream unknown("num_antennas = 4\n");
    EXPECT_THROW(parse_config(unknown), std::invalid_argument);
    std::istringstream junk("num_aps = many\n");
    EXPECT_THROW(parse_config(junk), std::invalid_argument);
    std::istringstream no_eq("num_aps 4\n");
    EXPECT_THROW(parse_config(no_eq), std::invalid_argument);
}

TEST(Config, ValidatesInvariants)
{
    SystemConfig cfg;
    cfg.num_ues = 101;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.tau_b = 39;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.tau_p = 360;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.bandwidth_hz = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    EXPECT_NO_THROW(SystemConfig{}.validate());
}
