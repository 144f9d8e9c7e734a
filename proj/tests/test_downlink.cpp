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

#include "cfmimo/beamform.hpp"
#include "cfmimo/downlink.hpp"
#include "test_oracles.hpp"

#include <gtest/gtest.h>

using namespace cfmimo;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;

TEST(EffectiveChannel, ZeroPrecoder)
{
    std::mt19937_64 rng(1);
    const auto eff = effective_channels(oracle::random_complex(3, 2, rng), MatrixXcd::Zero(3, 2));
    EXPECT_EQ(eff.a.cwiseAbs().maxCoeff(), 0.0);
}

TEST(EffectiveChannel, MatchesDirectSum)
{
    std::mt19937_64 rng(2);
    const MatrixXcd g = oracle::random_complex(5, 3, rng);
    const MatrixXcd W = oracle::random_complex(5, 3, rng);
    const auto eff = effective_channels(g, W);
    for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 3; ++i) {
            std::complex<double> acc = 0.0;
            for (int m = 0; m < 5; ++m)
                acc += g(m, k) * W(m, i);
            EXPECT_NEAR(std::abs(eff.a(k, i) - acc), 0.0, 1e-12);
        }
    EXPECT_THROW(effective_channels(g, MatrixXcd::Zero(4, 3)), std::invalid_argument);
}

TEST(EffectiveChannel, SingleAp)
{
    std::mt19937_64 rng(3);
    const MatrixXcd g = oracle::random_complex(1, 2, rng);
    const MatrixXcd W = oracle::random_complex(1, 2, rng);
    EXPECT_NEAR(std::abs(effective_channels(g, W).a(0, 1) - g(0, 0) * W(0, 1)), 0.0, 1e-15);
}

TEST(DownlinkTrain, NoiselessLimit)
{
    Rng rng(4);
    std::mt19937_64 r2(4);
    const EffectiveChannel eff{oracle::random_complex(3, 3, r2)};
    const auto est = downlink_train(eff, 3, 1e12, rng);
    for (int k = 0; k < 3; ++k)
        EXPECT_LT(std::abs(est.a_hat_kk(k) - eff.a(k, k)), 1e-5);
}

TEST(DownlinkTrain, ErrorVariance)
{
    Rng rng(5);
    const EffectiveChannel eff{MatrixXcd::Zero(2, 2)};
    const int tau_b = 4;
    const double rho_b = 2.5;
    double acc = 0.0;
    const int n = 100000;
    for (int s = 0; s < n / 2; ++s) {
        const auto est = downlink_train(eff, tau_b, rho_b, rng);
        acc += est.a_hat_kk.squaredNorm();
    }
    EXPECT_NEAR((acc / n) * tau_b * rho_b, 1.0, 0.03);
    EXPECT_DOUBLE_EQ(downlink_train(eff, tau_b, rho_b, rng).error_var, 1.0 / (tau_b * rho_b));
}

TEST(DownlinkTrain, RequiresEnoughPilots)
{
    Rng rng(6);
    EXPECT_THROW(downlink_train(EffectiveChannel{MatrixXcd::Zero(3, 3)}, 2, 1.0, rng), std::invalid_argument);
    EXPECT_THROW(downlink_train(EffectiveChannel{MatrixXcd::Zero(3, 3)}, 3, 0.0, rng), std::invalid_argument);
}

TEST(UeSinr, SingleUserPerfectTraining)
{
    const EffectiveChannel eff{MatrixXcd::Constant(1, 1, std::complex<double>(0.0, 2.0))};
    DownlinkEstimate est{eff.a.diagonal(), 0.0};
    EXPECT_DOUBLE_EQ(ue_sinr(est, eff, 3.0)(0), 12.0);
}

TEST(UeSinr, ZeroEstimate)
{
    const EffectiveChannel eff{MatrixXcd::Ones(2, 2)};
    DownlinkEstimate est{Eigen::VectorXcd::Zero(2), 0.1};
    EXPECT_EQ(ue_sinr(est, eff, 3.0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(UeSinr, HandEvaluation)
{
    // rho_d = 1, |a_hat|^2 = 4, tau_b rho_b = 2, one interferer with |a|^2 = 0.5.
    MatrixXcd a(2, 2);
    a << 2.0, std::sqrt(0.5), 1.0, 1.0;
    DownlinkEstimate est{Eigen::VectorXcd::Constant(2, 2.0), 0.5};
    EXPECT_NEAR(ue_sinr(est, EffectiveChannel{a}, 1.0)(0), 2.0, 1e-12);
}

TEST(UeSinr, RowPhaseInvariance)
{
    std::mt19937_64 rng(7);
    MatrixXcd a = oracle::random_complex(3, 3, rng);
    DownlinkEstimate est{oracle::random_complex(3, 1, rng).col(0), 0.2};
    const Eigen::VectorXd before = ue_sinr(est, EffectiveChannel{a}, 4.0);
    const std::complex<double> rot = std::polar(1.0, 1.234);
    a.row(1) *= rot;
    est.a_hat_kk(1) *= rot;
    EXPECT_LT((ue_sinr(est, EffectiveChannel{a}, 4.0) - before).norm(), 1e-12);
}

TEST(UeSinr, CollapsesToCuSinrWithPerfectCsi)
{
    std::mt19937_64 rng(8);
    const MatrixXcd g = oracle::random_complex(4, 3, rng);
    const MatrixXcd W = oracle::random_feasible_precoder(4, 3, rng);
    const EffectiveChannel eff = effective_channels(g, W);
    Rng noise(9);
    const auto est = downlink_train(eff, 3, 1e15, noise);
    const Eigen::VectorXd ue = ue_sinr(est, eff, 5.0);
    const auto cu = oracle::cu_sinr(g, MatrixXd::Zero(4, 3), W, 5.0);
    for (int k = 0; k < 3; ++k)
        EXPECT_NEAR(ue(k) / cu[static_cast<std::size_t>(k)], 1.0, 1e-6);
}

TEST(NetThroughput, ReferenceValue)
{
    const Eigen::VectorXd s = net_throughput(Eigen::VectorXd::Ones(1), 20e6, 40, 40, 400);
    EXPECT_NEAR(s(0), 8e6, 1e-6);
}

TEST(NetThroughput, ZeroSinr)
{
    EXPECT_EQ(net_throughput(Eigen::VectorXd::Zero(2), 20e6, 10, 10, 100).cwiseAbs().maxCoeff(), 0.0);
}

TEST(NetThroughput, OverheadSaturation)
{
    EXPECT_THROW(net_throughput(Eigen::VectorXd::Ones(1), 20e6, 200, 200, 400), std::invalid_argument);
    const double near = net_throughput(Eigen::VectorXd::Ones(1), 20e6, 359, 40, 400)(0);
    EXPECT_NEAR(near, 10e6 / 400.0, 1e-6);
}

TEST(NetThroughput, Monotonicity)
{
    Eigen::VectorXd g(3);
    g << 0.5, 1.0, 2.0;
    const Eigen::VectorXd s = net_throughput(g, 1e6, 5, 5, 100);
    EXPECT_LT(s(0), s(1));
    EXPECT_LT(s(1), s(2));
    EXPECT_GT(net_throughput(g, 1e6, 5, 5, 100)(0), net_throughput(g, 1e6, 6, 5, 100)(0));
}
