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

#ifndef CFMIMO_DOWNLINK_HPP
#define CFMIMO_DOWNLINK_HPP

#include "cfmimo/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>

namespace cfmimo {

// a(k, i) = sum_m g_mk w_mi, through the true channel.
struct EffectiveChannel {
    Eigen::MatrixXcd a; // K x K
};

struct DownlinkEstimate {
    Eigen::VectorXcd a_hat_kk;
    double error_var = 0.0; // 1 / (tau_b rho_b)
};

struct UePerf {
    Eigen::VectorXd gamma_ue;
    Eigen::VectorXd throughput_bps;
};

inline EffectiveChannel effective_channels(const Eigen::MatrixXcd& g, const Eigen::MatrixXcd& W)
{
    if (g.rows() != W.rows() || g.cols() != W.cols())
        throw std::invalid_argument("effective_channels: shape mismatch");
    return EffectiveChannel{g.transpose() * W};
}

// LS estimate of the beamformed diagonal gains from orthonormal downlink
// pilots: a_hat_kk = a_kk + psi_k^H n_k / sqrt(tau_b rho_b).
inline DownlinkEstimate downlink_train(const EffectiveChannel& eff, int tau_b, double rho_b, Rng& rng)
{
    const auto K = eff.a.rows();
    if (tau_b < K)
        throw std::invalid_argument("downlink_train: tau_b must be at least the number of users");
    if (!(rho_b > 0.0))
        throw std::invalid_argument("downlink_train: rho_b must be positive");
    DownlinkEstimate est;
    est.error_var = 1.0 / (tau_b * rho_b);
    const double sd = std::sqrt(est.error_var);
    est.a_hat_kk.resize(K);
    for (Eigen::Index k = 0; k < K; ++k)
        est.a_hat_kk(k) = eff.a(k, k) + sd * complex_normal(rng);
    return est;
}

// UE-side SINR with realized interference powers and the analytic
// estimation-error variance.
inline Eigen::VectorXd ue_sinr(const DownlinkEstimate& est, const EffectiveChannel& eff, double rho_d)
{
    const auto K = eff.a.rows();
    if (est.a_hat_kk.size() != K)
        throw std::invalid_argument("ue_sinr: shape mismatch");
    Eigen::VectorXd gamma(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const double interference = eff.a.row(k).squaredNorm() - std::norm(eff.a(k, k));
        const double den = rho_d * est.error_var + rho_d * std::max(interference, 0.0) + 1.0;
        gamma(k) = rho_d * std::norm(est.a_hat_kk(k)) / den;
    }
    return gamma;
}

// Pilot-overhead-discounted rate over the downlink half of the interval.
inline double pilot_overhead_factor(int tau_p, int tau_b, int tau_c)
{
    if (tau_p < 0 || tau_b < 0 || tau_p + tau_b >= tau_c)
        throw std::invalid_argument("net_throughput: requires tau_p + tau_b < tau_c");
    return 1.0 - static_cast<double>(tau_p + tau_b) / tau_c;
}

inline Eigen::VectorXd net_throughput(const Eigen::VectorXd& gamma_ue, double bandwidth_hz, int tau_p, int tau_b,
                                      int tau_c)
{
    const double pre = 0.5 * bandwidth_hz * pilot_overhead_factor(tau_p, tau_b, tau_c);
    return (pre * (1.0 + gamma_ue.array()).log() / std::log(2.0)).matrix();
}

} // namespace cfmimo

#endif
