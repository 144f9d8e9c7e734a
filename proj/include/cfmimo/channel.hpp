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

#ifndef CFMIMO_CHANNEL_HPP
#define CFMIMO_CHANNEL_HPP

#include "cfmimo/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace cfmimo {

using cd = std::complex<double>;

/// Uplink pilot codebook: an orthonormal base plus a per-UE index into it.
struct PilotBook {
    Eigen::MatrixXcd base;   // tau_p x tau_p, unit-norm orthogonal columns
    std::vector<int> assignment; // size K

    int length() const { return static_cast<int>(base.rows()); }
    int num_ues() const { return static_cast<int>(assignment.size()); }

    // |phi_k^H phi_i|^2, exactly 0 or 1 for this construction.
    double gram(int i, int k) const
    {
        return assignment[static_cast<std::size_t>(i)] == assignment[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
    }

    // tau_p x K matrix whose columns are the assigned sequences.
    Eigen::MatrixXcd sequences() const
    {
        Eigen::MatrixXcd phi(base.rows(), num_ues());
        for (int k = 0; k < num_ues(); ++k)
            phi.col(k) = base.col(assignment[static_cast<std::size_t>(k)]);
        return phi;
    }
};

// Columns of the unit-norm DFT basis.
inline Eigen::MatrixXcd dft_basis(int tau_p)
{
    if (tau_p < 1)
        throw std::invalid_argument("dft_basis: tau_p must be positive");
    Eigen::MatrixXcd F(tau_p, tau_p);
    const double scale = 1.0 / std::sqrt(static_cast<double>(tau_p));
    for (int r = 0; r < tau_p; ++r)
        for (int c = 0; c < tau_p; ++c)
            F(r, c) = std::polar(scale, -2.0 * M_PI * static_cast<double>(r) * c / tau_p);
    return F;
}

inline PilotBook make_pilot_book(int tau_p, std::vector<int> assignment)
{
    for (int idx : assignment)
        if (idx < 0 || idx >= tau_p)
            throw std::invalid_argument("make_pilot_book: pilot index out of range");
    return PilotBook{dft_basis(tau_p), std::move(assignment)};
}

// Random assignment: with replacement when pilots are scarce, distinct
// indices otherwise.
inline PilotBook assign_pilots(int tau_p, int num_ues, Rng& rng)
{
    std::vector<int> assignment(static_cast<std::size_t>(num_ues));
    if (tau_p < num_ues) {
        std::uniform_int_distribution<int> pick(0, tau_p - 1);
        for (auto& a : assignment)
            a = pick(rng);
    } else {
        std::vector<int> idx(static_cast<std::size_t>(tau_p));
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::copy_n(idx.begin(), num_ues, assignment.begin());
    }
    return make_pilot_book(tau_p, std::move(assignment));
}

/// True channels, MMSE estimates and their per-link variances (all M x K).
struct ChannelState {
    Eigen::MatrixXcd g;
    Eigen::MatrixXcd g_hat;
    Eigen::MatrixXd gamma;
    Eigen::MatrixXd delta;
};

struct UplinkPilotRx {
    Eigen::MatrixXcd y; // M x tau_p
};

inline Eigen::MatrixXcd draw_small_scale(Eigen::Index M, Eigen::Index K, Rng& rng)
{
    Eigen::MatrixXcd h(M, K);
    for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index m = 0; m < M; ++m)
            h(m, k) = complex_normal(rng);
    return h;
}

// g = sqrt(beta) .* h
inline Eigen::MatrixXcd compose_channel(const Eigen::MatrixXd& beta, const Eigen::MatrixXcd& h)
{
    return (beta.array().sqrt().cast<cd>() * h.array()).matrix();
}

enum class PilotNoise { on, off };

// y_m = sqrt(tau_p rho_p) sum_k g_mk phi_k + n_m, stacked as rows.
inline UplinkPilotRx uplink_pilot_receive(const Eigen::MatrixXcd& g, const PilotBook& pilots, double rho_p,
                                          Rng& rng, PilotNoise noise = PilotNoise::on)
{
    if (g.cols() != pilots.num_ues())
        throw std::invalid_argument("uplink_pilot_receive: channel/pilot shape mismatch");
    const double amp = std::sqrt(pilots.length() * rho_p);
    UplinkPilotRx rx;
    rx.y = amp * g * pilots.sequences().transpose();
    if (noise == PilotNoise::on) {
        for (Eigen::Index t = 0; t < rx.y.cols(); ++t)
            for (Eigen::Index m = 0; m < rx.y.rows(); ++m)
                rx.y(m, t) += complex_normal(rng);
    }
    return rx;
}

// Per-link MMSE estimate from the received pilot block. Only g_hat, gamma
// and delta are filled; the caller owns the true channel.
inline ChannelState mmse_estimate(const UplinkPilotRx& rx, const PilotBook& pilots, const Eigen::MatrixXd& beta,
                                  double rho_p)
{
    const Eigen::Index M = beta.rows();
    const Eigen::Index K = beta.cols();
    if (rx.y.rows() != M || rx.y.cols() != pilots.length() || K != pilots.num_ues())
        throw std::invalid_argument("mmse_estimate: shape mismatch");
    if ((beta.array() <= 0.0).any())
        throw std::invalid_argument("mmse_estimate: beta must be strictly positive");

    const double tp = pilots.length() * rho_p;
    // phi_k^H y_m for all (m, k)
    const Eigen::MatrixXcd proj = rx.y * pilots.sequences().conjugate();

    ChannelState st;
    st.g_hat.resize(M, K);
    st.gamma.resize(M, K);
    st.delta.resize(M, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (Eigen::Index m = 0; m < M; ++m) {
            double contaminated = 0.0;
            for (Eigen::Index i = 0; i < K; ++i)
                contaminated += beta(m, i) * pilots.gram(static_cast<int>(i), static_cast<int>(k));
            const double den = tp * contaminated + 1.0;
            const double b = beta(m, k);
            st.g_hat(m, k) = (std::sqrt(tp) * b / den) * proj(m, k);
            st.gamma(m, k) = tp * b * b / den;
            st.delta(m, k) = b - st.gamma(m, k);
        }
    }
    return st;
}

// Debug dump: one row per (m, k) link.
inline void write_estimation_csv(std::ostream& os, const Eigen::MatrixXd& beta, const ChannelState& st)
{
    os << "ap,ue,beta,gamma,delta\n";
    os.precision(9);
    for (Eigen::Index k = 0; k < beta.cols(); ++k)
        for (Eigen::Index m = 0; m < beta.rows(); ++m)
            os << m << ',' << k << ',' << beta(m, k) << ',' << st.gamma(m, k) << ',' << st.delta(m, k) << '\n';
}

} // namespace cfmimo

#endif
