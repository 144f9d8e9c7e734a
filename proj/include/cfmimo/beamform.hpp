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

#ifndef CFMIMO_BEAMFORM_HPP
#define CFMIMO_BEAMFORM_HPP

#include "cfmimo/conic.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfmimo {

using cd = std::complex<double>;
using Eigen::Index;

/// M x K precoder and the transmit power drawn at each AP.
struct Precoder {
    Eigen::MatrixXcd W;
    Eigen::VectorXd per_ap_power;

    static Precoder from(Eigen::MatrixXcd W)
    {
        Precoder p;
        p.per_ap_power = W.rowwise().squaredNorm();
        p.W = std::move(W);
        return p;
    }
};

/// SINR as computed by the CU from uplink estimates, with the three
/// denominator terms kept for diagnostics.
struct CuSinrReport {
    Eigen::VectorXd gamma;
    double min_gamma = 0.0;
    Eigen::VectorXd desired; // |g_k^T w_k|^2
    Eigen::VectorXd mui;     // sum_{i != k} |g_k^T w_i|^2
    Eigen::VectorXd cee;     // sum_m sum_i delta_mk |w_mi|^2
    double noise = 0.0;      // 1 / rho_d
};

inline CuSinrReport cu_sinr(const Eigen::MatrixXcd& g_hat, const Eigen::MatrixXd& delta, const Eigen::MatrixXcd& W,
                            double rho_d)
{
    const Index M = g_hat.rows();
    const Index K = g_hat.cols();
    if (delta.rows() != M || delta.cols() != K || W.rows() != M || W.cols() != K)
        throw std::invalid_argument("cu_sinr: shape mismatch");
    if (!(rho_d > 0.0))
        throw std::invalid_argument("cu_sinr: rho_d must be positive");

    // G(k, i) = g_k^T w_i
    const Eigen::MatrixXcd G = g_hat.transpose() * W;
    const Eigen::VectorXd row_power = W.rowwise().squaredNorm();

    CuSinrReport r;
    r.noise = 1.0 / rho_d;
    r.gamma.resize(K);
    r.desired.resize(K);
    r.mui.resize(K);
    r.cee.resize(K);
    for (Index k = 0; k < K; ++k) {
        r.desired(k) = std::norm(G(k, k));
        r.mui(k) = G.row(k).squaredNorm() - r.desired(k);
        r.mui(k) = std::max(r.mui(k), 0.0);
        r.cee(k) = delta.col(k).dot(row_power);
        r.gamma(k) = r.desired(k) / (r.mui(k) + r.cee(k) + r.noise);
    }
    r.min_gamma = K > 0 ? r.gamma.minCoeff() : 0.0;
    return r;
}

// Rotate w_k so that g_k^T w_k is real and nonnegative.
inline Eigen::VectorXcd phase_align(const Eigen::VectorXcd& g_hat_k, const Eigen::VectorXcd& w_k)
{
    const cd inner = g_hat_k.transpose() * w_k;
    if (inner == cd(0.0, 0.0))
        return w_k;
    return w_k * std::polar(1.0, -std::arg(inner));
}

inline Eigen::MatrixXcd phase_align_columns(const Eigen::MatrixXcd& g_hat, Eigen::MatrixXcd W)
{
    for (Index k = 0; k < W.cols(); ++k)
        W.col(k) = phase_align(g_hat.col(k), W.col(k));
    return W;
}

// Real embedding of W: (Re w_mi, Im w_mi) at 2*(i*M + m) and 2*(i*M + m) + 1.
inline Index re_index(Index m, Index i, Index M) { return 2 * (i * M + m); }
inline Index im_index(Index m, Index i, Index M) { return 2 * (i * M + m) + 1; }

inline Eigen::VectorXd pack_precoder(const Eigen::MatrixXcd& W)
{
    const Index M = W.rows();
    Eigen::VectorXd x(2 * W.size());
    for (Index i = 0; i < W.cols(); ++i)
        for (Index m = 0; m < M; ++m) {
            x(re_index(m, i, M)) = W(m, i).real();
            x(im_index(m, i, M)) = W(m, i).imag();
        }
    return x;
}

inline Eigen::MatrixXcd unpack_precoder(const Eigen::VectorXd& x, Index M, Index K)
{
    if (x.size() != 2 * M * K)
        throw std::invalid_argument("unpack_precoder: size mismatch");
    Eigen::MatrixXcd W(M, K);
    for (Index i = 0; i < K; ++i)
        for (Index m = 0; m < M; ++m)
            W(m, i) = {x(re_index(m, i, M)), x(im_index(m, i, M))};
    return W;
}

namespace detail {

using TripletList = std::vector<Eigen::Triplet<double>>;

inline conic::SparseMat sparse_from(Index rows, Index cols, const TripletList& trips)
{
    conic::SparseMat A(rows, cols);
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

inline conic::SparseVec sparse_vec(Index n, const std::vector<std::pair<Index, double>>& entries)
{
    conic::SparseVec v(n);
    for (const auto& [idx, val] : entries)
        if (val != 0.0)
            v.coeffRef(idx) += val;
    return v;
}

inline void check_shapes(const Eigen::MatrixXcd& g_hat, const Eigen::MatrixXd& delta, double rho_d)
{
    if (delta.rows() != g_hat.rows() || delta.cols() != g_hat.cols())
        throw std::invalid_argument("beamform: g_hat and delta shapes differ");
    if (!(rho_d > 0.0))
        throw std::invalid_argument("beamform: rho_d must be positive");
    if ((delta.array() < 0.0).any())
        throw std::invalid_argument("beamform: delta must be nonnegative");
}

} // namespace detail

/**
 * Feasibility program for "every CU SINR is at least gamma0" over the full
 * precoder, in real variables (2MK of them).
 *
 * Per user k: one cone (1/sqrt(gamma0)) Re(g_k^T w_k) >= ||v_k|| with
 * v_k = [g_k^T w_i for i != k ; sqrt(delta_k) o w_i for all i ; 1/sqrt(rho_d)]
 * embedded in 2(K-1) + 2MK + 1 real rows, and the equality Im(g_k^T w_k) = 0.
 * Per AP m: ||(w_m1, ..., w_mK)|| <= 1 in 2K real rows.
 */
inline conic::SocProgram build_feasibility(const Eigen::MatrixXcd& g_hat, const Eigen::MatrixXd& delta, double rho_d,
                                           double gamma0)
{
    detail::check_shapes(g_hat, delta, rho_d);
    if (!(gamma0 > 0.0))
        throw std::invalid_argument("build_feasibility: gamma0 must be positive");
    const Index M = g_hat.rows();
    const Index K = g_hat.cols();
    const Index n = 2 * M * K;
    const double inv_sqrt_gamma = 1.0 / std::sqrt(gamma0);

    conic::SocProgram prog(n);
    for (Index k = 0; k < K; ++k) {
        const Index rows = 2 * (K - 1) + 2 * M * K + 1;
        detail::TripletList trips;
        trips.reserve(static_cast<std::size_t>(4 * M * (K - 1) + 2 * M * K));
        Index r = 0;
        for (Index i = 0; i < K; ++i) {
            if (i == k)
                continue;
            for (Index m = 0; m < M; ++m) {
                const double gr = g_hat(m, k).real();
                const double gi = g_hat(m, k).imag();
                // Re(g w) = gr*wr - gi*wi ; Im(g w) = gi*wr + gr*wi
                trips.emplace_back(r, re_index(m, i, M), gr);
                trips.emplace_back(r, im_index(m, i, M), -gi);
                trips.emplace_back(r + 1, re_index(m, i, M), gi);
                trips.emplace_back(r + 1, im_index(m, i, M), gr);
            }
            r += 2;
        }
        for (Index i = 0; i < K; ++i) {
            for (Index m = 0; m < M; ++m) {
                const double s = std::sqrt(delta(m, k));
                trips.emplace_back(r, re_index(m, i, M), s);
                trips.emplace_back(r + 1, im_index(m, i, M), s);
                r += 2;
            }
        }
        Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
        b(r) = 1.0 / std::sqrt(rho_d);

        std::vector<std::pair<Index, double>> c_entries;
        std::vector<std::pair<Index, double>> f_entries;
        for (Index m = 0; m < M; ++m) {
            const double gr = g_hat(m, k).real();
            const double gi = g_hat(m, k).imag();
            c_entries.emplace_back(re_index(m, k, M), inv_sqrt_gamma * gr);
            c_entries.emplace_back(im_index(m, k, M), -inv_sqrt_gamma * gi);
            f_entries.emplace_back(re_index(m, k, M), gi);
            f_entries.emplace_back(im_index(m, k, M), gr);
        }
        prog.add_cone(conic::SocBlock{detail::sparse_from(rows, n, trips), std::move(b),
                                      detail::sparse_vec(n, c_entries), 0.0});
        prog.add_equality(detail::sparse_vec(n, f_entries), 0.0);
    }
    for (Index m = 0; m < M; ++m) {
        detail::TripletList trips;
        for (Index i = 0; i < K; ++i) {
            trips.emplace_back(2 * i, re_index(m, i, M), 1.0);
            trips.emplace_back(2 * i + 1, im_index(m, i, M), 1.0);
        }
        prog.add_cone(conic::SocBlock{detail::sparse_from(2 * K, n, trips), Eigen::VectorXd::Zero(2 * K),
                                      conic::SparseVec(n), 1.0});
    }
    return prog;
}

enum class Beamformer { ob, zf, cb };

inline const char* to_string(Beamformer bf)
{
    switch (bf) {
    case Beamformer::ob: return "ob";
    case Beamformer::zf: return "zf";
    case Beamformer::cb: return "cb";
    }
    return "?";
}

inline Beamformer parse_beamformer(const std::string& token)
{
    if (token == "ob")
        return Beamformer::ob;
    if (token == "zf")
        return Beamformer::zf;
    if (token == "cb")
        return Beamformer::cb;
    throw std::invalid_argument("unknown beamformer '" + token + "' (expected ob, zf or cb)");
}

struct BisectStep {
    double gamma_candidate = 0.0;
    conic::FeasibilityStatus status = conic::FeasibilityStatus::numerical_failure;
    int solver_iterations = 0;
};

struct BisectLog {
    std::vector<BisectStep> iterations;
    double gamma_lo = 0.0;
    double gamma_hi = 0.0;
    double gamma_star = 0.0;
    int numerical_failures = 0;
    int total_solver_iterations = 0;
    double seconds = 0.0;
};

struct MaxMinResult {
    Precoder precoder;
    double gamma_star = 0.0;
    BisectLog log;
};

struct BisectionOptions {
    double bisect_tol = 1e-3;
    int max_iterations = 200;
    conic::SolverOptions solver{};
};

/// No feasible precoder was found above the bracket floor.
class BisectionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The estimated channel matrix lacks full column rank.
class RankDeficientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Interference-free full-power bound rho_d * max_k (sum_m |g_mk|)^2.
inline double sinr_upper_bound(const Eigen::MatrixXcd& g_hat, double rho_d)
{
    const Eigen::VectorXd col_l1 = g_hat.cwiseAbs().colwise().sum().transpose();
    const double best = col_l1.size() > 0 ? col_l1.maxCoeff() : 0.0;
    return rho_d * best * best;
}

namespace detail {

// Shared bisection driver. `build(gamma)` returns the feasibility program at
// level gamma and `decode(x)` maps a feasible point to a precoder.
inline MaxMinResult bisect_maxmin(const Eigen::MatrixXcd& g_hat, const Eigen::MatrixXd& delta, double rho_d,
                                  const BisectionOptions& opt,
                                  const std::function<conic::SocProgram(double)>& build,
                                  const std::function<Eigen::MatrixXcd(const Eigen::VectorXd&)>& decode)
{
    const auto start = std::chrono::steady_clock::now();
    for (Index k = 0; k < g_hat.cols(); ++k)
        if (g_hat.col(k).cwiseAbs().maxCoeff() == 0.0)
            throw std::invalid_argument("max-min beamforming: g_hat has an all-zero column");

    MaxMinResult out;
    BisectLog& log = out.log;
    double lo = 0.0;
    double hi = sinr_upper_bound(g_hat, rho_d);
    bool have_point = false;
    Eigen::MatrixXcd best;
    Eigen::VectorXd warm;

    for (int it = 0; it < opt.max_iterations; ++it) {
        if (have_point && hi - lo <= opt.bisect_tol * std::max(1.0, lo))
            break;
        const double cand = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
        const conic::SocProgram prog = build(cand);
        const auto res = conic::solve_feasibility(prog, opt.solver, have_point ? &warm : nullptr);
        log.iterations.push_back({cand, res.status, res.iterations});
        log.total_solver_iterations += res.iterations;
        if (res.status == conic::FeasibilityStatus::feasible) {
            Eigen::MatrixXcd W = phase_align_columns(g_hat, decode(*res.point));
            const double achieved = cu_sinr(g_hat, delta, W, rho_d).min_gamma;
            lo = std::max(cand, std::min(achieved, hi));
            best = std::move(W);
            warm = *res.point;
            have_point = true;
        } else {
            if (res.status == conic::FeasibilityStatus::numerical_failure)
                ++log.numerical_failures;
            hi = cand;
        }
    }
    if (!have_point)
        throw BisectionError("max-min beamforming: no feasible precoder found");

    log.gamma_lo = lo;
    log.gamma_hi = hi;
    log.gamma_star = lo;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.gamma_star = lo;
    out.precoder = Precoder::from(std::move(best));
    return out;
}

} // namespace detail

/**
 * Max-min optimal beamformer: bisection on gamma over build_feasibility.
 * The returned precoder is the last feasible point, phase aligned, and
 * gamma_star is the lower end of the final bracket.
 */
inline MaxMinResult maxmin_ob(const Eigen::MatrixXcd& g_hat, const Eigen::MatrixXd& delta, double rho_d,
                              const BisectionOptions& opt = {})
{
    detail::check_shapes(g_hat, delta, rho_d);
    const Index M = g_hat.rows();
    const Index K = g_hat.cols();
    return detail::bisect_maxmin(
        g_hat, delta, rho_d, opt, [&](double gamma) { return build_feasibility(g_hat, delta, rho_d, gamma); },
        [M, K](const Eigen::VectorXd& x) { return unpack_precoder(x, M, K); });
}

/// Precoder family W = sum_j s_j B_j with fixed complex templates B_j and
/// nonnegative amplitudes s_j. Each template is a short list of entries.
struct AmplitudeBasis {
    struct Entry {
        Index m;
        Index i;
        cd coef;
    };
    Index M = 0;
    Index K = 0;
    std::vector<std::vector<Entry>> vars;

    Index size() const { return static_cast<Index>(vars.size()); }

    Eigen::MatrixXcd assemble(const Eigen::VectorXd& s) const
    {
        Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(M, K);
        for (std::size_t j = 0; j < vars.size(); ++j)
            for (const auto& e : vars[j])
                W(e.m, e.i) += s(static_cast<Index>(j)) * e.coef;
        return W;
    }
};

/**
 * Feasibility program for "every CU SINR is at least gamma0" over the
 * amplitudes of a fixed-direction precoder family. The desired term enters
 * through its real part, which is exact for the phase-aligned templates used
 * by ZF and CB and conservative otherwise.
 */
inline conic::SocProgram build_restricted_feasibility(const Eigen::MatrixXcd& g_hat, const Eigen::MatrixXd& delta,
                                                      double rho_d, double gamma0, const AmplitudeBasis& basis)
{
    detail::check_shapes(g_hat, delta, rho_d);
    if (!(gamma0 > 0.0))
        throw std::invalid_argument("build_restricted_feasibility: gamma0 must be positive");
    const Index M = g_hat.rows();
    const Index K = g_hat.cols();
    const Index n = basis.size();
    const double inv_sqrt_gamma = 1.0 / std::sqrt(gamma0);

    // (m, i) -> [(j, coef)]
    std::map<std::pair<Index, Index>, std::vector<std::pair<Index, cd>>> by_entry;
    // (k, i) -> per-variable coefficient of g_k^T w_i
    std::vector<std::map<Index, cd>> inner(static_cast<std::size_t>(K * K));
    for (Index j = 0; j < n; ++j) {
        for (const auto& e : basis.vars[static_cast<std::size_t>(j)]) {
            by_entry[{e.m, e.i}].emplace_back(j, e.coef);
            for (Index k = 0; k < K; ++k)
                inner[static_cast<std::size_t>(k * K + e.i)][j] += g_hat(e.m, k) * e.coef;
        }
    }

    conic::SocProgram prog(n);
    for (Index k = 0; k < K; ++k) {
        detail::TripletList trips;
        Index r = 0;
        for (Index i = 0; i < K; ++i) {
            if (i == k)
                continue;
            for (const auto& [j, v] : inner[static_cast<std::size_t>(k * K + i)]) {
                trips.emplace_back(r, j, v.real());
                trips.emplace_back(r + 1, j, v.imag());
            }
            r += 2;
        }
        for (const auto& [mi, list] : by_entry) {
            const double s = std::sqrt(delta(mi.first, k));
            for (const auto& [j, coef] : list) {
                trips.emplace_back(r, j, s * coef.real());
                trips.emplace_back(r + 1, j, s * coef.imag());
            }
            r += 2;
        }
        const Index rows = r + 1;
        Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
        b(r) = 1.0 / std::sqrt(rho_d);
        std::vector<std::pair<Index, double>> c_entries;
        for (const auto& [j, v] : inner[static_cast<std::size_t>(k * K + k)])
            c_entries.emplace_back(j, inv_sqrt_gamma * v.real());
        prog.add_cone(conic::SocBlock{detail::sparse_from(rows, n, trips), std::move(b),
                                      detail::sparse_vec(n, c_entries), 0.0});
    }
    for (Index m = 0; m < M; ++m) {
        detail::TripletList trips;
        Index r = 0;
        for (Index i = 0; i < K; ++i) {
            auto it = by_entry.find({m, i});
            if (it == by_entry.end())
                continue;
            for (const auto& [j, coef] : it->second) {
                trips.emplace_back(r, j, coef.real());
                trips.emplace_back(r + 1, j, coef.imag());
            }
            r += 2;
        }
        if (r == 0)
            continue;
        prog.add_cone(conic::SocBlock{detail::sparse_from(r, n, trips), Eigen::VectorXd::Zero(r), conic::SparseVec(n),
                                      1.0});
    }
    for (Index j = 0; j < n; ++j)
        prog.add_cone(conic::SocBlock{conic::SparseMat(1, n), Eigen::VectorXd::Zero(1),
                                      detail::sparse_vec(n, {{j, 1.0}}), 0.0});
    return prog;
}

inline MaxMinResult maxmin_restricted(const Eigen::MatrixXcd& g_hat, const Eigen::MatrixXd& delta, double rho_d,
                                      const AmplitudeBasis& basis, const BisectionOptions& opt = {})
{
    detail::check_shapes(g_hat, delta, rho_d);
    return detail::bisect_maxmin(
        g_hat, delta, rho_d, opt,
        [&](double gamma) { return build_restricted_feasibility(g_hat, delta, rho_d, gamma, basis); },
        [&basis](const Eigen::VectorXd& s) { return basis.assemble(s); });
}

// Unit-norm ZF directions: normalized columns of conj(G) (G^T conj(G))^{-1}.
inline Eigen::MatrixXcd zf_directions(const Eigen::MatrixXcd& g_hat, double rank_tol = 1e-10)
{
    const Index M = g_hat.rows();
    const Index K = g_hat.cols();
    if (K > M)
        throw RankDeficientError("zf: more users than APs");
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(g_hat);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(sv.size() - 1) <= rank_tol * sv(0))
        throw RankDeficientError("zf: estimated channel matrix is rank deficient");

    const Eigen::MatrixXcd gram = g_hat.transpose() * g_hat.conjugate(); // K x K
    Eigen::MatrixXcd U = g_hat.conjugate() * gram.partialPivLu().inverse();
    for (Index k = 0; k < K; ++k) {
        U.col(k).normalize();
        U.col(k) = phase_align(g_hat.col(k), U.col(k));
    }
    return U;
}

inline AmplitudeBasis zf_basis(const Eigen::MatrixXcd& directions)
{
    AmplitudeBasis basis{directions.rows(), directions.cols(), {}};
    for (Index k = 0; k < directions.cols(); ++k) {
        std::vector<AmplitudeBasis::Entry> col;
        for (Index m = 0; m < directions.rows(); ++m)
            if (directions(m, k) != cd(0.0, 0.0))
                col.push_back({m, k, directions(m, k)});
        basis.vars.push_back(std::move(col));
    }
    return basis;
}

// w_mk = s_mk * conj(g_mk) / |g_mk|; links with g_mk = 0 stay silent.
inline AmplitudeBasis cb_basis(const Eigen::MatrixXcd& g_hat)
{
    AmplitudeBasis basis{g_hat.rows(), g_hat.cols(), {}};
    for (Index k = 0; k < g_hat.cols(); ++k)
        for (Index m = 0; m < g_hat.rows(); ++m) {
            const double mag = std::abs(g_hat(m, k));
            if (mag == 0.0)
                continue;
            basis.vars.push_back({{m, k, std::conj(g_hat(m, k)) / mag}});
        }
    return basis;
}

inline MaxMinResult zf_precoder(const Eigen::MatrixXcd& g_hat, const Eigen::MatrixXd& delta, double rho_d,
                                const BisectionOptions& opt = {})
{
    return maxmin_restricted(g_hat, delta, rho_d, zf_basis(zf_directions(g_hat)), opt);
}

inline MaxMinResult cb_precoder(const Eigen::MatrixXcd& g_hat, const Eigen::MatrixXd& delta, double rho_d,
                                const BisectionOptions& opt = {})
{
    return maxmin_restricted(g_hat, delta, rho_d, cb_basis(g_hat), opt);
}

inline MaxMinResult run_beamformer(Beamformer bf, const Eigen::MatrixXcd& g_hat, const Eigen::MatrixXd& delta,
                                   double rho_d, const BisectionOptions& opt = {})
{
    switch (bf) {
    case Beamformer::ob: return maxmin_ob(g_hat, delta, rho_d, opt);
    case Beamformer::zf: return zf_precoder(g_hat, delta, rho_d, opt);
    case Beamformer::cb: return cb_precoder(g_hat, delta, rho_d, opt);
    }
    throw std::invalid_argument("run_beamformer: unknown beamformer");
}

} // namespace cfmimo

#endif
