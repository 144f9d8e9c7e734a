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

#ifndef CFMIMO_CONIC_HPP
#define CFMIMO_CONIC_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Real second-order cone feasibility.
//
// A program is a set of cone constraints ||A x + b|| <= c^T x + d and linear
// equalities f^T x = e over x in R^n. Feasibility is decided with a
// primal-dual interior-point method (Nesterov-Todd scaling, Mehrotra
// predictor-corrector) on the phase-one problem
//
//     minimize t  s.t.  ||A_i x + b_i|| <= c_i^T x + d_i + t,  F x = e,
//                       ||x|| <= R
//
// after scaling every block to unit norm. The primal iterate stays feasible
// for this problem; any iterate whose cones hold strictly is returned as
// feasible. Infeasibility is declared once the dual bound proves the
// phase-one optimum is positive, or once the iteration has converged to a
// positive optimum (duality gap and dual residual below tolerance).

namespace cfmimo::conic {

using SparseMat = Eigen::SparseMatrix<double>;
using SparseVec = Eigen::SparseVector<double>;

struct SocBlock {
    SparseMat A;    // r x n
    Eigen::VectorXd b; // r
    SparseVec c;    // n
    double d = 0.0;
};

struct LinearEquality {
    SparseVec f; // n
    double e = 0.0;
};

class SocProgram {
public:
    SocProgram() = default;
    explicit SocProgram(Eigen::Index num_vars) : n_(num_vars)
    {
        if (num_vars < 0)
            throw std::invalid_argument("SocProgram: negative variable count");
    }

    Eigen::Index num_vars() const { return n_; }
    const std::vector<SocBlock>& cones() const { return cones_; }
    const std::vector<LinearEquality>& equalities() const { return eqs_; }

    void add_cone(SocBlock block)
    {
        if (block.A.rows() < 1)
            throw std::invalid_argument("SocProgram: cone block needs at least one row");
        if (block.A.cols() != n_ || block.c.size() != n_ || block.b.size() != block.A.rows())
            throw std::invalid_argument("SocProgram: cone block dimensions inconsistent");
        block.A.makeCompressed();
        cones_.push_back(std::move(block));
    }

    // Dense convenience overload.
    void add_cone(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c, double d)
    {
        add_cone(SocBlock{A.sparseView(), b, c.sparseView(), d});
    }

    void add_equality(SparseVec f, double e)
    {
        if (f.size() != n_)
            throw std::invalid_argument("SocProgram: equality dimension inconsistent");
        eqs_.push_back(LinearEquality{std::move(f), e});
    }

    void add_equality(const Eigen::VectorXd& f, double e) { add_equality(SparseVec(f.sparseView()), e); }

    // One constraint per line, for debugging.
    void dump(std::ostream& os) const
    {
        os << "soc_program n=" << n_ << " cones=" << cones_.size() << " equalities=" << eqs_.size() << '\n';
        auto sparse_str = [](const SparseVec& v) {
            std::string s;
            for (SparseVec::InnerIterator it(v); it; ++it)
                s += " " + std::to_string(it.index()) + ":" + std::to_string(it.value());
            return s;
        };
        for (std::size_t i = 0; i < cones_.size(); ++i) {
            const auto& blk = cones_[i];
            os << "cone " << i << " rows=" << blk.A.rows() << " nnzA=" << blk.A.nonZeros() << " c=[" << sparse_str(blk.c)
               << " ] d=" << blk.d << '\n';
        }
        for (std::size_t i = 0; i < eqs_.size(); ++i)
            os << "eq " << i << " f=[" << sparse_str(eqs_[i].f) << " ] e=" << eqs_[i].e << '\n';
    }

private:
    Eigen::Index n_ = 0;
    std::vector<SocBlock> cones_;
    std::vector<LinearEquality> eqs_;
};

enum class FeasibilityStatus { feasible, infeasible, numerical_failure };

inline const char* to_string(FeasibilityStatus s)
{
    switch (s) {
    case FeasibilityStatus::feasible: return "feasible";
    case FeasibilityStatus::infeasible: return "infeasible";
    case FeasibilityStatus::numerical_failure: return "numerical_failure";
    }
    return "?";
}

struct FeasibilityResult {
    FeasibilityStatus status = FeasibilityStatus::numerical_failure;
    std::optional<Eigen::VectorXd> point; // present iff feasible
    double max_violation = 0.0;
    int iterations = 0;
};

struct SolverOptions {
    double feas_tol = 1e-7;
    int max_iterations = 200;
    double search_radius = 1e6; // ||x|| <= R bounds the search region
};

// Max of (||Ax+b|| - c^T x - d)_+ over cones and |f^T x - e| over equalities.
inline double check_point(const SocProgram& prog, const Eigen::VectorXd& x)
{
    if (x.size() != prog.num_vars())
        throw std::invalid_argument("check_point: dimension mismatch");
    double worst = 0.0;
    for (const auto& blk : prog.cones()) {
        const double lhs = (blk.A * x + blk.b).norm();
        const double rhs = blk.c.dot(x) + blk.d;
        worst = std::max(worst, lhs - rhs);
    }
    for (const auto& eq : prog.equalities())
        worst = std::max(worst, std::abs(eq.f.dot(x) - eq.e));
    return worst;
}

namespace detail {

struct Triplet {
    Eigen::Index row;
    Eigen::Index col;
    double value;
};

// Block scaled to unit norm plus the data reused by every iteration.
struct PreparedCone {
    SparseMat A;
    Eigen::VectorXd b;
    SparseVec c;
    double d = 0.0;
    std::vector<Eigen::Index> support; // variables touched by A or c
    std::vector<Triplet> ata_lower;    // lower triangle of A^T A
    bool dense = false;
};

inline double block_norm(const SocBlock& blk)
{
    return std::sqrt(blk.A.squaredNorm() + blk.b.squaredNorm() + blk.c.squaredNorm() + blk.d * blk.d);
}

inline PreparedCone prepare(const SocBlock& blk)
{
    const double scale = block_norm(blk);
    PreparedCone pc;
    pc.A = blk.A / scale;
    pc.A.makeCompressed();
    pc.b = blk.b / scale;
    pc.c = blk.c / scale;
    pc.d = blk.d / scale;

    const Eigen::Index n = blk.A.cols();
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    for (Eigen::Index j = 0; j < pc.A.outerSize(); ++j)
        for (SparseMat::InnerIterator it(pc.A, j); it; ++it)
            if (it.value() != 0.0)
                used[static_cast<std::size_t>(it.col())] = 1;
    for (SparseVec::InnerIterator it(pc.c); it; ++it)
        if (it.value() != 0.0)
            used[static_cast<std::size_t>(it.index())] = 1;
    for (Eigen::Index j = 0; j < n; ++j)
        if (used[static_cast<std::size_t>(j)])
            pc.support.push_back(j);
    pc.dense = static_cast<Eigen::Index>(pc.support.size()) * 4 > n;

    const SparseMat ata = SparseMat(pc.A.transpose()) * pc.A;
    for (Eigen::Index j = 0; j < ata.outerSize(); ++j)
        for (SparseMat::InnerIterator it(ata, j); it; ++it)
            if (it.row() >= it.col() && it.value() != 0.0)
                pc.ata_lower.push_back({it.row(), it.col(), it.value()});
    return pc;
}

// Jordan algebra of the second-order cone; vectors are (x0, x1).
inline double soc_det(const Eigen::VectorXd& v)
{
    const double tail = v.tail(v.size() - 1).norm();
    return (v(0) - tail) * (v(0) + tail);
}

inline Eigen::VectorXd soc_product(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    Eigen::VectorXd r(a.size());
    r(0) = a.dot(b);
    const auto k = a.size() - 1;
    r.tail(k) = a(0) * b.tail(k) + b(0) * a.tail(k);
    return r;
}

inline bool soc_interior(const Eigen::VectorXd& v) { return v(0) > v.tail(v.size() - 1).norm(); }

// Solve a o u = d for u.
inline Eigen::VectorXd soc_divide(const Eigen::VectorXd& a, const Eigen::VectorXd& d)
{
    const auto k = a.size() - 1;
    Eigen::VectorXd u(a.size());
    u(0) = (a(0) * d(0) - a.tail(k).dot(d.tail(k))) / soc_det(a);
    u.tail(k) = (d.tail(k) - u(0) * a.tail(k)) / a(0);
    return u;
}

// Largest alpha with v + alpha * dv in the cone (capped by `cap`).
inline double soc_max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv, double cap)
{
    const auto k = v.size() - 1;
    const double a = dv(0) * dv(0) - dv.tail(k).squaredNorm();
    const double b = v(0) * dv(0) - v.tail(k).dot(dv.tail(k));
    const double c = std::max(soc_det(v), 0.0);
    double alpha = cap;
    if (dv(0) < 0.0)
        alpha = std::min(alpha, -v(0) / dv(0));
    // smallest positive root of a s^2 + 2 b s + c
    if (a == 0.0) {
        if (b < 0.0)
            alpha = std::min(alpha, -c / (2.0 * b));
    } else {
        const double disc = b * b - a * c;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double q = -(b + std::copysign(sq, b));
            for (double root : {q / a, q != 0.0 ? c / q : std::numeric_limits<double>::infinity()})
                if (root > 0.0)
                    alpha = std::min(alpha, root);
        }
    }
    return alpha;
}

// Nesterov-Todd scaling W = eta (2 w w^T - J) with W y = W^{-1} s = lambda.
struct NtScaling {
    double eta = 1.0;
    Eigen::VectorXd w;
    Eigen::VectorXd lambda;

    static Eigen::VectorXd reflect(Eigen::VectorXd v)
    {
        v.tail(v.size() - 1) *= -1.0;
        return v;
    }

    NtScaling(const Eigen::VectorXd& s, const Eigen::VectorXd& y)
    {
        const double ds = soc_det(s);
        const double dy = soc_det(y);
        eta = std::pow(ds / dy, 0.25);
        const Eigen::VectorXd sb = s / std::sqrt(ds);
        const Eigen::VectorXd yb = y / std::sqrt(dy);
        const double gam = std::sqrt(0.5 * (1.0 + sb.dot(yb)));
        const Eigen::VectorXd wbar = (sb + reflect(yb)) / (2.0 * gam);
        w = wbar;
        w(0) += 1.0;
        w /= std::sqrt(2.0 * (wbar(0) + 1.0));
        lambda = apply(y);
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return eta * (2.0 * w.dot(v) * w - reflect(v)); }

    Eigen::VectorXd apply_inverse(const Eigen::VectorXd& v) const
    {
        const Eigen::VectorXd a = reflect(w);
        return (2.0 * a.dot(v) * a - reflect(v)) / eta;
    }
};

class PhaseOne {
public:
    PhaseOne(const SocProgram& prog, double radius) : n_(prog.num_vars()), radius_(radius)
    {
        for (const auto& blk : prog.cones())
            if (block_norm(blk) > 0.0) // ||0|| <= 0 always holds
                cones_.push_back(prepare(blk));
    }

    const std::vector<PreparedCone>& cones() const { return cones_; }
    Eigen::Index num_vars() const { return n_; }
    double radius() const { return radius_; }
    std::size_t num_blocks() const { return cones_.size() + 1; }

    double max_violation(const Eigen::VectorXd& x) const
    {
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& pc : cones_)
            worst = std::max(worst, (pc.A * x + pc.b).norm() - pc.c.dot(x) - pc.d);
        return worst;
    }

    // Slack of block i at z = (x, t); the last block is the search ball.
    Eigen::VectorXd slack(std::size_t i, const Eigen::VectorXd& z) const
    {
        const auto x = z.head(n_);
        if (i == cones_.size()) {
            Eigen::VectorXd s(n_ + 1);
            s(0) = radius_;
            s.tail(n_) = x;
            return s;
        }
        const auto& pc = cones_[i];
        Eigen::VectorXd s(pc.A.rows() + 1);
        s(0) = pc.c.dot(x) + pc.d + z(n_);
        s.tail(pc.A.rows()) = pc.A * x + pc.b;
        return s;
    }

    // -G_i dz: the change of slack i along dz.
    Eigen::VectorXd slack_step(std::size_t i, const Eigen::VectorXd& dz) const
    {
        Eigen::VectorXd s = slack(i, dz);
        if (i == cones_.size()) {
            s(0) = 0.0;
        } else {
            const auto& pc = cones_[i];
            s(0) -= pc.d;
            s.tail(pc.A.rows()) -= pc.b;
        }
        return s;
    }

    // out += G_i^T v
    void add_gt(std::size_t i, const Eigen::VectorXd& v, Eigen::VectorXd& out) const
    {
        if (i == cones_.size()) {
            out.head(n_) -= v.tail(n_);
            return;
        }
        const auto& pc = cones_[i];
        out.head(n_) -= pc.A.transpose() * v.tail(pc.A.rows());
        for (SparseVec::InnerIterator it(pc.c); it; ++it)
            out(it.index()) -= v(0) * it.value();
        out(n_) -= v(0);
    }

    // hess += G_i^T W_i^{-2} G_i (lower triangle).
    void add_scaled_gram(std::size_t i, const NtScaling& nt, Eigen::MatrixXd& hess) const
    {
        // W^{-2} = eta^-2 (I + 4|w|^2 a a^T - 2 (a w^T + w a^T)), a = J w.
        // The rank-two part is diagonalized in span{G^T a, G^T w}.
        const Eigen::Index N = n_ + 1;
        const double inv_eta2 = 1.0 / (nt.eta * nt.eta);
        const Eigen::VectorXd a = NtScaling::reflect(nt.w);
        Eigen::VectorXd u = Eigen::VectorXd::Zero(N);
        Eigen::VectorXd v = Eigen::VectorXd::Zero(N);
        add_gt(i, a, u);
        add_gt(i, nt.w, v);
        const double alpha = 4.0 * nt.w.squaredNorm();
        const double root = std::sqrt(alpha * alpha + 16.0);
        const double lp = 0.5 * (alpha + root);
        const double lm = 0.5 * (alpha - root);
        auto rank_one = [&](double lam) {
            // eigenvector (lam, beta) with beta = -2
            const double nrm = std::hypot(lam, 2.0);
            Eigen::VectorXd p = (lam / nrm) * u - (2.0 / nrm) * v;
            return std::pair<Eigen::VectorXd, double>(std::move(p), lam * inv_eta2);
        };

        if (i == cones_.size()) {
            hess.topLeftCorner(n_, n_).diagonal().array() += inv_eta2;
            for (double lam : {lp, lm}) {
                auto [p, coef] = rank_one(lam);
                hess.selfadjointView<Eigen::Lower>().rankUpdate(p, coef);
            }
            return;
        }

        const auto& pc = cones_[i];
        for (const auto& tr : pc.ata_lower)
            hess(tr.row, tr.col) += inv_eta2 * tr.value;
        for (SparseVec::InnerIterator it(pc.c); it; ++it) {
            for (SparseVec::InnerIterator jt(pc.c); jt; ++jt)
                if (it.index() >= jt.index())
                    hess(it.index(), jt.index()) += inv_eta2 * it.value() * jt.value();
            hess(n_, it.index()) += inv_eta2 * it.value();
        }
        hess(n_, n_) += inv_eta2;

        for (double lam : {lp, lm}) {
            auto [p, coef] = rank_one(lam);
            if (pc.dense) {
                hess.selfadjointView<Eigen::Lower>().rankUpdate(p, coef);
            } else {
                for (std::size_t q = 0; q < pc.support.size(); ++q) {
                    const Eigen::Index jq = pc.support[q];
                    const double pq = coef * p(jq);
                    for (std::size_t r = 0; r <= q; ++r)
                        hess(jq, pc.support[r]) += pq * p(pc.support[r]);
                    hess(n_, jq) += coef * p(n_) * p(jq);
                }
                hess(n_, n_) += coef * p(n_) * p(n_);
            }
        }
    }

private:
    Eigen::Index n_;
    double radius_;
    std::vector<PreparedCone> cones_;
};

} // namespace detail

/**
 * Decide whether a program has a point satisfying every constraint.
 *
 * A feasible result carries a point with check_point(prog, x) <= feas_tol.
 * An infeasible result means either the equalities are inconsistent or the
 * smallest uniform relaxation of the cones which admits a solution inside the
 * search ball is strictly positive, as shown by the dual bound or by a
 * converged primal-dual pair. Exhausting
 * the iteration budget or a collapsed step yields numerical_failure.
 *
 * `warm_start`, when given, is projected onto the equality set and used as
 * the initial point.
 */
inline FeasibilityResult solve_feasibility(const SocProgram& prog, const SolverOptions& opt = {},
                                           const Eigen::VectorXd* warm_start = nullptr)
{
    using Eigen::Index;
    using Eigen::VectorXd;
    const Index n = prog.num_vars();
    FeasibilityResult res;

    // Equalities: consistency check and independent rows.
    std::vector<std::pair<SparseVec, double>> scaled_eqs;
    for (const auto& eq : prog.equalities()) {
        const double s = std::sqrt(eq.f.squaredNorm() + eq.e * eq.e);
        if (s == 0.0)
            continue;
        if (eq.f.squaredNorm() == 0.0) {
            res.status = FeasibilityStatus::infeasible;
            res.max_violation = std::abs(eq.e);
            return res;
        }
        scaled_eqs.emplace_back(eq.f / s, eq.e / s);
    }
    const Index p_all = static_cast<Index>(scaled_eqs.size());
    Eigen::MatrixXd F(p_all, n);
    VectorXd e(p_all);
    for (Index r = 0; r < p_all; ++r) {
        F.row(r) = VectorXd(scaled_eqs[static_cast<std::size_t>(r)].first).transpose();
        e(r) = scaled_eqs[static_cast<std::size_t>(r)].second;
    }

    if (warm_start != nullptr && warm_start->size() != n)
        throw std::invalid_argument("solve_feasibility: warm start dimension mismatch");
    VectorXd x = warm_start != nullptr ? *warm_start : VectorXd::Zero(n);
    Eigen::MatrixXd F_ind(0, n);
    if (p_all > 0) {
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(F);
        const VectorXd x_ls = cod.solve(e);
        const double resid = (F * x_ls - e).cwiseAbs().maxCoeff();
        if (resid > opt.feas_tol) {
            res.status = FeasibilityStatus::infeasible;
            res.max_violation = resid;
            return res;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(F.transpose());
        const Index rank = qr.rank();
        F_ind.resize(rank, n);
        for (Index r = 0; r < rank; ++r)
            F_ind.row(r) = F.row(qr.colsPermutation().indices()(r));
        x = warm_start != nullptr ? VectorXd(x - cod.solve(F * x - e)) : x_ls;
    }

    auto finish_feasible = [&](const VectorXd& pt) {
        res.max_violation = check_point(prog, pt);
        if (res.max_violation <= opt.feas_tol) {
            res.status = FeasibilityStatus::feasible;
            res.point = pt;
        } else {
            res.status = FeasibilityStatus::numerical_failure;
        }
        return res;
    };

    const double radius = std::max(opt.search_radius, 2.0 * x.norm() + 1.0);
    const detail::PhaseOne phase(prog, radius);
    if (phase.cones().empty())
        return finish_feasible(x);
    double viol = phase.max_violation(x);
    if (viol < 0.0)
        return finish_feasible(x);

    // Primal iterate z = (x, t) stays feasible for the phase-one problem, so
    // its slacks are always s_i(z). Dual variables start at the cone identity.
    const Index N = n + 1;
    const std::size_t nb = phase.num_blocks();
    const std::size_t ball = nb - 1;
    VectorXd z(N);
    z.head(n) = x;
    z(n) = viol + 1.0;

    std::vector<VectorXd> s(nb), y(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        s[i] = phase.slack(i, z);
        y[i] = VectorXd::Zero(s[i].size());
        y[i](0) = i == ball ? 1.0 / radius : 1.0;
    }
    const Index p = F_ind.rows();
    Eigen::MatrixXd F_hat = Eigen::MatrixXd::Zero(p, N);
    F_hat.leftCols(n) = F_ind;
    VectorXd nu = VectorXd::Zero(p);
    const double m_deg = static_cast<double>(nb);

    constexpr double kResidualTol = 1e-10;
    constexpr double kConvergedResidualTol = 1e-6;
    constexpr double kGapTol = 1e-8;
    double best_local_lower = -std::numeric_limits<double>::infinity();
    double min_rz = std::numeric_limits<double>::infinity();

    Eigen::MatrixXd hess(N, N);
    std::vector<detail::NtScaling> nt;
    nt.reserve(nb);

    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        res.iterations = iter;
        // Dual residual r = e_t + sum G_i^T y_i + F^T nu.
        VectorXd rz = VectorXd::Zero(N);
        rz(n) = 1.0;
        for (std::size_t i = 0; i < nb; ++i)
            phase.add_gt(i, y[i], rz);
        if (p > 0)
            rz += F_hat.transpose() * nu;
        double gap = 0.0;
        for (std::size_t i = 0; i < nb; ++i)
            gap += s[i].dot(y[i]);
        const double mu = gap / m_deg;
        const double t = z(n);
        const double rz_norm = rz.norm();

#ifdef CFMIMO_CONIC_TRACE
        std::fprintf(stderr, "  it=%d t=%.3e viol=%.3e gap=%.3e rz=%.3e\n", iter, t, phase.max_violation(z.head(n)),
                     gap, rz_norm);
#endif
        // Lower bound on the phase-one optimum from the current dual point.
        const double dual_obj = t - gap - rz.dot(z);
        const double lower = dual_obj - rz_norm * (radius + std::abs(t) + 1.0);
        if (rz_norm <= kResidualTol && lower > 0.0) {
            res.status = FeasibilityStatus::infeasible;
            res.max_violation = check_point(prog, z.head(n));
            return res;
        }
        // Lower bound valid near the current iterate; kept as a fallback
        // certificate should the iteration stall before converging.
        if (rz_norm <= kConvergedResidualTol)
            best_local_lower = std::max(best_local_lower, dual_obj - rz_norm * (z.norm() + 1.0));
        // Round-off in the dual update eventually grows the residual again.
        min_rz = std::min(min_rz, rz_norm);
        if (min_rz <= kConvergedResidualTol && rz_norm > std::max(1e3 * min_rz, kConvergedResidualTol))
            break;

        // Converged: accept the primal value as the phase-one optimum.
        if (rz_norm <= kConvergedResidualTol && gap <= kGapTol * (1.0 + std::abs(t))) {
            if (phase.max_violation(z.head(n)) <= opt.feas_tol) {
                const auto r = finish_feasible(z.head(n));
                if (r.status == FeasibilityStatus::feasible)
                    return r;
            }
            res.status = FeasibilityStatus::infeasible;
            res.max_violation = check_point(prog, z.head(n));
            return res;
        }

        nt.clear();
        bool interior = true;
        for (std::size_t i = 0; i < nb; ++i) {
            if (!(detail::soc_interior(s[i]) && detail::soc_interior(y[i]))) {
                interior = false;
                break;
            }
            nt.emplace_back(s[i], y[i]);
        }
        if (!interior)
            break;

        hess.setZero();
        for (std::size_t i = 0; i < nb; ++i)
            phase.add_scaled_gram(i, nt[i], hess);
        hess.diagonal().array() += 1e-13 * std::max(1.0, hess.diagonal().maxCoeff());
        Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(hess);
        if (llt.info() != Eigen::Success)
            break;
        Eigen::MatrixXd Y;
        Eigen::LDLT<Eigen::MatrixXd> schur;
        if (p > 0) {
            Y = llt.solve(F_hat.transpose());
            schur.compute(F_hat * Y);
        }

        // Newton direction for complementarity target ds (per block).
        struct Direction {
            VectorXd dz;
            VectorXd dnu;
            std::vector<VectorXd> ds, dy;
        };
        auto solve_direction = [&](const std::vector<VectorXd>& ds_target) {
            Direction d;
            std::vector<VectorXd> scaled(nb);
            VectorXd rhs = -rz;
            for (std::size_t i = 0; i < nb; ++i) {
                scaled[i] = nt[i].apply_inverse(detail::soc_divide(nt[i].lambda, ds_target[i]));
                VectorXd tmp = VectorXd::Zero(N);
                phase.add_gt(i, scaled[i], tmp);
                rhs -= tmp;
            }
            d.dz = llt.solve(rhs);
            d.dnu = VectorXd::Zero(p);
            if (p > 0) {
                d.dnu = schur.solve(F_hat * d.dz);
                d.dz -= Y * d.dnu;
            }
            d.ds.resize(nb);
            d.dy.resize(nb);
            for (std::size_t i = 0; i < nb; ++i) {
                d.ds[i] = phase.slack_step(i, d.dz);
                // dy = W^{-2} G dz + W^{-1}(lambda \ ds) = -W^{-2} ds_i + scaled
                d.dy[i] = scaled[i] - nt[i].apply_inverse(nt[i].apply_inverse(d.ds[i]));
            }
            return d;
        };
        auto max_step = [&](const Direction& d) {
            double alpha = 1.0 / 0.99;
            for (std::size_t i = 0; i < nb; ++i) {
                alpha = detail::soc_max_step(s[i], d.ds[i], alpha);
                alpha = detail::soc_max_step(y[i], d.dy[i], alpha);
            }
            return alpha;
        };

        std::vector<VectorXd> target(nb);
        for (std::size_t i = 0; i < nb; ++i)
            target[i] = -detail::soc_product(nt[i].lambda, nt[i].lambda);
        const Direction aff = solve_direction(target);
        const double alpha_aff = std::min(1.0, max_step(aff));
        double gap_aff = 0.0;
        for (std::size_t i = 0; i < nb; ++i)
            gap_aff += (s[i] + alpha_aff * aff.ds[i]).dot(y[i] + alpha_aff * aff.dy[i]);
        const double sigma = std::pow(std::clamp(gap_aff / gap, 0.0, 1.0), 3.0);

        for (std::size_t i = 0; i < nb; ++i) {
            const VectorXd ds_scaled = nt[i].apply_inverse(aff.ds[i]);
            const VectorXd dy_scaled = nt[i].apply(aff.dy[i]);
            target[i] -= detail::soc_product(ds_scaled, dy_scaled);
            target[i](0) += sigma * mu;
        }
        const Direction dir = solve_direction(target);
        const double alpha = std::min(1.0, 0.99 * max_step(dir));
        if (!(alpha > 1e-12))
            break;

        z += alpha * dir.dz;
        nu += alpha * dir.dnu;
        for (std::size_t i = 0; i < nb; ++i) {
            s[i] = phase.slack(i, z);
            y[i] += alpha * dir.dy[i];
        }

        viol = phase.max_violation(z.head(n));
        if (viol < 0.0) {
            res.iterations = iter + 1;
            return finish_feasible(z.head(n));
        }
    }
    res.status = best_local_lower > 0.0 ? FeasibilityStatus::infeasible : FeasibilityStatus::numerical_failure;
    res.max_violation = check_point(prog, z.head(n));
    return res;
}

} // namespace cfmimo::conic

#endif
