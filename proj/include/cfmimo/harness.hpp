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

#ifndef CFMIMO_HARNESS_HPP
#define CFMIMO_HARNESS_HPP

#include "cfmimo/beamform.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/downlink.hpp"
#include "cfmimo/random.hpp"
#include "cfmimo/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cfmimo {

/// Monte Carlo experiment description.
struct ExperimentSpec {
    SystemConfig config;
    std::vector<Beamformer> beamformers{Beamformer::ob, Beamformer::zf, Beamformer::cb};
    int num_realizations = 1;
    std::vector<int> pilot_sweep; // empty: single run at config.tau_p
    std::string output_dir = ".";
    BisectionOptions bisection{};
    int threads = 0;                     // 0: hardware concurrency
    double max_failure_fraction = 0.01;  // abort threshold per beamformer
    int max_fading_resamples = 100;      // ZF rank-failure retries per realization

    void validate() const
    {
        config.validate();
        if (num_realizations < 1)
            throw std::invalid_argument("ExperimentSpec: num_realizations must be positive");
        if (beamformers.empty())
            throw std::invalid_argument("ExperimentSpec: no beamformer selected");
        for (std::size_t i = 0; i < beamformers.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (beamformers[i] == beamformers[j])
                    throw std::invalid_argument("ExperimentSpec: duplicate beamformer");
        for (int tp : pilot_sweep)
            if (tp < 1 || tp + config.tau_b >= config.tau_c)
                throw std::invalid_argument("ExperimentSpec: sweep value tau_p=" + std::to_string(tp) +
                                            " violates tau_p + tau_b < tau_c");
        if (threads < 0 || max_fading_resamples < 0 || !(max_failure_fraction >= 0.0))
            throw std::invalid_argument("ExperimentSpec: invalid execution settings");
    }
};

struct UserSample {
    Beamformer beamformer = Beamformer::ob;
    int realization = 0;
    int user = 0;
    double gamma_ue = 0.0;
    double throughput_bps = 0.0;
    bool min_user = false;
};

// Per (beamformer, realization) bookkeeping.
struct SolveRecord {
    Beamformer beamformer = Beamformer::ob;
    int realization = 0;
    bool failed = false;
    std::string failure;
    double gamma_star = 0.0;
    int bisection_steps = 0;
    int solver_iterations = 0;
    int numerical_failures = 0;
    double seconds = 0.0;
};

struct RunResult {
    std::uint64_t seed = 0;
    int tau_p = 0;
    std::vector<UserSample> samples;   // ordered by beamformer, realization, user
    std::vector<SolveRecord> records;  // ordered by beamformer, realization
    std::map<Beamformer, int> failures;
    int fading_resamples = 0;
    std::string started;
    std::string finished;

    std::vector<double> throughput(Beamformer bf) const
    {
        std::vector<double> out;
        for (const auto& s : samples)
            if (s.beamformer == bf)
                out.push_back(s.throughput_bps);
        return out;
    }
};

class ExperimentAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Empirical distribution: values ascending, levels i/N.
struct CdfTable {
    std::vector<double> values;
    std::vector<double> levels;

    // Smallest sample whose CDF level reaches p.
    double percentile(double p) const
    {
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("CdfTable::percentile: p must lie in [0, 1]");
        const auto it = std::lower_bound(levels.begin(), levels.end(), p - 1e-12);
        const auto idx = static_cast<std::size_t>(it - levels.begin());
        return values[std::min(idx, values.size() - 1)];
    }
};

inline CdfTable empirical_cdf(std::vector<double> samples)
{
    if (samples.empty())
        throw std::invalid_argument("empirical_cdf: empty sample set");
    for (double v : samples)
        if (std::isnan(v))
            throw std::invalid_argument("empirical_cdf: NaN sample");
    std::sort(samples.begin(), samples.end());
    CdfTable t;
    const auto n = samples.size();
    t.levels.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        t.levels[i] = static_cast<double>(i + 1) / static_cast<double>(n);
    t.values = std::move(samples);
    return t;
}

namespace detail {

inline std::string timestamp_now()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::uint64_t key(Stream s) { return static_cast<std::uint64_t>(s); }

struct RealizationOutcome {
    std::vector<std::vector<UserSample>> samples; // per beamformer
    std::vector<SolveRecord> records;             // per beamformer
    int fading_resamples = 0;
};

// One realization end to end. Layout, shadowing and pilot streams depend on
// the realization index only, so runs with different pilot lengths see the
// same geometry; fading and noise additionally depend on the resample
// attempt.
inline RealizationOutcome run_realization(const ExperimentSpec& spec, int r)
{
    const SystemConfig& cfg = spec.config;
    const std::uint64_t seed = cfg.rng_seed;
    const auto ru = static_cast<std::uint64_t>(r);
    const LinkBudget lb = link_budget(cfg);

    Rng layout_rng = make_stream(seed, {ru, key(Stream::layout)});
    Rng shadow_rng = make_stream(seed, {ru, key(Stream::shadowing)});
    Rng pilot_rng = make_stream(seed, {ru, key(Stream::pilots)});
    const Layout layout = draw_layout(cfg, layout_rng);
    const BetaMatrix bm = large_scale(layout, cfg, shadow_rng);
    const PilotBook pilots = assign_pilots(cfg.tau_p, cfg.num_ues, pilot_rng);

    const std::size_t nbf = spec.beamformers.size();
    RealizationOutcome out;
    for (int attempt = 0;; ++attempt) {
        const auto au = static_cast<std::uint64_t>(attempt);
        Rng fading_rng = make_stream(seed, {ru, key(Stream::small_scale), au});
        Rng ul_rng = make_stream(seed, {ru, key(Stream::uplink_noise), au});
        const Eigen::MatrixXcd g = compose_channel(bm.beta, draw_small_scale(cfg.num_aps, cfg.num_ues, fading_rng));
        const UplinkPilotRx rx = uplink_pilot_receive(g, pilots, lb.rho_p, ul_rng);
        const ChannelState est = mmse_estimate(rx, pilots, bm.beta, lb.rho_p);

        out.samples.assign(nbf, {});
        out.records.assign(nbf, {});
        bool rank_deficient = false;
        for (std::size_t b = 0; b < nbf && !rank_deficient; ++b) {
            const Beamformer bf = spec.beamformers[b];
            SolveRecord& rec = out.records[b];
            rec.beamformer = bf;
            rec.realization = r;
            MaxMinResult res;
            try {
                res = run_beamformer(bf, est.g_hat, est.delta, lb.rho_d, spec.bisection);
            } catch (const RankDeficientError&) {
                rank_deficient = true;
                break;
            } catch (const BisectionError& e) {
                rec.failed = true;
                rec.failure = e.what();
                continue;
            }
            rec.gamma_star = res.gamma_star;
            rec.bisection_steps = static_cast<int>(res.log.iterations.size());
            rec.solver_iterations = res.log.total_solver_iterations;
            rec.numerical_failures = res.log.numerical_failures;
            rec.seconds = res.log.seconds;
            if (res.log.numerical_failures > 0) {
                rec.failed = true;
                rec.failure = "numerical failure during bisection";
                continue;
            }

            const EffectiveChannel eff = effective_channels(g, res.precoder.W);
            Rng dl_rng = make_stream(seed, {ru, key(Stream::downlink_noise), au, static_cast<std::uint64_t>(bf)});
            const DownlinkEstimate dl = downlink_train(eff, cfg.tau_b, lb.rho_b, dl_rng);
            const Eigen::VectorXd gamma = ue_sinr(dl, eff, lb.rho_d);
            const Eigen::VectorXd rate = net_throughput(gamma, cfg.bandwidth_hz, cfg.tau_p, cfg.tau_b, cfg.tau_c);
            Eigen::Index worst = 0;
            rate.minCoeff(&worst);
            auto& rows = out.samples[b];
            for (int k = 0; k < cfg.num_ues; ++k)
                rows.push_back(UserSample{bf, r, k, gamma(k), rate(k), k == worst});
        }
        if (!rank_deficient)
            return out;
        if (attempt >= spec.max_fading_resamples)
            throw std::runtime_error("realization " + std::to_string(r) +
                                     ": zero-forcing rank deficiency persisted after resampling");
        ++out.fading_resamples;
    }
}

} // namespace detail

/**
 * Run all realizations of one experiment. Realizations are distributed over
 * worker threads; results are reduced in realization order, so the output
 * does not depend on scheduling. Failed solves are excluded from the
 * samples and counted; more than `max_failure_fraction` failures for any
 * beamformer raises ExperimentAborted.
 */
inline RunResult run_experiment(const ExperimentSpec& spec)
{
    spec.validate();
    RunResult result;
    result.seed = spec.config.rng_seed;
    result.tau_p = spec.config.tau_p;
    result.started = detail::timestamp_now();

    const int n = spec.num_realizations;
    std::vector<detail::RealizationOutcome> outcomes(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int r = next++; r < n; r = next++) {
            try {
                outcomes[static_cast<std::size_t>(r)] = detail::run_realization(spec, r);
            } catch (...) {
                errors[static_cast<std::size_t>(r)] = std::current_exception();
            }
        }
    };
    int threads = spec.threads > 0 ? spec.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, n);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    for (std::size_t b = 0; b < spec.beamformers.size(); ++b) {
        const Beamformer bf = spec.beamformers[b];
        int failed = 0;
        for (const auto& o : outcomes) {
            result.records.push_back(o.records[b]);
            if (o.records[b].failed)
                ++failed;
            else
                result.samples.insert(result.samples.end(), o.samples[b].begin(), o.samples[b].end());
        }
        result.failures[bf] = failed;
        if (failed > spec.max_failure_fraction * n)
            throw ExperimentAborted(std::string("beamformer ") + to_string(bf) + ": " + std::to_string(failed) +
                                    " of " + std::to_string(n) + " realizations failed");
    }
    for (const auto& o : outcomes)
        result.fading_resamples += o.fading_resamples;
    result.finished = detail::timestamp_now();
    return result;
}

struct SweepRow {
    int tau_p = 0;
    Beamformer beamformer = Beamformer::ob;
    double mean_bps = 0.0;         // over all users and realizations
    double min_bps = 0.0;          // global minimum
    double mean_min_user_bps = 0.0; // per-realization minimum, averaged
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<RunResult> runs;
};

inline std::vector<SweepRow> summarize(const RunResult& run, const std::vector<Beamformer>& beamformers)
{
    std::vector<SweepRow> rows;
    for (const Beamformer bf : beamformers) {
        SweepRow row;
        row.tau_p = run.tau_p;
        row.beamformer = bf;
        double sum = 0.0;
        double min_sum = 0.0;
        std::size_t count = 0;
        std::size_t min_count = 0;
        row.min_bps = std::numeric_limits<double>::infinity();
        for (const auto& s : run.samples) {
            if (s.beamformer != bf)
                continue;
            sum += s.throughput_bps;
            ++count;
            row.min_bps = std::min(row.min_bps, s.throughput_bps);
            if (s.min_user) {
                min_sum += s.throughput_bps;
                ++min_count;
            }
        }
        if (count == 0)
            throw std::runtime_error(std::string("summarize: no samples for beamformer ") + to_string(bf));
        row.mean_bps = sum / static_cast<double>(count);
        row.mean_min_user_bps = min_sum / static_cast<double>(min_count);
        rows.push_back(row);
    }
    return rows;
}

// One experiment per pilot length. Geometry, shadowing and fading streams
// are shared across pilot lengths, so the comparison is paired.
inline SweepResult pilot_sweep(const ExperimentSpec& spec)
{
    if (spec.pilot_sweep.empty())
        throw std::invalid_argument("pilot_sweep: empty sweep list");
    spec.validate();
    SweepResult out;
    for (int tp : spec.pilot_sweep) {
        ExperimentSpec one = spec;
        one.config.tau_p = tp;
        one.pilot_sweep.clear();
        out.runs.push_back(run_experiment(one));
        const auto rows = summarize(out.runs.back(), spec.beamformers);
        out.rows.insert(out.rows.end(), rows.begin(), rows.end());
    }
    return out;
}

// ---- output ------------------------------------------------------------

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline void write_throughput_samples(std::ostream& os, const RunResult& run)
{
    os << "beamformer,realization,user,gamma_ue,throughput_bps\n";
    for (const auto& s : run.samples)
        os << to_string(s.beamformer) << ',' << s.realization << ',' << s.user << ',' << format_double(s.gamma_ue)
           << ',' << format_double(s.throughput_bps) << '\n';
}

inline void write_cdf(std::ostream& os, const CdfTable& cdf)
{
    os << "value,level\n";
    for (std::size_t i = 0; i < cdf.values.size(); ++i)
        os << format_double(cdf.values[i]) << ',' << format_double(cdf.levels[i]) << '\n';
}

inline void write_sweep(std::ostream& os, const std::vector<SweepRow>& rows)
{
    os << "tau_p,beamformer,mean_bps,min_bps,mean_min_user_bps\n";
    for (const auto& r : rows)
        os << r.tau_p << ',' << to_string(r.beamformer) << ',' << format_double(r.mean_bps) << ','
           << format_double(r.min_bps) << ',' << format_double(r.mean_min_user_bps) << '\n';
}

inline void write_run_meta(std::ostream& os, const ExperimentSpec& spec, const std::vector<const RunResult*>& runs)
{
    os << "seed = " << spec.config.rng_seed << '\n';
    os << "realizations = " << spec.num_realizations << '\n';
    os << "beamformers =";
    for (auto bf : spec.beamformers)
        os << ' ' << to_string(bf);
    os << '\n';
    os << "bisect_tol = " << format_double(spec.bisection.bisect_tol) << '\n';
    os << "feas_tol = " << format_double(spec.bisection.solver.feas_tol) << '\n';
    os << "\n[config]\n";
    write_config(os, spec.config);
    for (const RunResult* run : runs) {
        os << "\n[run tau_p=" << run->tau_p << "]\n";
        os << "started = " << run->started << '\n';
        os << "finished = " << run->finished << '\n';
        os << "fading_resamples = " << run->fading_resamples << '\n';
        for (auto bf : spec.beamformers) {
            long long iters = 0;
            double secs = 0.0;
            for (const auto& rec : run->records)
                if (rec.beamformer == bf) {
                    iters += rec.solver_iterations;
                    secs += rec.seconds;
                }
            os << "failures." << to_string(bf) << " = " << run->failures.at(bf) << '\n';
            os << "solver_iterations." << to_string(bf) << " = " << iters << '\n';
            os << "solve_seconds." << to_string(bf) << " = " << format_double(secs) << '\n';
        }
    }
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p)
{
    std::ofstream f(p);
    if (!f)
        throw std::runtime_error("cannot write '" + p.string() + "'");
    return f;
}

} // namespace detail

// throughput_samples.csv, cdf_<bf>.csv and run_meta.txt for a single run.
inline void write_outputs(const ExperimentSpec& spec, const RunResult& run)
{
    const std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);
    {
        auto f = detail::open_output(dir / "throughput_samples.csv");
        write_throughput_samples(f, run);
    }
    for (auto bf : spec.beamformers) {
        auto f = detail::open_output(dir / ("cdf_" + std::string(to_string(bf)) + ".csv"));
        write_cdf(f, empirical_cdf(run.throughput(bf)));
    }
    auto f = detail::open_output(dir / "run_meta.txt");
    write_run_meta(f, spec, {&run});
}

// sweep.csv plus run_meta.txt covering every pilot length.
inline void write_outputs(const ExperimentSpec& spec, const SweepResult& sweep)
{
    const std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);
    {
        auto f = detail::open_output(dir / "sweep.csv");
        write_sweep(f, sweep.rows);
    }
    std::vector<const RunResult*> runs;
    for (const auto& r : sweep.runs)
        runs.push_back(&r);
    auto f = detail::open_output(dir / "run_meta.txt");
    write_run_meta(f, spec, runs);
}

} // namespace cfmimo

#endif
