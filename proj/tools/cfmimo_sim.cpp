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

// Monte Carlo driver: per-user downlink throughput CDFs and pilot sweeps.

#include "cfmimo/cfmimo.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

int main(int argc, char** argv)
{
    CLI::App app{"cell-free massive MIMO downlink beamforming simulator"};
    std::string config_path;
    std::string beamformer = "all";
    int realizations = 1;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::vector<int> sweep;
    int threads = 0;
    double bisect_tol = cfmimo::BisectionOptions{}.bisect_tol;

    app.add_option("--config", config_path, "Scenario file with key = value lines")->check(CLI::ExistingFile);
    app.add_option("--beamformer", beamformer, "ob, zf, cb or all")
        ->check(CLI::IsMember({"ob", "zf", "cb", "all"}));
    app.add_option("--realizations", realizations, "Number of Monte Carlo realizations")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Master seed (overrides rng_seed in the config)");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--pilot-sweep", sweep, "Comma-separated uplink pilot lengths")->delimiter(',');
    app.add_option("--threads", threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--bisect-tol", bisect_tol, "Bisection stopping width")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    try {
        cfmimo::ExperimentSpec spec;
        if (!config_path.empty())
            spec.config = cfmimo::load_config(config_path);
        if (seed)
            spec.config.rng_seed = *seed;
        if (beamformer != "all")
            spec.beamformers = {cfmimo::parse_beamformer(beamformer)};
        spec.num_realizations = realizations;
        spec.pilot_sweep = sweep;
        spec.output_dir = out_dir;
        spec.threads = threads;
        spec.bisection.bisect_tol = bisect_tol;

        if (spec.pilot_sweep.empty()) {
            const auto run = cfmimo::run_experiment(spec);
            cfmimo::write_outputs(spec, run);
            std::printf("%-4s %14s %14s %14s %8s\n", "bf", "p05_mbps", "median_mbps", "mean_mbps", "failed");
            for (auto bf : spec.beamformers) {
                const auto cdf = cfmimo::empirical_cdf(run.throughput(bf));
                double mean = 0.0;
                for (double v : cdf.values)
                    mean += v;
                mean /= static_cast<double>(cdf.values.size());
                std::printf("%-4s %14.4f %14.4f %14.4f %8d\n", cfmimo::to_string(bf), cdf.percentile(0.05) / 1e6,
                            cdf.percentile(0.5) / 1e6, mean / 1e6, run.failures.at(bf));
            }
        } else {
            const auto result = cfmimo::pilot_sweep(spec);
            cfmimo::write_outputs(spec, result);
            std::printf("%6s %-4s %14s %14s %18s\n", "tau_p", "bf", "mean_mbps", "min_mbps", "mean_min_user_mbps");
            for (const auto& row : result.rows)
                std::printf("%6d %-4s %14.4f %14.4f %18.4f\n", row.tau_p, cfmimo::to_string(row.beamformer),
                            row.mean_bps / 1e6, row.min_bps / 1e6, row.mean_min_user_bps / 1e6);
        }
        std::printf("outputs written to %s\n", out_dir.c_str());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
