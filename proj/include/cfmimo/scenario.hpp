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

#ifndef CFMIMO_SCENARIO_HPP
#define CFMIMO_SCENARIO_HPP

#include "cfmimo/random.hpp"
#include "cfmimo/units.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfmimo {

/**
 * Scenario constants. Defaults reproduce the reference urban deployment:
 * 1 km wrapped square, 20 MHz at 1.9 GHz, 23 dBm transmit powers,
 * single-slope pathloss with 8 dB log-normal shadowing.
 */
struct SystemConfig {
    int num_aps = 100;
    int num_ues = 40;
    double side_km = 1.0;
    double pathloss_ref_db = 140.72;
    double pathloss_exp = 3.5;
    double shadow_std_db = 8.0;
    double min_distance_km = 0.01;
    double bandwidth_hz = 20e6;
    double noise_figure_db = 9.0;
    double noise_temp_k = 290.0;
    double pilot_power_dbm = 23.0;    // uplink pilots
    double data_power_dbm = 23.0;     // downlink data
    double dl_pilot_power_dbm = 23.0; // downlink beamformed pilots
    int tau_c = 400;
    int tau_p = 40;
    int tau_b = 40;
    double carrier_ghz = 1.9; // informational only
    std::uint64_t rng_seed = 1;

    void validate() const
    {
        auto fail = [](const std::string& what) { throw std::invalid_argument("SystemConfig: " + what); };
        if (num_aps < 1 || num_ues < 1)
            fail("num_aps and num_ues must be positive");
        if (num_ues > num_aps)
            fail("num_ues must not exceed num_aps");
        if (!(side_km > 0.0))
            fail("side_km must be positive");
        if (!(min_distance_km > 0.0))
            fail("min_distance_km must be positive");
        if (!(bandwidth_hz > 0.0) || !(noise_temp_k > 0.0))
            fail("bandwidth_hz and noise_temp_k must be positive");
        if (shadow_std_db < 0.0)
            fail("shadow_std_db must be nonnegative");
        if (tau_c < 1 || tau_p < 1 || tau_b < 1)
            fail("pilot lengths and coherence interval must be positive");
        if (tau_b < num_ues)
            fail("tau_b must be at least num_ues");
        if (tau_p + tau_b >= tau_c)
            fail("tau_p + tau_b must be smaller than tau_c");
        for (double p : {pilot_power_dbm, data_power_dbm, dl_pilot_power_dbm, pathloss_ref_db, pathloss_exp,
                         noise_figure_db, carrier_ghz})
            if (!std::isfinite(p))
                fail("non-finite parameter");
    }
};

namespace detail {

struct ConfigField {
    std::function<void(SystemConfig&, const std::string&)> set;
    std::function<std::string(const SystemConfig&)> get;
};

template <typename T>
ConfigField make_field(T SystemConfig::*member)
{
    ConfigField f;
    f.set = [member](SystemConfig& c, const std::string& text) {
        std::istringstream is(text);
        T value{};
        is >> value;
        std::string rest;
        if (is.fail() || (is >> rest))
            throw std::invalid_argument("config: cannot parse value '" + text + "'");
        c.*member = value;
    };
    f.get = [member](const SystemConfig& c) {
        std::ostringstream os;
        os.precision(12);
        os << c.*member;
        return os.str();
    };
    return f;
}

inline const std::map<std::string, ConfigField>& config_fields()
{
    static const std::map<std::string, ConfigField> fields = {
        {"num_aps", make_field(&SystemConfig::num_aps)},
        {"num_ues", make_field(&SystemConfig::num_ues)},
        {"side_km", make_field(&SystemConfig::side_km)},
        {"pathloss_ref_db", make_field(&SystemConfig::pathloss_ref_db)},
        {"pathloss_exp", make_field(&SystemConfig::pathloss_exp)},
        {"shadow_std_db", make_field(&SystemConfig::shadow_std_db)},
        {"min_distance_km", make_field(&SystemConfig::min_distance_km)},
        {"bandwidth_hz", make_field(&SystemConfig::bandwidth_hz)},
        {"noise_figure_db", make_field(&SystemConfig::noise_figure_db)},
        {"noise_temp_k", make_field(&SystemConfig::noise_temp_k)},
        {"pilot_power_dbm", make_field(&SystemConfig::pilot_power_dbm)},
        {"data_power_dbm", make_field(&SystemConfig::data_power_dbm)},
        {"dl_pilot_power_dbm", make_field(&SystemConfig::dl_pilot_power_dbm)},
        {"tau_c", make_field(&SystemConfig::tau_c)},
        {"tau_p", make_field(&SystemConfig::tau_p)},
        {"tau_b", make_field(&SystemConfig::tau_b)},
        {"carrier_ghz", make_field(&SystemConfig::carrier_ghz)},
        {"rng_seed", make_field(&SystemConfig::rng_seed)},
    };
    return fields;
}

inline std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

} // namespace detail

// Plain-text `key = value` lines; '#' starts a comment. Missing keys keep
// their defaults, unknown keys are an error.
inline SystemConfig parse_config(std::istream& in)
{
    SystemConfig cfg;
    const auto& fields = detail::config_fields();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        auto it = fields.find(key);
        if (it == fields.end())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second.set(cfg, value);
    }
    cfg.validate();
    return cfg;
}

inline SystemConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file '" + path + "'");
    return parse_config(in);
}

inline void write_config(std::ostream& os, const SystemConfig& cfg)
{
    for (const auto& [key, field] : detail::config_fields())
        os << key << " = " << field.get(cfg) << '\n';
}

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Layout {
    std::vector<Point> ap_positions;
    std::vector<Point> ue_positions;
};

struct BetaMatrix {
    Eigen::MatrixXd beta;      // M x K, linear scale
    Eigen::MatrixXd shadow_db; // M x K
};

struct LinkBudget {
    double noise_power_w = 0.0;
    double rho_p = 0.0;
    double rho_d = 0.0;
    double rho_b = 0.0;
};

// Distance on the wrapped square (torus metric).
inline double wrap_distance(Point p, Point q, double side)
{
    auto wrapped = [side](double a, double b) {
        const double d = std::abs(a - b);
        return std::min(d, side - d);
    };
    return std::hypot(wrapped(p.x, q.x), wrapped(p.y, q.y));
}

inline Layout draw_layout(const SystemConfig& cfg, Rng& rng)
{
    std::uniform_real_distribution<double> u(0.0, cfg.side_km);
    Layout layout;
    layout.ap_positions.resize(static_cast<std::size_t>(cfg.num_aps));
    layout.ue_positions.resize(static_cast<std::size_t>(cfg.num_ues));
    for (auto& p : layout.ap_positions) {
        p.x = u(rng);
        p.y = u(rng);
    }
    for (auto& p : layout.ue_positions) {
        p.x = u(rng);
        p.y = u(rng);
    }
    return layout;
}

// Pathloss in dB (negative) at distance d km, before shadowing.
inline double pathloss_db(double distance_km, const SystemConfig& cfg)
{
    const double d = std::max(distance_km, cfg.min_distance_km);
    return -cfg.pathloss_ref_db - 10.0 * cfg.pathloss_exp * std::log10(d);
}

inline BetaMatrix large_scale(const Layout& layout, const SystemConfig& cfg, Rng& rng)
{
    const auto M = static_cast<Eigen::Index>(layout.ap_positions.size());
    const auto K = static_cast<Eigen::Index>(layout.ue_positions.size());
    std::normal_distribution<double> shadow(0.0, 1.0);
    BetaMatrix out;
    out.beta.resize(M, K);
    out.shadow_db.resize(M, K);
    for (Eigen::Index m = 0; m < M; ++m) {
        for (Eigen::Index k = 0; k < K; ++k) {
            const double d = wrap_distance(layout.ap_positions[static_cast<std::size_t>(m)],
                                           layout.ue_positions[static_cast<std::size_t>(k)], cfg.side_km);
            const double z = cfg.shadow_std_db * shadow(rng);
            out.shadow_db(m, k) = z;
            out.beta(m, k) = db_to_linear(pathloss_db(d, cfg) + z);
        }
    }
    return out;
}

inline LinkBudget link_budget(const SystemConfig& cfg)
{
    LinkBudget lb;
    lb.noise_power_w = cfg.bandwidth_hz * kBoltzmann * cfg.noise_temp_k * db_to_linear(cfg.noise_figure_db);
    lb.rho_p = dbm_to_watt(cfg.pilot_power_dbm) / lb.noise_power_w;
    lb.rho_d = dbm_to_watt(cfg.data_power_dbm) / lb.noise_power_w;
    lb.rho_b = dbm_to_watt(cfg.dl_pilot_power_dbm) / lb.noise_power_w;
    return lb;
}

} // namespace cfmimo

#endif
