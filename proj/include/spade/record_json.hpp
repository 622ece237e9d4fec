#pragma once

// JSON round trip for ExperimentRecord so simulations can be archived and
// re-estimated later.  Counts are keyed "n,m"; the truth block carries the
// full system configuration.  Needs nlohmann/json on the include path.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "monte_carlo.hpp"

namespace spade {

inline void to_json(nlohmann::json& j, const ExperimentRecord& r) {
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [idx, c] : r.counts)
        counts[std::to_string(idx.n) + "," + std::to_string(idx.m)] = c;
    j = nlohmann::json{
        {"counts", std::move(counts)},
        {"bucket", r.bucket_count},
        {"n_cycles", r.n_cycles},
        {"truth",
         {{"separation_d", r.truth.separation_d},
          {"psf_width_w", r.truth.psf_width_w},
          {"diffusion_D", r.truth.diffusion_D},
          {"cycle_time_T", r.truth.cycle_time_T},
          {"brightness_nu", r.truth.brightness_nu},
          {"alignment_time_ta", r.truth.alignment_time_ta}}},
        {"seed", r.seed}};
}

inline void from_json(const nlohmann::json& j, ExperimentRecord& r) {
    r = ExperimentRecord{};
    for (const auto& [key, val] : j.at("counts").items()) {
        const auto comma = key.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("ExperimentRecord: count key must be \"n,m\", got \"" +
                                        key + "\"");
        const int n = std::stoi(key.substr(0, comma));
        const int m = std::stoi(key.substr(comma + 1));
        if (n < 0 || m < 0)
            throw std::invalid_argument("ExperimentRecord: negative mode index in \"" + key +
                                        "\"");
        r.counts[{n, m}] = val.get<long long>();
    }
    j.at("bucket").get_to(r.bucket_count);
    j.at("n_cycles").get_to(r.n_cycles);
    const nlohmann::json& t = j.at("truth");
    t.at("separation_d").get_to(r.truth.separation_d);
    t.at("psf_width_w").get_to(r.truth.psf_width_w);
    t.at("diffusion_D").get_to(r.truth.diffusion_D);
    t.at("cycle_time_T").get_to(r.truth.cycle_time_T);
    t.at("brightness_nu").get_to(r.truth.brightness_nu);
    t.at("alignment_time_ta").get_to(r.truth.alignment_time_ta);
    j.at("seed").get_to(r.seed);
}

}  // namespace spade
