#pragma once

#include <string>

#include "pairdiff/nets.hpp"
#include "pairdiff/schedule.hpp"

namespace pairdiff {

inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    DenoiserConfig config;
    NoiseSchedule schedule;
    CoupledModelSet models;
};

// Single-archive format: magic, version, JSON header (config, schedule,
// array names/shapes, per-controller filter scalars at the reference
// timestep), then raw little-endian float64 payloads in header order.
void save_checkpoint(const std::string& path, CoupledModelSet& models,
                     const NoiseSchedule& schedule);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace pairdiff
