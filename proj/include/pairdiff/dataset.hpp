#pragma once

#include <string>
#include <vector>

#include "pairdiff/phantom.hpp"

namespace pairdiff {

struct Dataset {
    std::vector<PairedSample> samples;
    SplitIndices split;
};

// Directory layout: one <id>.bin per sample (raw little-endian float32
// planes, modality order) with a <id>.json sidecar {id, shape, modalities,
// source_tag, transform_log}, plus manifest.json listing split membership.
void write_dataset(const std::string& dir, const std::vector<PairedSample>& samples,
                   const SplitIndices& split);

Dataset load_dataset(const std::string& dir);

// Convenience accessors resolving split indices to sample lists.
std::vector<PairedSample> gather(const Dataset& ds, const std::vector<size_t>& indices);

}  // namespace pairdiff
