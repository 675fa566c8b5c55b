#pragma once

#include <string>

#include "pairdiff/volume.hpp"

namespace pairdiff {

// Minimal NIfTI-1 (.nii, uncompressed) reader: dims, pixdim spacing,
// qoffset origin, common datatypes (u8, i16, i32, u16, f32, f64), scl
// slope/intercept applied. Orientation quaternions are not interpreted.
Volume read_nifti(const std::string& path);

// Writer emitting float32 volumes; used by the ingestion round-trip tests.
void write_nifti(const std::string& path, const Volume& v);

}  // namespace pairdiff
