#ifndef TES_TESB_HPP
#define TES_TESB_HPP

#include <string>

#include "tes/trace.hpp"

namespace tes {

// Trace-batch file format, little-endian:
//   magic "TESB", u16 version = 1, u8 flags (bit 0: ground truth present),
//   u8 bits, f64 sample_rate_hz, f64 full_scale, u32 n_traces,
//   u32 samples_per_trace; then per trace i16 samples[n] and, when bit 0 is
//   set, f64 t0_true_s + u8 n_true.
// The pre-trigger length is an analysis setting, not part of the format;
// read_tesb leaves it 0 for the caller to fill from its configuration.

void write_tesb(const std::string& path, const TraceBatch& batch);

// throws std::runtime_error on missing file, bad magic/version, or a size
// that does not match the header
TraceBatch read_tesb(const std::string& path);

} // namespace tes

#endif // TES_TESB_HPP
