#ifndef TES_TRACE_HPP
#define TES_TRACE_HPP

#include <cstdint>
#include <vector>

namespace tes {

struct DigitizerParams {
  double sample_rate = 1.25e9; // Hz
  int bits = 8;
  double full_scale = 10.0;     // signal units spanned by the code range
  std::uint32_t trace_length = 3125; // samples
  std::uint32_t pre_trigger = 125;   // samples before the nominal arrival

  double dt() const { return 1.0 / sample_rate; }
  double lsb() const {
    return full_scale / static_cast<double>(1u << bits);
  }
  int code_min() const { return -(1 << (bits - 1)); }
  int code_max() const { return (1 << (bits - 1)) - 1; }

  // throws std::invalid_argument naming the offending field
  void validate() const;
};

// one digitized record; samples are quantizer codes (value = code * lsb)
struct Trace {
  std::vector<std::int16_t> samples;
  double dt = 0.0;
  // ground truth, present only for simulated data (has_truth on the batch)
  double t0_true = 0.0; // seconds; 0 for photonless traces
  int n_true = -1;      // photon count; -1 when absent
};

struct TraceBatch {
  std::vector<Trace> traces;
  DigitizerParams digitizer;
  bool has_truth = false;
  // provenance
  std::uint64_t seed = 0;
  std::uint64_t params_hash = 0;
  std::uint64_t clipped_samples = 0;
};

// mid-tread quantization to the digitizer's code range; clipped is
// incremented when the value lands outside the range
std::int16_t quantize(double value, const DigitizerParams& d,
                      std::uint64_t& clipped);

} // namespace tes

#endif // TES_TRACE_HPP
