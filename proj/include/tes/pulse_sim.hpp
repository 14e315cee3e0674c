#ifndef TES_PULSE_SIM_HPP
#define TES_PULSE_SIM_HPP

#include <cstddef>
#include <cstdint>

#include "tes/device_model.hpp"
#include "tes/pulse_shape.hpp"
#include "tes/trace.hpp"

namespace tes {

struct SourceParams {
  double mean_photon_number = 1.3;
  double repetition_rate = 100e3;        // Hz; isolated-pulse bookkeeping only
  double optical_pulse_duration = 1e-9;  // seconds, informational
  double arrival_offset = 100e-9;        // seconds into the frame
  double arrival_sigma = 0.45e-9;        // Gaussian spread of the trigger
  double arrival_exp = 1.6e-9;           // absorption delay constant; the
                                         // first of n photons arrives with
                                         // the min of n draws, i.e. exp/n
  double energy_smearing = 0.0;          // Gaussian sigma, eV; 0 = off
  std::uint64_t rng_seed = 1;

  void validate() const;
};

// trace-level noise in signal units (the amplitude scale of the shape table)
struct NoiseParams {
  double total_rms = 0.089; // quantized-trace sample RMS
  double white_rms = 0.044; // white part, quantization noise included
  double slow_tau = 300e-9; // correlation time of the slow component

  void validate() const;
};

// Per trace: photon number ~ Poisson(mean) conditioned to <= shape.n_max,
// arrival = offset + N(0, sigma^2) + Exp(exp/n); signal = compressed
// amplitude x class shape; noise = slow AR(1) + white; then mid-tread
// quantization. Deterministic: each trace derives its own RNG stream from
// (rng_seed, index), so results are identical under any work ordering.
// dev supplies the photon energy for the smearing knob and documents the
// rise-time ingredients; the noise scale is configured in signal units.
TraceBatch simulate_batch(const SourceParams& src, const ShapeModel& shape,
                          const DeviceParams& dev, const NoiseParams& noise,
                          const DigitizerParams& digi, std::size_t n_traces);

} // namespace tes

#endif // TES_PULSE_SIM_HPP
