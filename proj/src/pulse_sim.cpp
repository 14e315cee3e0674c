#include "tes/pulse_sim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tes/constants.hpp"
#include "tes/rng.hpp"

namespace tes {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("simulate: ") + what);
}

} // namespace

void DigitizerParams::validate() const {
  if (!(sample_rate > 0))
    throw std::invalid_argument("digitizer: sample_rate must be > 0");
  if (bits < 1 || bits > 16)
    throw std::invalid_argument("digitizer: bits must be in [1, 16]");
  if (!(full_scale > 0))
    throw std::invalid_argument("digitizer: full_scale must be > 0");
  if (trace_length <= pre_trigger)
    throw std::invalid_argument("digitizer: trace_length must exceed pre_trigger");
}

std::int16_t quantize(double value, const DigitizerParams& d,
                      std::uint64_t& clipped) {
  long code = std::lround(value / d.lsb());
  if (code < d.code_min()) {
    code = d.code_min();
    ++clipped;
  } else if (code > d.code_max()) {
    code = d.code_max();
    ++clipped;
  }
  return static_cast<std::int16_t>(code);
}

void SourceParams::validate() const {
  require(mean_photon_number >= 0, "mean_photon_number must be >= 0");
  require(repetition_rate > 0, "repetition_rate must be > 0");
  require(optical_pulse_duration >= 0, "optical_pulse_duration must be >= 0");
  require(arrival_offset >= 0, "arrival_offset must be >= 0");
  require(arrival_sigma >= 0, "arrival_sigma must be >= 0");
  require(arrival_exp >= 0, "arrival_exp must be >= 0");
  require(energy_smearing >= 0, "energy_smearing must be >= 0");
}

void NoiseParams::validate() const {
  require(white_rms >= 0, "white_rms must be >= 0");
  require(total_rms >= white_rms, "total_rms must be >= white_rms");
  require(slow_tau > 0, "slow_tau must be > 0");
}

TraceBatch simulate_batch(const SourceParams& src, const ShapeModel& shape,
                          const DeviceParams& dev, const NoiseParams& noise,
                          const DigitizerParams& digi, std::size_t n_traces) {
  src.validate();
  noise.validate();
  digi.validate();
  validate(dev);

  const double dt = digi.dt();
  const double lsb = digi.lsb();
  const std::uint32_t len = digi.trace_length;
  const int n_cap = shape.params().n_max;
  const double hnu_ev = dev.photon_energy / electron_volt;

  // the white budget includes quantization noise: generate only the rest
  const double qvar = lsb * lsb / 12.0;
  const double white_var = noise.white_rms * noise.white_rms - qvar;
  require(white_var >= 0 || noise.total_rms == 0,
          "white_rms must cover the quantization noise lsb/sqrt(12)");
  const double sigma_white = noise.total_rms == 0 ? 0.0 : std::sqrt(white_var);
  const double sigma_slow = std::sqrt(std::max(
      0.0, noise.total_rms * noise.total_rms - noise.white_rms * noise.white_rms));
  const double ar = std::exp(-dt / noise.slow_tau);
  const double ar_drive = std::sqrt(1.0 - ar * ar); // stationary unit variance

  TraceBatch out;
  out.digitizer = digi;
  out.has_truth = true;
  out.seed = src.rng_seed;
  out.traces.resize(n_traces);

  std::vector<double> acc(len);
  for (std::size_t i = 0; i < n_traces; ++i) {
    TraceRng rng = TraceRng::for_trace(src.rng_seed, i);
    Trace& tr = out.traces[i];
    tr.dt = dt;
    tr.samples.resize(len);

    int n = rng.poisson_capped(src.mean_photon_number, n_cap);
    tr.n_true = n;
    tr.t0_true = 0.0;
    double amp = 0.0;
    if (n >= 1) {
      double t0 = src.arrival_offset + src.arrival_sigma * rng.normal();
      if (src.arrival_exp > 0) t0 += rng.expo(src.arrival_exp / n);
      tr.t0_true = t0;
      double lin = static_cast<double>(n);
      if (src.energy_smearing > 0)
        lin = std::max(0.0, lin + rng.normal() * (src.energy_smearing / hnu_ev));
      amp = shape.amplitude(lin);
    }

    if (n >= 1) {
      for (std::uint32_t j = 0; j < len; ++j)
        acc[j] = amp * shape.waveform(n, j * dt - tr.t0_true);
    } else {
      std::fill(acc.begin(), acc.end(), 0.0);
    }
    if (sigma_slow > 0) {
      double s = rng.normal();
      acc[0] += sigma_slow * s;
      for (std::uint32_t j = 1; j < len; ++j) {
        s = ar * s + ar_drive * rng.normal();
        acc[j] += sigma_slow * s;
      }
    }
    if (sigma_white > 0)
      for (std::uint32_t j = 0; j < len; ++j) acc[j] += sigma_white * rng.normal();

    for (std::uint32_t j = 0; j < len; ++j)
      tr.samples[j] = quantize(acc[j], digi, out.clipped_samples);
  }
  return out;
}

} // namespace tes
