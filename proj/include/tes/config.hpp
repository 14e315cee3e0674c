#ifndef TES_CONFIG_HPP
#define TES_CONFIG_HPP

// Run configuration: the JSON boundary of the toolkit. Keys carry display
// units (mK, nH, ns, MHz, eV, ...) and are stored verbatim so a config
// round-trips through save/load without losing a bit; conversion to the
// strict-SI structs of the library happens in the *_params() accessors.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tes/device_model.hpp"
#include "tes/pulse_shape.hpp"
#include "tes/pulse_sim.hpp"
#include "tes/trace.hpp"

namespace tes {

struct ConfigDevice {
  double t0_mk = 150.0;
  double r0_ohm = 1.0;
  double volume_um3 = 12.5;
  double sigma_ep_nw_um3_k5 = 0.4;   // electron-phonon coupling, nW um^-3 K^-5
  double gamma_aj_um3_k2 = 340.2;    // heat-capacity coefficient, aJ um^-3 K^-2
  double alpha = 475.0;
  double beta = 1.5;
  double m_j = 2.5;
  double inductance_nh = 24.0;
  double eta = 0.65;
  double photon_energy_ev = 0.8;
  double amp_bandwidth_mhz = 20.0;
  std::optional<double> i0_ua;       // informational
  std::optional<double> p0_fw;       // overrides the Sigma*V*T0^5 closure
};

struct ConfigRanges {
  Interval alpha{150.0, 800.0};
  Interval beta{0.8, 2.2};
  Interval m_j{1.5, 3.5};
  Interval inductance_nh{19.0, 29.0};
  Interval eta{0.4, 0.9};
};

struct ConfigShapeClass {
  double rise_10_90_ns = 0.0;
  double decay_1e_ns = 0.0;
};

struct ConfigShape {
  double tau_el_ns = 9.6;
  double tau_ext_ns = 17.5;
  double rise_tanh_ns = 28.0;
  double sag_ns = 100.0;
  std::vector<ConfigShapeClass> classes = {
      {24.8, 759.0}, {25.6, 1278.0}, {27.2, 1692.0}};
  int n_max = 6;
  double compression = 0.25;
  double ringing_fraction = 0.0;
  double ringing_frequency_mhz = 0.0;
  double ringing_damping_ns = 0.0;
};

struct ConfigDigitizer {
  double sample_rate_mhz = 1250.0;
  int bits = 8;
  double full_scale = 10.0;          // signal units
  std::uint32_t trace_length = 3125;
  std::uint32_t pre_trigger = 125;
};

struct ConfigSource {
  double mean_photon_number = 1.3;
  double repetition_rate_khz = 100.0;
  double optical_pulse_duration_ns = 1.0;
  double arrival_offset_ns = 100.0;
  double arrival_sigma_ns = 0.45;
  double arrival_exp_ns = 1.6;
  double energy_smearing_ev = 0.0;
};

struct ConfigNoise {
  double total_rms = 0.089;          // signal units
  double white_rms = 0.044;
  double slow_tau_ns = 300.0;
};

struct ConfigAnalysis {
  std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5,
                                    0.6, 0.7, 0.8, 0.9};
  std::uint32_t area_bins = 512;
  std::vector<int> jitter_classes = {1, 2, 3};
};

struct RunConfig {
  ConfigDevice device;
  ConfigRanges ranges;
  ConfigShape shape;
  ConfigDigitizer digitizer;
  ConfigSource source;
  ConfigNoise noise;
  ConfigAnalysis analysis;
  std::uint64_t seed = 1;

  DeviceParams device_params() const;
  ParamRange param_range() const;        // inductance converted to henry
  PulseShapeParams shape_params() const;
  DigitizerParams digitizer_params() const;
  SourceParams source_params() const;    // rng_seed = seed
  NoiseParams noise_params() const;
};

RunConfig default_config();

// Strict parse: unknown or mistyped keys throw std::invalid_argument naming
// the offending field by its JSON path; absent keys keep their defaults.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);   // std::runtime_error on I/O

// Serialization is canonical: fixed key order, shortest round-trip numbers.
std::string config_to_json(const RunConfig& c);
void save_config(const std::string& path, const RunConfig& c);

// Boundary validation first (names the JSON path of a bad field), then the
// library validators run on the converted structs as a backstop.
void validate(const RunConfig& c);

// FNV-1a over the canonical serialization; reports cite it as provenance.
std::uint64_t config_hash(const RunConfig& c);

} // namespace tes

#endif // TES_CONFIG_HPP
