#include "tes/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tes/constants.hpp"

namespace tes {

namespace {

using ordered_json = nlohmann::ordered_json;

// boundary-unit factors; display units follow the device datasheet style
constexpr double kMilli = 1e-3;
constexpr double kMicro = 1e-6;
constexpr double kNano = 1e-9;
constexpr double kFemto = 1e-15;
constexpr double kAtto = 1e-18;
constexpr double kKilo = 1e3;
constexpr double kMega = 1e6;

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
  throw std::invalid_argument("config: " + path + ": " + why);
}

double num(const ordered_json& j, const std::string& path) {
  if (!j.is_number()) bad_field(path, "expected a number");
  return j.get<double>();
}

std::uint64_t uint(const ordered_json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() &&
                                 j.get<std::int64_t>() < 0))
    bad_field(path, "expected a nonnegative integer");
  return j.get<std::uint64_t>();
}

int small_int(const ordered_json& j, const std::string& path) {
  std::uint64_t v = uint(j, path);
  if (v > 1u << 20) bad_field(path, "out of range");
  return static_cast<int>(v);
}

Interval interval(const ordered_json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2)
    bad_field(path, "expected [lo, hi]");
  return {num(j[0], path + "[0]"), num(j[1], path + "[1]")};
}

// walks one object with a fixed key table; unknown keys are hard errors so a
// typo cannot silently fall back to a default
template <typename Fn>
void object(const ordered_json& j, const std::string& path, Fn&& field) {
  if (!j.is_object()) bad_field(path, "expected an object");
  for (const auto& [key, value] : j.items())
    if (!field(key, value)) bad_field(path + "." + key, "unknown key");
}

ordered_json ranges_json(const ConfigRanges& r) {
  auto pair = [](const Interval& i) { return ordered_json{i.lo, i.hi}; };
  ordered_json j;
  j["alpha"] = pair(r.alpha);
  j["beta"] = pair(r.beta);
  j["m_j"] = pair(r.m_j);
  j["inductance_nh"] = pair(r.inductance_nh);
  j["eta"] = pair(r.eta);
  return j;
}

} // namespace

DeviceParams RunConfig::device_params() const {
  DeviceParams p;
  p.t0 = device.t0_mk * kMilli;
  p.r0 = device.r0_ohm;
  p.volume = device.volume_um3;
  p.sigma_ep = device.sigma_ep_nw_um3_k5 * kNano;
  p.gamma = device.gamma_aj_um3_k2 * kAtto;
  p.alpha = device.alpha;
  p.beta = device.beta;
  p.m_j = device.m_j;
  p.inductance = device.inductance_nh * kNano;
  p.eta = device.eta;
  p.photon_energy = device.photon_energy_ev * electron_volt;
  p.amp_bandwidth = device.amp_bandwidth_mhz * kMega;
  if (device.i0_ua) p.i0 = *device.i0_ua * kMicro;
  if (device.p0_fw) p.p0_override = *device.p0_fw * kFemto;
  return p;
}

ParamRange RunConfig::param_range() const {
  ParamRange r;
  r.alpha = ranges.alpha;
  r.beta = ranges.beta;
  r.m_j = ranges.m_j;
  r.inductance = {ranges.inductance_nh.lo * kNano, ranges.inductance_nh.hi * kNano};
  r.eta = ranges.eta;
  return r;
}

PulseShapeParams RunConfig::shape_params() const {
  PulseShapeParams p;
  p.tau_el = shape.tau_el_ns * kNano;
  p.tau_ext = shape.tau_ext_ns * kNano;
  p.rise_tanh = shape.rise_tanh_ns * kNano;
  p.sag = shape.sag_ns * kNano;
  p.classes.clear();
  for (const ConfigShapeClass& c : shape.classes)
    p.classes.push_back({c.rise_10_90_ns * kNano, c.decay_1e_ns * kNano});
  p.n_max = shape.n_max;
  p.compression = shape.compression;
  p.ringing.fraction = shape.ringing_fraction;
  p.ringing.frequency = shape.ringing_frequency_mhz * kMega;
  p.ringing.damping = shape.ringing_damping_ns * kNano;
  return p;
}

DigitizerParams RunConfig::digitizer_params() const {
  DigitizerParams p;
  p.sample_rate = digitizer.sample_rate_mhz * kMega;
  p.bits = digitizer.bits;
  p.full_scale = digitizer.full_scale;
  p.trace_length = digitizer.trace_length;
  p.pre_trigger = digitizer.pre_trigger;
  return p;
}

SourceParams RunConfig::source_params() const {
  SourceParams p;
  p.mean_photon_number = source.mean_photon_number;
  p.repetition_rate = source.repetition_rate_khz * kKilo;
  p.optical_pulse_duration = source.optical_pulse_duration_ns * kNano;
  p.arrival_offset = source.arrival_offset_ns * kNano;
  p.arrival_sigma = source.arrival_sigma_ns * kNano;
  p.arrival_exp = source.arrival_exp_ns * kNano;
  p.energy_smearing = source.energy_smearing_ev;
  p.rng_seed = seed;
  return p;
}

NoiseParams RunConfig::noise_params() const {
  NoiseParams p;
  p.total_rms = noise.total_rms;
  p.white_rms = noise.white_rms;
  p.slow_tau = noise.slow_tau_ns * kNano;
  return p;
}

RunConfig default_config() { return RunConfig{}; }

std::string config_to_json(const RunConfig& c) {
  ordered_json j;
  ordered_json& d = j["device"];
  d["t0_mk"] = c.device.t0_mk;
  d["r0_ohm"] = c.device.r0_ohm;
  d["volume_um3"] = c.device.volume_um3;
  d["sigma_ep_nw_um3_k5"] = c.device.sigma_ep_nw_um3_k5;
  d["gamma_aj_um3_k2"] = c.device.gamma_aj_um3_k2;
  d["alpha"] = c.device.alpha;
  d["beta"] = c.device.beta;
  d["m_j"] = c.device.m_j;
  d["inductance_nh"] = c.device.inductance_nh;
  d["eta"] = c.device.eta;
  d["photon_energy_ev"] = c.device.photon_energy_ev;
  d["amp_bandwidth_mhz"] = c.device.amp_bandwidth_mhz;
  if (c.device.i0_ua) d["i0_ua"] = *c.device.i0_ua;
  if (c.device.p0_fw) d["p0_fw"] = *c.device.p0_fw;
  j["ranges"] = ranges_json(c.ranges);
  ordered_json& s = j["shape"];
  s["tau_el_ns"] = c.shape.tau_el_ns;
  s["tau_ext_ns"] = c.shape.tau_ext_ns;
  s["rise_tanh_ns"] = c.shape.rise_tanh_ns;
  s["sag_ns"] = c.shape.sag_ns;
  s["classes"] = ordered_json::array();
  for (const ConfigShapeClass& cl : c.shape.classes)
    s["classes"].push_back(
        {{"rise_10_90_ns", cl.rise_10_90_ns}, {"decay_1e_ns", cl.decay_1e_ns}});
  s["n_max"] = c.shape.n_max;
  s["compression"] = c.shape.compression;
  s["ringing"] = {{"fraction", c.shape.ringing_fraction},
                  {"frequency_mhz", c.shape.ringing_frequency_mhz},
                  {"damping_ns", c.shape.ringing_damping_ns}};
  ordered_json& g = j["digitizer"];
  g["sample_rate_mhz"] = c.digitizer.sample_rate_mhz;
  g["bits"] = c.digitizer.bits;
  g["full_scale"] = c.digitizer.full_scale;
  g["trace_length"] = c.digitizer.trace_length;
  g["pre_trigger"] = c.digitizer.pre_trigger;
  ordered_json& o = j["source"];
  o["mean_photon_number"] = c.source.mean_photon_number;
  o["repetition_rate_khz"] = c.source.repetition_rate_khz;
  o["optical_pulse_duration_ns"] = c.source.optical_pulse_duration_ns;
  o["arrival_offset_ns"] = c.source.arrival_offset_ns;
  o["arrival_sigma_ns"] = c.source.arrival_sigma_ns;
  o["arrival_exp_ns"] = c.source.arrival_exp_ns;
  o["energy_smearing_ev"] = c.source.energy_smearing_ev;
  ordered_json& n = j["noise"];
  n["total_rms"] = c.noise.total_rms;
  n["white_rms"] = c.noise.white_rms;
  n["slow_tau_ns"] = c.noise.slow_tau_ns;
  ordered_json& a = j["analysis"];
  a["thresholds"] = c.analysis.thresholds;
  a["area_bins"] = c.analysis.area_bins;
  a["jitter_classes"] = c.analysis.jitter_classes;
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

RunConfig parse_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  RunConfig c;
  object(j, "config", [&](const std::string& k, const ordered_json& v) {
    if (k == "device") {
      object(v, "device", [&](const std::string& dk, const ordered_json& dv) {
        const std::string p = "device." + dk;
        if (dk == "t0_mk") c.device.t0_mk = num(dv, p);
        else if (dk == "r0_ohm") c.device.r0_ohm = num(dv, p);
        else if (dk == "volume_um3") c.device.volume_um3 = num(dv, p);
        else if (dk == "sigma_ep_nw_um3_k5") c.device.sigma_ep_nw_um3_k5 = num(dv, p);
        else if (dk == "gamma_aj_um3_k2") c.device.gamma_aj_um3_k2 = num(dv, p);
        else if (dk == "alpha") c.device.alpha = num(dv, p);
        else if (dk == "beta") c.device.beta = num(dv, p);
        else if (dk == "m_j") c.device.m_j = num(dv, p);
        else if (dk == "inductance_nh") c.device.inductance_nh = num(dv, p);
        else if (dk == "eta") c.device.eta = num(dv, p);
        else if (dk == "photon_energy_ev") c.device.photon_energy_ev = num(dv, p);
        else if (dk == "amp_bandwidth_mhz") c.device.amp_bandwidth_mhz = num(dv, p);
        else if (dk == "i0_ua") c.device.i0_ua = num(dv, p);
        else if (dk == "p0_fw") c.device.p0_fw = num(dv, p);
        else return false;
        return true;
      });
    } else if (k == "ranges") {
      object(v, "ranges", [&](const std::string& rk, const ordered_json& rv) {
        const std::string p = "ranges." + rk;
        if (rk == "alpha") c.ranges.alpha = interval(rv, p);
        else if (rk == "beta") c.ranges.beta = interval(rv, p);
        else if (rk == "m_j") c.ranges.m_j = interval(rv, p);
        else if (rk == "inductance_nh") c.ranges.inductance_nh = interval(rv, p);
        else if (rk == "eta") c.ranges.eta = interval(rv, p);
        else return false;
        return true;
      });
    } else if (k == "shape") {
      object(v, "shape", [&](const std::string& sk, const ordered_json& sv) {
        const std::string p = "shape." + sk;
        if (sk == "tau_el_ns") c.shape.tau_el_ns = num(sv, p);
        else if (sk == "tau_ext_ns") c.shape.tau_ext_ns = num(sv, p);
        else if (sk == "rise_tanh_ns") c.shape.rise_tanh_ns = num(sv, p);
        else if (sk == "sag_ns") c.shape.sag_ns = num(sv, p);
        else if (sk == "classes") {
          if (!sv.is_array() || sv.empty()) bad_field(p, "expected a class array");
          c.shape.classes.clear();
          for (std::size_t i = 0; i < sv.size(); ++i) {
            const std::string cp = p + "[" + std::to_string(i) + "]";
            ConfigShapeClass cl;
            object(sv[i], cp, [&](const std::string& ck, const ordered_json& cv) {
              if (ck == "rise_10_90_ns") cl.rise_10_90_ns = num(cv, cp + ".rise_10_90_ns");
              else if (ck == "decay_1e_ns") cl.decay_1e_ns = num(cv, cp + ".decay_1e_ns");
              else return false;
              return true;
            });
            c.shape.classes.push_back(cl);
          }
        } else if (sk == "n_max") c.shape.n_max = small_int(sv, p);
        else if (sk == "compression") c.shape.compression = num(sv, p);
        else if (sk == "ringing") {
          object(sv, p, [&](const std::string& rk, const ordered_json& rv) {
            if (rk == "fraction") c.shape.ringing_fraction = num(rv, p + ".fraction");
            else if (rk == "frequency_mhz") c.shape.ringing_frequency_mhz = num(rv, p + ".frequency_mhz");
            else if (rk == "damping_ns") c.shape.ringing_damping_ns = num(rv, p + ".damping_ns");
            else return false;
            return true;
          });
        } else return false;
        return true;
      });
    } else if (k == "digitizer") {
      object(v, "digitizer", [&](const std::string& gk, const ordered_json& gv) {
        const std::string p = "digitizer." + gk;
        if (gk == "sample_rate_mhz") c.digitizer.sample_rate_mhz = num(gv, p);
        else if (gk == "bits") c.digitizer.bits = small_int(gv, p);
        else if (gk == "full_scale") c.digitizer.full_scale = num(gv, p);
        else if (gk == "trace_length") c.digitizer.trace_length = static_cast<std::uint32_t>(uint(gv, p));
        else if (gk == "pre_trigger") c.digitizer.pre_trigger = static_cast<std::uint32_t>(uint(gv, p));
        else return false;
        return true;
      });
    } else if (k == "source") {
      object(v, "source", [&](const std::string& ok, const ordered_json& ov) {
        const std::string p = "source." + ok;
        if (ok == "mean_photon_number") c.source.mean_photon_number = num(ov, p);
        else if (ok == "repetition_rate_khz") c.source.repetition_rate_khz = num(ov, p);
        else if (ok == "optical_pulse_duration_ns") c.source.optical_pulse_duration_ns = num(ov, p);
        else if (ok == "arrival_offset_ns") c.source.arrival_offset_ns = num(ov, p);
        else if (ok == "arrival_sigma_ns") c.source.arrival_sigma_ns = num(ov, p);
        else if (ok == "arrival_exp_ns") c.source.arrival_exp_ns = num(ov, p);
        else if (ok == "energy_smearing_ev") c.source.energy_smearing_ev = num(ov, p);
        else return false;
        return true;
      });
    } else if (k == "noise") {
      object(v, "noise", [&](const std::string& nk, const ordered_json& nv) {
        const std::string p = "noise." + nk;
        if (nk == "total_rms") c.noise.total_rms = num(nv, p);
        else if (nk == "white_rms") c.noise.white_rms = num(nv, p);
        else if (nk == "slow_tau_ns") c.noise.slow_tau_ns = num(nv, p);
        else return false;
        return true;
      });
    } else if (k == "analysis") {
      object(v, "analysis", [&](const std::string& ak, const ordered_json& av) {
        const std::string p = "analysis." + ak;
        if (ak == "thresholds") {
          if (!av.is_array() || av.empty()) bad_field(p, "expected a number array");
          c.analysis.thresholds.clear();
          for (std::size_t i = 0; i < av.size(); ++i)
            c.analysis.thresholds.push_back(num(av[i], p + "[" + std::to_string(i) + "]"));
        } else if (ak == "area_bins") {
          c.analysis.area_bins = static_cast<std::uint32_t>(uint(av, p));
        } else if (ak == "jitter_classes") {
          if (!av.is_array()) bad_field(p, "expected an integer array");
          c.analysis.jitter_classes.clear();
          for (std::size_t i = 0; i < av.size(); ++i)
            c.analysis.jitter_classes.push_back(
                small_int(av[i], p + "[" + std::to_string(i) + "]"));
        } else return false;
        return true;
      });
    } else if (k == "seed") {
      c.seed = uint(v, "seed");
    } else return false;
    return true;
  });
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void save_config(const std::string& path, const RunConfig& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << config_to_json(c);
  if (!out) throw std::runtime_error("config: write failed: " + path);
}

void validate(const RunConfig& c) {
  auto positive = [](double v, const char* path) {
    if (!(v > 0) || !std::isfinite(v))
      bad_field(path, "must be positive");
  };
  auto nonneg = [](double v, const char* path) {
    if (!(v >= 0) || !std::isfinite(v))
      bad_field(path, "must be nonnegative");
  };
  positive(c.device.t0_mk, "device.t0_mk");
  positive(c.device.r0_ohm, "device.r0_ohm");
  positive(c.device.volume_um3, "device.volume_um3");
  positive(c.device.sigma_ep_nw_um3_k5, "device.sigma_ep_nw_um3_k5");
  positive(c.device.gamma_aj_um3_k2, "device.gamma_aj_um3_k2");
  positive(c.device.alpha, "device.alpha");
  nonneg(c.device.beta, "device.beta");
  nonneg(c.device.m_j, "device.m_j");
  positive(c.device.inductance_nh, "device.inductance_nh");
  positive(c.device.eta, "device.eta");
  if (c.device.eta > 1.0) bad_field("device.eta", "must not exceed 1");
  positive(c.device.photon_energy_ev, "device.photon_energy_ev");
  positive(c.device.amp_bandwidth_mhz, "device.amp_bandwidth_mhz");
  if (c.device.i0_ua) positive(*c.device.i0_ua, "device.i0_ua");
  if (c.device.p0_fw) positive(*c.device.p0_fw, "device.p0_fw");

  auto ordered = [](const Interval& i, const char* path) {
    if (!(i.lo <= i.hi)) bad_field(path, "lo must not exceed hi");
  };
  ordered(c.ranges.alpha, "ranges.alpha");
  ordered(c.ranges.beta, "ranges.beta");
  ordered(c.ranges.m_j, "ranges.m_j");
  ordered(c.ranges.inductance_nh, "ranges.inductance_nh");
  ordered(c.ranges.eta, "ranges.eta");
  positive(c.ranges.inductance_nh.lo, "ranges.inductance_nh[0]");
  positive(c.ranges.alpha.lo, "ranges.alpha[0]");
  positive(c.ranges.eta.lo, "ranges.eta[0]");
  if (c.ranges.eta.hi > 1.0) bad_field("ranges.eta[1]", "must not exceed 1");

  positive(c.digitizer.sample_rate_mhz, "digitizer.sample_rate_mhz");
  if (c.digitizer.bits < 2 || c.digitizer.bits > 15)
    bad_field("digitizer.bits", "must be in [2, 15]");
  positive(c.digitizer.full_scale, "digitizer.full_scale");
  if (c.digitizer.trace_length == 0)
    bad_field("digitizer.trace_length", "must be positive");
  if (c.digitizer.pre_trigger >= c.digitizer.trace_length)
    bad_field("digitizer.pre_trigger", "must be below trace_length");

  nonneg(c.source.mean_photon_number, "source.mean_photon_number");
  positive(c.source.repetition_rate_khz, "source.repetition_rate_khz");
  nonneg(c.source.optical_pulse_duration_ns, "source.optical_pulse_duration_ns");
  nonneg(c.source.arrival_offset_ns, "source.arrival_offset_ns");
  nonneg(c.source.arrival_sigma_ns, "source.arrival_sigma_ns");
  nonneg(c.source.arrival_exp_ns, "source.arrival_exp_ns");
  nonneg(c.source.energy_smearing_ev, "source.energy_smearing_ev");

  positive(c.noise.total_rms, "noise.total_rms");
  positive(c.noise.white_rms, "noise.white_rms");
  if (c.noise.white_rms > c.noise.total_rms)
    bad_field("noise.white_rms", "must not exceed total_rms");
  positive(c.noise.slow_tau_ns, "noise.slow_tau_ns");

  if (c.analysis.thresholds.empty())
    bad_field("analysis.thresholds", "must not be empty");
  for (std::size_t i = 0; i < c.analysis.thresholds.size(); ++i)
    if (!(c.analysis.thresholds[i] > 0 && c.analysis.thresholds[i] < 1))
      bad_field("analysis.thresholds[" + std::to_string(i) + "]",
                "must lie in (0, 1)");
  if (c.analysis.area_bins < 16)
    bad_field("analysis.area_bins", "must be at least 16");
  for (std::size_t i = 0; i < c.analysis.jitter_classes.size(); ++i)
    if (c.analysis.jitter_classes[i] < 1)
      bad_field("analysis.jitter_classes[" + std::to_string(i) + "]",
                "must be a positive photon number");

  // library validators as a backstop for anything the unit layer cannot see
  auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string("config: ") + section + ": " + e.what());
    }
  };
  wrap("device", [&] { tes::validate(c.device_params()); });
  wrap("ranges", [&] { tes::validate(c.param_range()); });
  wrap("shape", [&] { c.shape_params().validate(); });
  wrap("digitizer", [&] { c.digitizer_params().validate(); });
  wrap("source", [&] { c.source_params().validate(); });
  wrap("noise", [&] { c.noise_params().validate(); });
}

std::uint64_t config_hash(const RunConfig& c) {
  const std::string dump = config_to_json(c);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace tes
