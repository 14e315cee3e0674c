#include "tes/device_model.hpp"
#include "tes/constants.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tes {

DeviceParams reference_device() { return DeviceParams{}; }

static void require(bool ok, const char* field, const char* what) {
  if (!ok) throw std::invalid_argument(std::string(field) + " " + what);
}

void validate(const DeviceParams& p) {
  require(p.t0 > 0, "t0", "must be > 0");
  require(p.r0 > 0, "r0", "must be > 0");
  require(p.volume > 0, "volume", "must be > 0");
  require(p.sigma_ep > 0, "sigma_ep", "must be > 0");
  require(p.gamma > 0, "gamma", "must be > 0");
  require(p.alpha >= 1, "alpha", "must be >= 1");
  require(p.beta >= 0, "beta", "must be >= 0");
  require(p.m_j >= 0, "m_j", "must be >= 0");
  require(p.inductance > 0, "inductance", "must be > 0");
  require(p.eta > 0 && p.eta <= 1, "eta", "must be in (0, 1]");
  require(p.photon_energy > 0, "photon_energy", "must be > 0");
  require(p.amp_bandwidth > 0, "amp_bandwidth", "must be > 0");
  if (p.i0) require(*p.i0 > 0, "i0", "must be > 0");
  if (p.p0_override) require(*p.p0_override > 0, "p0_override", "must be > 0");
}

static void validate_interval(const Interval& iv, const char* field) {
  require(iv.lo <= iv.hi, field, "interval must have lo <= hi");
  require(iv.lo > 0 || (iv.lo >= 0 && iv.hi >= 0), field, "interval must be nonnegative");
}

void validate(const ParamRange& r) {
  validate_interval(r.alpha, "alpha");
  validate_interval(r.beta, "beta");
  validate_interval(r.m_j, "m_j");
  validate_interval(r.inductance, "inductance");
  validate_interval(r.eta, "eta");
  require(r.inductance.lo > 0, "inductance", "must be > 0");
  require(r.eta.hi <= 1, "eta", "must be <= 1");
}

double equilibrium_power(const DeviceParams& p) {
  validate(p);
  if (p.p0_override)
    throw std::invalid_argument("p0_override present; equilibrium closure not applicable");
  double t2 = p.t0 * p.t0;
  return p.sigma_ep * p.volume * t2 * t2 * p.t0;
}

static double power_of(const DeviceParams& p) {
  if (p.p0_override) return *p.p0_override;
  double t2 = p.t0 * p.t0;
  return p.sigma_ep * p.volume * t2 * t2 * p.t0;
}

double delta_current(const DeviceParams& p) {
  validate(p);
  double heat_capacity = p.gamma * p.volume * p.t0;
  return std::sqrt(power_of(p) / p.r0) * p.alpha * p.eta * p.photon_energy /
         (heat_capacity * p.t0 * (1.0 + p.beta));
}

double rms_noise(const DeviceParams& p) {
  validate(p);
  return std::sqrt(std::sqrt(2.0) * k_boltzmann * p.t0 * (1.0 + 2.0 * p.beta) *
                   (1.0 + p.m_j * p.m_j) / (p.inductance * (1.0 + p.beta)));
}

double electrical_rise_time(const DeviceParams& p) {
  validate(p);
  return p.inductance / (p.r0 * (1.0 + p.beta));
}

double external_rise_time(const DeviceParams& p) {
  require(p.amp_bandwidth > 0, "amp_bandwidth", "must be > 0");
  return 0.35 / p.amp_bandwidth;
}

double combined_rise_time(const DeviceParams& p) {
  return std::hypot(electrical_rise_time(p), external_rise_time(p));
}

double predicted_jitter_fwhm(const DeviceParams& p) {
  validate(p);
  double tau_ext = 0.35 / p.amp_bandwidth;
  double ob = 1.0 + p.beta;
  double pre = std::sqrt(8.0 * std::log(2.0) * std::sqrt(2.0) * ob *
                         (1.0 + 2.0 * p.beta) * (1.0 + p.m_j * p.m_j));
  double mid = p.gamma / (p.alpha * p.eta * p.photon_energy);
  double s1 = std::sqrt(p.r0 * p.volume * k_boltzmann / (p.inductance * p.sigma_ep));
  double s2 = std::sqrt(tau_ext * tau_ext +
                        p.inductance * p.inductance / (p.r0 * p.r0 * ob * ob));
  return pre * mid * s1 * s2;
}

JitterEnvelope jitter_envelope(const DeviceParams& base, const ParamRange& ranges,
                               const std::vector<double>& l_grid) {
  validate(ranges);
  if (l_grid.empty()) throw std::invalid_argument("l_grid must be nonempty");
  for (size_t i = 1; i < l_grid.size(); ++i)
    if (l_grid[i] <= l_grid[i - 1])
      throw std::invalid_argument("l_grid must be strictly increasing");

  JitterEnvelope env;
  env.inductance = l_grid;
  env.lower.reserve(l_grid.size());
  env.upper.reserve(l_grid.size());

  const double al[2] = {ranges.alpha.lo, ranges.alpha.hi};
  const double be[2] = {ranges.beta.lo, ranges.beta.hi};
  const double mj[2] = {ranges.m_j.lo, ranges.m_j.hi};
  const double et[2] = {ranges.eta.lo, ranges.eta.hi};

  double best_lo = 0, best_hi = 0;
  bool first = true;
  for (double l : l_grid) {
    double lo = 0, hi = 0;
    bool start = true;
    DeviceParams p = base;
    p.inductance = l;
    for (double a : al)
      for (double b : be)
        for (double m : mj)
          for (double e : et) {
            p.alpha = a;
            p.beta = b;
            p.m_j = m;
            p.eta = e;
            double j = predicted_jitter_fwhm(p);
            if (start || j < lo) lo = j;
            if (start || j > hi) hi = j;
            start = false;
          }
    env.lower.push_back(lo);
    env.upper.push_back(hi);
    if (first || lo < best_lo) { best_lo = lo; env.argmin_l_lower = l; }
    if (first || hi < best_hi) { best_hi = hi; env.argmin_l_upper = l; }
    first = false;
  }
  return env;
}

OptimalInductance optimal_inductance(const DeviceParams& p, double lo, double hi) {
  validate(p);
  if (!(lo > 0) || !(lo < hi))
    throw std::invalid_argument("inductance bracket must be positive with lo < hi");

  auto f = [&p](double l) {
    DeviceParams q = p;
    q.inductance = l;
    return predicted_jitter_fwhm(q);
  };

  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while ((b - a) > 1e-6 * 0.5 * (std::abs(a) + std::abs(b))) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - g * (b - a); fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + g * (b - a); fd = f(d);
    }
  }
  double x = 0.5 * (a + b);

  // interior minimum check: with tau_ext > 0 the minimizer is
  // L* = tau_ext*R0*(1+beta); a bracket that excludes it pins the argmin
  // to the nearer endpoint.
  double lstar = external_rise_time(p) * p.r0 * (1.0 + p.beta);
  if (lstar <= lo) return {lo, true};
  if (lstar >= hi) return {hi, true};
  return {x, false};
}

ThresholdJitter threshold_jitter_estimate(double sigma, double slope) {
  if (!(slope > 0)) throw std::invalid_argument("slope must be > 0");
  double sd = sigma / slope;
  return {sd, 2.0 * std::sqrt(2.0 * std::log(2.0)) * sd};
}

} // namespace tes
