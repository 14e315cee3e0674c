#include "tes/pulse_shape.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tes {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("pulse shape: ") + what);
}

struct Family {
  double tau_r;
  double tau_q;
};

double shape_value(const Family& f, double d, double tau_f, double t) {
  if (t <= 0.0) return 0.0;
  double env = d * std::exp(-t / f.tau_q) + (1.0 - d) * std::exp(-t / tau_f);
  return std::tanh(t / f.tau_r) * env;
}

// unique interior maximum of the rise*sag product
void find_peak(const Family& f, double d, double tau_f, double& t_peak,
               double& peak) {
  double a = 0.0, b = 1e-6;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), e = a + g * (b - a);
  double fc = shape_value(f, d, tau_f, c), fe = shape_value(f, d, tau_f, e);
  while (b - a > 1e-15) {
    if (fc > fe) {
      b = e; e = c; fe = fc;
      c = b - g * (b - a); fc = shape_value(f, d, tau_f, c);
    } else {
      a = c; c = e; fc = fe;
      e = a + g * (b - a); fe = shape_value(f, d, tau_f, e);
    }
  }
  t_peak = 0.5 * (a + b);
  peak = shape_value(f, d, tau_f, t_peak);
}

// time where the rising edge first reaches `level` (monotone up to the peak)
double rising_crossing(const Family& f, double d, double tau_f, double t_peak,
                       double level) {
  double lo = 0.0, hi = t_peak;
  for (int i = 0; i < 200 && hi - lo > 1e-18 + 1e-13 * hi; ++i) {
    double m = 0.5 * (lo + hi);
    (shape_value(f, d, tau_f, m) < level ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

double rise_10_90(const Family& f, double d, double tau_f) {
  double t_peak, peak;
  find_peak(f, d, tau_f, t_peak, peak);
  return rising_crossing(f, d, tau_f, t_peak, 0.9 * peak) -
         rising_crossing(f, d, tau_f, t_peak, 0.1 * peak);
}

double decay_1e(const Family& f, double d, double tau_f, double t_peak,
                double peak) {
  double level = peak / std::numbers::e;
  double lo = t_peak, hi = t_peak + 10.0 * std::max(tau_f, f.tau_q);
  if (shape_value(f, d, tau_f, hi) >= level)
    throw std::invalid_argument("pulse shape: decay target out of range");
  for (int i = 0; i < 200 && hi - lo > 1e-18 + 1e-13 * hi; ++i) {
    double m = 0.5 * (lo + hi);
    (shape_value(f, d, tau_f, m) >= level ? lo : hi) = m;
  }
  return 0.5 * (lo + hi) - t_peak;
}

// inner solve: tau_f hitting the decay target at fixed mix (monotone in
// tau_f). NaN when the target is unreachable at this mix, so the outer
// search can steer instead of aborting.
double solve_tau_f(const Family& f, double d, double target) {
  double lo = 1.2 * f.tau_q, hi = 1e-4;
  auto decay_at = [&](double tf) {
    double t_peak, peak;
    find_peak(f, d, tf, t_peak, peak);
    return decay_1e(f, d, tf, t_peak, peak);
  };
  if (decay_at(lo) > target || decay_at(hi) < target)
    return std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < 90; ++i) {
    double m = 0.5 * (lo + hi);
    (decay_at(m) < target ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

} // namespace

void PulseShapeParams::validate() const {
  require(tau_el > 0, "tau_el must be > 0");
  require(tau_ext > 0, "tau_ext must be > 0");
  require(rise_tanh > 0, "rise_tanh must be > 0");
  require(sag > 0, "sag must be > 0");
  require(!classes.empty(), "classes must not be empty");
  require(n_max >= static_cast<int>(classes.size()),
          "n_max must cover the class table");
  double prev_decay = 0.0;
  for (const auto& c : classes) {
    require(c.rise_10_90 > 0, "class rise_10_90 must be > 0");
    require(c.decay_1e > prev_decay, "class decay_1e must be strictly increasing");
    require(c.decay_1e > sag, "class decay_1e must exceed the sag constant");
    prev_decay = c.decay_1e;
  }
  require(compression >= 0, "compression must be >= 0");
  require(ringing.fraction >= 0, "ringing fraction must be >= 0");
  if (ringing.fraction > 0) {
    require(ringing.frequency > 0, "ringing frequency must be > 0");
    require(ringing.damping > 0, "ringing damping must be > 0");
  }
}

PulseShapeParams reference_shape() { return PulseShapeParams{}; }

double compress_amplitude(double linear_amplitude, double compression) {
  if (linear_amplitude < 0)
    throw std::invalid_argument("pulse shape: amplitude must be >= 0");
  if (compression <= 0.0) return linear_amplitude;
  double s = 1.0 / compression;
  double x = linear_amplitude / s;
  if (x >= std::numbers::pi / 2.0) return s; // saturated
  return s * std::sin(x);
}

ShapeModel::ShapeModel(const PulseShapeParams& p) : p_(p) {
  p_.validate();
  Family f{p_.rise_tanh, p_.sag};
  coef_.reserve(p_.classes.size());
  for (const auto& target : p_.classes) {
    // outer bisection on the mix: more fast-sag weight shortens the rise.
    // A mix whose decay target is unreachable (too much fast weight) reads
    // as "rise too short", steering the search back down.
    double lo = 0.01, hi = 0.995;
    auto rise_at = [&](double d) {
      double tf = solve_tau_f(f, d, target.decay_1e);
      if (std::isnan(tf)) return -1.0;
      return rise_10_90(f, d, tf);
    };
    for (int i = 0; i < 60; ++i) {
      double m = 0.5 * (lo + hi);
      (rise_at(m) > target.rise_10_90 ? lo : hi) = m;
    }
    ClassCoef c;
    c.d = 0.5 * (lo + hi);
    c.tau_f = solve_tau_f(f, c.d, target.decay_1e);
    if (std::isnan(c.tau_f))
      throw std::invalid_argument("pulse shape: decay target out of range");
    find_peak(f, c.d, c.tau_f, c.t_peak, c.peak);
    double got_rise = rising_crossing(f, c.d, c.tau_f, c.t_peak, 0.9 * c.peak) -
                      rising_crossing(f, c.d, c.tau_f, c.t_peak, 0.1 * c.peak);
    double got_decay = decay_1e(f, c.d, c.tau_f, c.t_peak, c.peak);
    if (std::abs(got_rise - target.rise_10_90) > 5e-3 * target.rise_10_90 ||
        std::abs(got_decay - target.decay_1e) > 5e-3 * target.decay_1e)
      throw std::invalid_argument("pulse shape: rise target out of range");
    coef_.push_back(c);
  }
}

const ShapeModel::ClassCoef& ShapeModel::row(int n) const {
  if (n < 1 || n > p_.n_max)
    throw std::invalid_argument("pulse shape: photon number out of range");
  int i = std::min(n, n_classes()) - 1;
  return coef_[static_cast<std::size_t>(i)];
}

double ShapeModel::unit_value(int n, double t) const {
  const ClassCoef& c = row(n);
  return shape_value({p_.rise_tanh, p_.sag}, c.d, c.tau_f, t);
}

double ShapeModel::amplitude(double linear_amplitude) const {
  return compress_amplitude(linear_amplitude, p_.compression);
}

double ShapeModel::waveform(int n, double t) const {
  const ClassCoef& c = row(n);
  double v = shape_value({p_.rise_tanh, p_.sag}, c.d, c.tau_f, t);
  if (p_.ringing.fraction > 0 && t > 0) {
    v += p_.ringing.fraction * c.peak * std::exp(-t / p_.ringing.damping) *
         std::sin(2.0 * std::numbers::pi * p_.ringing.frequency * t);
  }
  return v;
}

double ShapeModel::pulse(int n, double t) const {
  return amplitude(static_cast<double>(n)) * waveform(n, t);
}

double ShapeModel::mix(int n) const { return row(n).d; }
double ShapeModel::tau_fall(int n) const { return row(n).tau_f; }
double ShapeModel::peak(int n) const { return row(n).peak; }
double ShapeModel::peak_time(int n) const { return row(n).t_peak; }

double ideal_pulse(int n, const ShapeModel& shape, double t) {
  return shape.pulse(n, t);
}

} // namespace tes
