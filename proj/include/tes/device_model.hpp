#ifndef TES_DEVICE_MODEL_HPP
#define TES_DEVICE_MODEL_HPP

// Closed-form analytic model of TES signal amplitude, noise, rise time and
// predicted timing jitter, with sweeps over the parameter uncertainty ranges.

#include <optional>
#include <vector>

namespace tes {

struct DeviceParams {
  double t0 = 0.150;          // operating/transition temperature, K
  double r0 = 1.0;            // operating-point resistance, ohm
  double volume = 12.5;       // device volume, um^3
  double sigma_ep = 0.4e-9;   // electron-phonon coupling, W um^-3 K^-5
  double gamma = 340.2e-18;   // heat-capacity coefficient, J um^-3 K^-2 (C = gamma*V*T0)
  double alpha = 475.0;       // transition steepness (T0/R0)*dR/dT
  double beta = 1.5;          // current sensitivity (I0/R0)*dR/dI
  double m_j = 2.5;           // excess Johnson-noise parameter
  double inductance = 24e-9;  // input inductance, H
  double eta = 0.65;          // energy-collection fraction
  double photon_energy = 1.2817413072e-19; // hv, J (0.8 eV, 1550 nm)
  double amp_bandwidth = 20e6;             // amplifier bandwidth, Hz
  std::optional<double> i0;          // operating-point current, A (informational)
  std::optional<double> p0_override; // equilibrium power, W; derived when absent
};

// Reference device values; ranged parameters sit at interval midpoints
// except the inductance, which is the as-built 24 nH operating point.
DeviceParams reference_device();

// Throws std::invalid_argument naming the offending field.
void validate(const DeviceParams& p);

struct Interval {
  double lo, hi; // closed; degenerate (lo == hi) allowed
};

struct ParamRange {
  Interval alpha{150.0, 800.0};
  Interval beta{0.8, 2.2};
  Interval m_j{1.5, 3.5};
  Interval inductance{19e-9, 29e-9}; // H
  Interval eta{0.4, 0.9};
};

void validate(const ParamRange& r);

struct JitterEnvelope {
  std::vector<double> inductance;  // grid, H, strictly increasing
  std::vector<double> lower;       // pointwise min jitter FWHM, s
  std::vector<double> upper;       // pointwise max jitter FWHM, s
  double argmin_l_lower = 0;       // grid L minimizing the lower bound, H
  double argmin_l_upper = 0;       // grid L minimizing the upper bound, H
};

// Equilibrium power closure P0 = Sigma*V*T0^5 (low bath temperature limit).
// Precondition: p0_override absent (the override replaces this closure).
double equilibrium_power(const DeviceParams& p);

// Signal amplitude dI = sqrt(P0/R0)*alpha*eta*hv / (C*T0*(1+beta)), C = gamma*V*T0.
double delta_current(const DeviceParams& p);

// I_RMS = sqrt( sqrt(2)*kB*T0*(1+2 beta)*(1+M_J^2) / (L*(1+beta)) ).
double rms_noise(const DeviceParams& p);

// tau_el = L / (R0*(1+beta))
double electrical_rise_time(const DeviceParams& p);

// tau_ext = 0.35 / bandwidth
double external_rise_time(const DeviceParams& p);

// tau_rise = sqrt(tau_el^2 + tau_ext^2)
double combined_rise_time(const DeviceParams& p);

// Predicted threshold-timing jitter FWHM (seconds), closed form.
// Algebraically identical to 2*sqrt(2 ln 2)*rms_noise*combined_rise_time/delta_current
// under the P0 and C closures above.
double predicted_jitter_fwhm(const DeviceParams& p);

// Pointwise extrema of predicted_jitter_fwhm over the corner set of the ranged
// parameters (alpha, beta, m_j, eta), evaluated on l_grid. The model is monotone
// in alpha, eta, m_j and piecewise-monotone in beta, so interval endpoints are
// sufficient; `base` supplies every non-ranged field.
JitterEnvelope jitter_envelope(const DeviceParams& base, const ParamRange& ranges,
                               const std::vector<double>& l_grid);

struct OptimalInductance {
  double inductance;    // H
  bool at_endpoint;     // bracket excluded the interior minimum
};

// Golden-section argmin of predicted_jitter_fwhm over L in [lo, hi], relative
// tolerance 1e-6. The analytic minimizer is L* = tau_ext*R0*(1+beta); when the
// bracket excludes it, returns the nearer endpoint with at_endpoint set.
OptimalInductance optimal_inductance(const DeviceParams& p, double lo, double hi);

struct ThresholdJitter {
  double std_dev; // sigma/slope, s
  double fwhm;    // 2*sqrt(2 ln 2) * std_dev, s
};

// Linear-rise local estimate: timing spread of a level crossing on a ramp of
// the given slope under additive noise of the given RMS.
ThresholdJitter threshold_jitter_estimate(double sigma, double slope);

} // namespace tes

#endif
