#ifndef TES_ANALYSIS_HPP
#define TES_ANALYSIS_HPP

// Measurement pipeline: noise-whitened matched filtering, pulse-area
// histogramming, photon-number classification, energy-scale linearization,
// per-class mean pulses, and fractional-threshold crossing-time extraction.

#include "tes/pulse_sim.hpp"
#include "tes/timing_fit.hpp"

#include <cstddef>
#include <vector>

namespace tes {

// real-valued view of one trace: codes scaled to signal units with the
// per-trace pre-trigger baseline removed
struct Signal {
  std::vector<double> values;
  double dt = 0.0;
};

Signal to_signal(const Trace& tr, const DigitizerParams& digi);

// linear-interpolation percentile of an unsorted sample, q in [0, 100]
double percentile(std::vector<double> v, double q);

// Monotone piecewise cubic (Fritsch-Carlson derivative weighting, one-sided
// three-point ends). Evaluation outside the knots continues the end cubics.
class Pchip {
 public:
  Pchip() = default;
  Pchip(std::vector<double> xs, std::vector<double> ys);
  double operator()(double x) const;
  double derivative(double x) const;
  bool empty() const { return xs_.empty(); }

 private:
  std::size_t interval(double x) const;
  std::vector<double> xs_, ys_, d_;
};

// fixed-lag matched-filter score: <trace, template>/<template, template>.
// The template is expected baseline-subtracted; score is 1 when trace equals
// the template.
double matched_filter(const Signal& trace, const Signal& tmpl);

// Innovations whitener for the slow-AR(1)-plus-white noise model. With
// a = exp(-dt/tau_slow) the differenced sequence d_i = x_i - a x_{i-1} is
// MA(1); the invertible root theta turns it into white innovations
// e_i = d_i - theta e_{i-1}. Zero noise degrades to the identity.
class Whitener {
 public:
  Whitener() = default;
  Whitener(const NoiseParams& noise, double dt);
  std::vector<double> operator()(const std::vector<double>& x) const;
  double ar_coefficient() const { return a_; }
  double ma_root() const { return theta_; }

 private:
  double a_ = 0.0, theta_ = 0.0;
};

// whitened projection scores for a whole batch: the template is the mean of
// the above-noise traces in a leading subsample, baseline-subtracted,
// whitened, and unit-normalized
std::vector<double> matched_filter_scores(const TraceBatch& batch,
                                          const NoiseParams& noise);

struct AreaHistogram {
  std::vector<double> edges;        // n_bins + 1
  std::vector<std::size_t> counts;  // n_bins
  std::vector<double> smoothed;     // moving-average counts used by the finder
  std::vector<int> peak_bins;       // accepted peaks, ascending
  std::vector<double> peak_centers; // refined centers, strictly increasing
  std::vector<double> peak_heights; // smoothed heights
  std::vector<double> peak_sigmas;  // Gaussian-core widths; NaN if degenerate
  std::vector<double> valleys;      // boundary positions between peaks
  std::vector<int> valley_bins;
  bool classification_available = false;
};

// histogram over [min, max] of the scores plus prominence-guarded peak
// detection: local maxima of the smoothed counts, accepted tallest-first iff
// separated from every accepted peak by a valley deeper than five Poisson
// sigmas of the candidate height
AreaHistogram build_area_histogram(const std::vector<double>& scores,
                                   std::size_t n_bins = 512);

struct PhotonClassAssignment {
  std::vector<int> labels;        // one per score/trace
  std::vector<double> boundaries; // valleys, strictly increasing
  bool overlap_warning = false;   // some valley above 20% of adjacent peaks
};

PhotonClassAssignment classify(const std::vector<double>& scores,
                               const AreaHistogram& hist);

struct EnergyCalibration {
  std::vector<double> knot_scores;   // peak centers
  std::vector<double> knot_energies; // n * photon energy, eV
  std::vector<double> residuals;     // map(knot) - energy, eV
  Pchip map;                         // score -> eV
  double fwhm_1photon_ev = 0.0;      // NaN when the peak core is degenerate
  double to_ev(double score) const { return map(score); }
};

// monotone score-to-energy map pinned at the detected peak centers
// (n = 0, 1, 2, ... photons); the one-photon peak width is propagated
// through the local slope of the map
EnergyCalibration energy_calibration(const AreaHistogram& hist,
                                     double photon_energy_ev);

// pointwise mean of the baseline-subtracted members of one class
Signal class_mean_pulse(const TraceBatch& batch,
                        const PhotonClassAssignment& assignment, int n);

struct RiseFallMetrics {
  double rise_10_90 = 0; // s
  double decay_1e = 0;   // s, measured from the peak sample
  double peak = 0;       // signal units
  double peak_time = 0;  // s
};

// 10-90% rise and 1/e decay by linear interpolation between samples
RiseFallMetrics rise_fall_metrics(const Signal& s);

// pooled RMS of the raw pre-trigger samples about the batch-global baseline
// mean: estimates the per-sample noise total that sets the discriminator's
// contrast ratio
double baseline_rms(const TraceBatch& batch);

// First accepted upward crossing of the level inside the search gate
// (pre-trigger minus 12 ns up to pre-trigger plus 300 ns), sub-sample linear
// interpolation. A candidate must be armed (the trace dipped below
// level - sigma_b within the trailing 20 samples) and must persist at or
// above the level for a contrast-dependent hold length. Returns NaN when
// nothing qualifies.
double crossing_time(const Signal& s, double level, double sigma_b,
                     std::size_t pre_trigger);

struct CrossingRecord {
  std::size_t trace_id = 0;
  int photon_class = 0;
  double fraction = 0;  // of the class mean-pulse maximum
  double time = 0;      // s; NaN when missed
  bool missed = false;
};

// one record per trace of a nonzero class; class-0 traces carry no pulse and
// are excluded by definition
std::vector<CrossingRecord> threshold_crossings(
    const TraceBatch& batch, const PhotonClassAssignment& assignment,
    const std::vector<Signal>& class_means, double fraction);

// Percentile-trimmed ([1.5, 99.5]) crossing-time histogram on sample-grid
// anchored bins an integer number of sample periods wide (so every bin
// integrates whole interpolation-phase periods). The jitter fits bin with
// this; exposed for plot emission. Empty histogram when the trimmed span
// collapses below dt/100 or no finite times are given; `trimmed`/`kept`
// (when non-null) receive the outside-range and in-range counts.
Histogram crossing_histogram(const std::vector<double>& times, double dt,
                             std::size_t* trimmed = nullptr,
                             std::size_t* kept = nullptr);

struct JitterPoint {
  double fraction = 0;
  double fwhm = 0;     // s
  double fwhm_err = 0; // s, from the fit covariance
  double reduced_chi2 = 0;
  EmgParams fit{};
  std::size_t n_events = 0; // crossings inside the fitted range
  std::size_t misses = 0;
  std::size_t trimmed = 0;  // outside the percentile-trimmed range
  bool low_stats = false;   // fewer than 100 crossings
  bool fit_valid = false;
};

struct JitterCurve {
  int photon_class = 0;
  std::vector<JitterPoint> points;
};

// per class and threshold fraction, fit the crossing-time histogram with the
// exponentially-modified Gaussian and report its FWHM. Histogram bins are
// integer multiples of the sample period anchored to the sample grid; the
// sample is trimmed to its [1.5, 99.5] percentile range before binning. A
// trimmed span at or below dt/100 short-circuits to FWHM = span.
std::vector<JitterCurve> jitter_vs_threshold(
    const TraceBatch& batch, const PhotonClassAssignment& assignment,
    const std::vector<Signal>& class_means, const std::vector<int>& classes,
    const std::vector<double>& fractions);

} // namespace tes

#endif
