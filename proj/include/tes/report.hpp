#ifndef TES_REPORT_HPP
#define TES_REPORT_HPP

// Result assembly for the command-line tool: prediction summaries, the sweep
// table, the full analysis pass over a trace batch, and their JSON/CSV
// serializations. Everything here is deterministic for fixed inputs; the
// only run-dependent report field is the timestamp the caller passes in.

#include <cstdint>
#include <string>
#include <vector>

#include "tes/analysis.hpp"
#include "tes/config.hpp"

namespace tes {

inline constexpr const char* kToolName = "tespulse";
inline constexpr const char* kToolVersion = "0.1.0";

struct CornerPoint {
  double jitter_fwhm = 0; // s
  double alpha = 0, beta = 0, m_j = 0, eta = 0;
  double inductance = 0;  // H
};

struct Prediction {
  double delta_current = 0;  // A
  double rms_noise = 0;      // A
  double tau_el = 0;         // s
  double tau_ext = 0;        // s
  double tau_rise = 0;       // s
  double jitter_fwhm = 0;    // s, at the configured operating point
  double optimal_inductance = 0; // H
  bool optimal_at_endpoint = false;
  CornerPoint best;          // extremes of the corner sweep over the ranges
  CornerPoint worst;
};

// Point prediction plus the corner sweep (range corners x inductance grid
// spanning at least [10, 50] nH).
Prediction predict(const RunConfig& cfg);

std::string predict_text(const Prediction& p);
std::string predict_json(const Prediction& p, const RunConfig& cfg,
                         const std::string& timestamp);

struct SweepTable {
  std::vector<double> inductance_nh;
  std::vector<double> lower_ns;
  std::vector<double> upper_ns;
};

SweepTable sweep_envelope(const RunConfig& cfg, double lo_nh, double hi_nh,
                          std::size_t n_points);

// measured overlay from an analysis report: per-threshold 1-photon FWHM at
// the report's operating inductance
struct SweepOverlayPoint {
  double inductance_nh = 0;
  double fraction = 0;
  double fwhm_ns = 0;
};

// two-column-per-bound CSV (inductance_nh, lower_ns, upper_ns); overlay
// points, when present, fill extra columns padded with empty cells
std::string sweep_csv(const SweepTable& table,
                      const std::vector<SweepOverlayPoint>& overlay);

// pulls the overlay points out of a serialized analysis report
std::vector<SweepOverlayPoint> overlay_from_report(const std::string& report_json);

struct ClassSummary {
  int photon_class = 0;
  std::size_t count = 0;
  RiseFallMetrics mean_pulse{};
  bool has_mean = false;
};

struct TruthArrivalRow {
  int photon_class = 0;
  std::size_t n = 0;
  double mean_offset = 0; // s, mean of (measured crossing - true arrival)
  double std_offset = 0;  // s
};

struct AnalysisResult {
  AreaHistogram hist;
  PhotonClassAssignment assignment;
  bool calibrated = false;
  EnergyCalibration calibration{};
  std::vector<ClassSummary> classes;       // one per observed label
  std::vector<Signal> class_means;         // indexed by label; empty if none
  std::vector<JitterCurve> curves;         // configured classes that exist
  double baseline_rms = 0;
  double representative_fraction = 0;      // middle configured threshold
  // ground-truth closure (batch.has_truth only)
  bool has_truth = false;
  std::size_t truth_n_le3 = 0;
  std::size_t truth_n_le3_correct = 0;
  std::vector<TruthArrivalRow> truth_arrival;
  // partial: classification or some configured jitter class unavailable
  bool partial = false;
  std::vector<std::string> partial_reasons;
};

// the full measurement pass: filter, histogram, classify, calibrate, mean
// pulses, threshold crossings, EMG fits. Throws on an empty batch; degraded
// inputs come back with `partial` set instead.
AnalysisResult analyze_batch(const TraceBatch& batch, const RunConfig& cfg);

std::string analysis_report_json(const AnalysisResult& r, const RunConfig& cfg,
                                 const TraceBatch& batch,
                                 const std::string& input_path,
                                 const std::string& timestamp);

// plot-data emissions
std::string area_hist_csv(const AreaHistogram& h);
std::string mean_pulses_csv(const AnalysisResult& r);
// crossing-time histogram and fitted model at the representative fraction
std::string crossings_csv(const AnalysisResult& r, const TraceBatch& batch);
std::string jitter_csv(const AnalysisResult& r);

} // namespace tes

#endif // TES_REPORT_HPP
