#include "tes/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace tes {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kPi = 3.141592653589793238462643383279502884;

std::string fmt(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.9g", v);
  return b;
}

std::string fmt3(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.3f", v);
  return b;
}

std::string hash_hex(std::uint64_t h) {
  char b[24];
  std::snprintf(b, sizeof b, "0x%016llx", static_cast<unsigned long long>(h));
  return b;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

ordered_json corner_json(const CornerPoint& c) {
  ordered_json j;
  j["jitter_fwhm_ns"] = c.jitter_fwhm * 1e9;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["m_j"] = c.m_j;
  j["eta"] = c.eta;
  j["inductance_nh"] = c.inductance * 1e9;
  return j;
}

// total bin mass of the fitted EMG density (emg_eval integrates to this)
double emg_mass(const EmgParams& p) {
  if (p.tau == 0.0) return p.amplitude * p.sigma * p.sigma * kPi;
  return p.amplitude * p.sigma * std::sqrt(2.0 * kPi) / p.tau;
}

} // namespace

Prediction predict(const RunConfig& cfg) {
  const DeviceParams base = cfg.device_params();
  const ParamRange ranges = cfg.param_range();
  Prediction out;
  out.delta_current = delta_current(base);
  out.rms_noise = rms_noise(base);
  out.tau_el = electrical_rise_time(base);
  out.tau_ext = external_rise_time(base);
  out.tau_rise = combined_rise_time(base);
  out.jitter_fwhm = predicted_jitter_fwhm(base);
  OptimalInductance opt = optimal_inductance(
      base, 0.25 * ranges.inductance.lo, 8.0 * ranges.inductance.hi);
  out.optimal_inductance = opt.inductance;
  out.optimal_at_endpoint = opt.at_endpoint;

  // corner sweep: ranged-parameter endpoints crossed with an inductance scan
  // wide enough to include the published optimum region
  const double lo = std::min(10e-9, ranges.inductance.lo);
  const double hi = std::max(50e-9, ranges.inductance.hi);
  out.best.jitter_fwhm = 1e300;
  out.worst.jitter_fwhm = 0;
  for (int m = 0; m < 16; ++m) {
    DeviceParams p = base;
    p.alpha = (m & 1) ? ranges.alpha.hi : ranges.alpha.lo;
    p.beta = (m & 2) ? ranges.beta.hi : ranges.beta.lo;
    p.m_j = (m & 4) ? ranges.m_j.hi : ranges.m_j.lo;
    p.eta = (m & 8) ? ranges.eta.hi : ranges.eta.lo;
    for (double l : linspace(lo, hi, 81)) {
      p.inductance = l;
      const double f = predicted_jitter_fwhm(p);
      CornerPoint c{f, p.alpha, p.beta, p.m_j, p.eta, l};
      if (f < out.best.jitter_fwhm) out.best = c;
      if (f > out.worst.jitter_fwhm) out.worst = c;
    }
  }
  return out;
}

std::string predict_text(const Prediction& p) {
  std::string s;
  s += "delta_current      = " + fmt3(p.delta_current * 1e9) + " nA\n";
  s += "rms_noise          = " + fmt3(p.rms_noise * 1e9) + " nA\n";
  s += "tau_el             = " + fmt3(p.tau_el * 1e9) + " ns\n";
  s += "tau_ext            = " + fmt3(p.tau_ext * 1e9) + " ns\n";
  s += "tau_rise           = " + fmt3(p.tau_rise * 1e9) + " ns\n";
  s += "jitter_fwhm        = " + fmt3(p.jitter_fwhm * 1e9) + " ns\n";
  s += "optimal_inductance = " + fmt3(p.optimal_inductance * 1e9) + " nH" +
       (p.optimal_at_endpoint ? " (bracket endpoint)" : "") + "\n";
  s += "corner_range       = " + fmt3(p.best.jitter_fwhm * 1e9) + " ns to " +
       fmt3(p.worst.jitter_fwhm * 1e9) + " ns\n";
  s += "  best  corner: alpha=" + fmt(p.best.alpha) + " beta=" + fmt(p.best.beta) +
       " m_j=" + fmt(p.best.m_j) + " eta=" + fmt(p.best.eta) +
       " inductance=" + fmt(p.best.inductance * 1e9) + " nH\n";
  s += "  worst corner: alpha=" + fmt(p.worst.alpha) + " beta=" + fmt(p.worst.beta) +
       " m_j=" + fmt(p.worst.m_j) + " eta=" + fmt(p.worst.eta) +
       " inductance=" + fmt(p.worst.inductance * 1e9) + " nH\n";
  return s;
}

std::string predict_json(const Prediction& p, const RunConfig& cfg,
                         const std::string& timestamp) {
  ordered_json j;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  j["timestamp"] = timestamp;
  j["config_hash"] = hash_hex(config_hash(cfg));
  j["seed"] = cfg.seed;
  ordered_json& pr = j["prediction"];
  pr["delta_current_na"] = p.delta_current * 1e9;
  pr["rms_noise_na"] = p.rms_noise * 1e9;
  pr["tau_el_ns"] = p.tau_el * 1e9;
  pr["tau_ext_ns"] = p.tau_ext * 1e9;
  pr["tau_rise_ns"] = p.tau_rise * 1e9;
  pr["jitter_fwhm_ns"] = p.jitter_fwhm * 1e9;
  pr["optimal_inductance_nh"] = p.optimal_inductance * 1e9;
  pr["optimal_at_endpoint"] = p.optimal_at_endpoint;
  pr["corner_best"] = corner_json(p.best);
  pr["corner_worst"] = corner_json(p.worst);
  return j.dump(2) + "\n";
}

SweepTable sweep_envelope(const RunConfig& cfg, double lo_nh, double hi_nh,
                          std::size_t n_points) {
  if (!(lo_nh > 0) || !(hi_nh > lo_nh) || n_points < 2)
    throw std::invalid_argument(
        "sweep: grid must be 'lo:hi:n' with 0 < lo < hi (nH) and n >= 2");
  std::vector<double> grid = linspace(lo_nh * 1e-9, hi_nh * 1e-9, n_points);
  JitterEnvelope env =
      jitter_envelope(cfg.device_params(), cfg.param_range(), grid);
  SweepTable t;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    t.inductance_nh.push_back(grid[i] * 1e9);
    t.lower_ns.push_back(env.lower[i] * 1e9);
    t.upper_ns.push_back(env.upper[i] * 1e9);
  }
  return t;
}

std::string sweep_csv(const SweepTable& table,
                      const std::vector<SweepOverlayPoint>& overlay) {
  std::string s = "inductance_nh,lower_ns,upper_ns";
  if (!overlay.empty())
    s += ",measured_inductance_nh,measured_fraction,measured_fwhm_ns";
  s += "\n";
  const std::size_t rows = std::max(table.inductance_nh.size(), overlay.size());
  for (std::size_t i = 0; i < rows; ++i) {
    if (i < table.inductance_nh.size())
      s += fmt(table.inductance_nh[i]) + "," + fmt(table.lower_ns[i]) + "," +
           fmt(table.upper_ns[i]);
    else
      s += ",,";
    if (!overlay.empty()) {
      if (i < overlay.size())
        s += "," + fmt(overlay[i].inductance_nh) + "," + fmt(overlay[i].fraction) +
             "," + fmt(overlay[i].fwhm_ns);
      else
        s += ",,,";
    }
    s += "\n";
  }
  return s;
}

std::vector<SweepOverlayPoint> overlay_from_report(const std::string& report_json) {
  ordered_json j;
  try {
    j = ordered_json::parse(report_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("report: ") + e.what());
  }
  if (!j.contains("config") || !j.contains("jitter"))
    throw std::invalid_argument("report: missing config/jitter sections");
  const double l_nh = j["config"]["device"]["inductance_nh"].get<double>();
  std::vector<SweepOverlayPoint> out;
  for (const auto& curve : j["jitter"]) {
    if (curve["photon_class"].get<int>() != 1) continue;
    for (const auto& pt : curve["points"]) {
      if (!pt["fit_valid"].get<bool>()) continue;
      out.push_back({l_nh, pt["fraction"].get<double>(),
                     pt["fwhm_ns"].get<double>()});
    }
  }
  return out;
}

AnalysisResult analyze_batch(const TraceBatch& batch, const RunConfig& cfg) {
  if (batch.traces.empty())
    throw std::runtime_error("analyze: the trace batch is empty");
  AnalysisResult r;
  const std::vector<double> scores =
      matched_filter_scores(batch, cfg.noise_params());
  r.hist = build_area_histogram(scores, cfg.analysis.area_bins);
  r.baseline_rms = baseline_rms(batch);
  const std::vector<double>& th = cfg.analysis.thresholds;
  r.representative_fraction = th[th.size() / 2];
  if (!r.hist.classification_available) {
    r.partial = true;
    r.partial_reasons.push_back(
        "classification unavailable: fewer than two area peaks");
    return r;
  }
  r.assignment = classify(scores, r.hist);

  try {
    r.calibration = energy_calibration(r.hist, cfg.device.photon_energy_ev);
    r.calibrated = true;
  } catch (const std::invalid_argument& e) {
    r.partial = true;
    r.partial_reasons.push_back(std::string("calibration: ") + e.what());
  }

  int max_label = 0;
  for (int l : r.assignment.labels) max_label = std::max(max_label, l);
  std::vector<std::size_t> counts(static_cast<std::size_t>(max_label) + 1, 0);
  for (int l : r.assignment.labels) ++counts[static_cast<std::size_t>(l)];

  r.class_means.assign(counts.size(), Signal{});
  for (int c = 0; c <= max_label; ++c) {
    ClassSummary cs;
    cs.photon_class = c;
    cs.count = counts[static_cast<std::size_t>(c)];
    if (c >= 1 && cs.count > 0) {
      r.class_means[static_cast<std::size_t>(c)] =
          class_mean_pulse(batch, r.assignment, c);
      try {
        cs.mean_pulse =
            rise_fall_metrics(r.class_means[static_cast<std::size_t>(c)]);
        cs.has_mean = true;
      } catch (const std::invalid_argument&) {
        // degenerate mean (all-noise class); metrics stay unset
      }
    }
    r.classes.push_back(cs);
  }

  std::vector<int> want = cfg.analysis.jitter_classes;
  std::sort(want.begin(), want.end());
  want.erase(std::unique(want.begin(), want.end()), want.end());
  std::vector<int> have;
  for (int c : want) {
    const bool ok = c >= 1 && c <= max_label &&
                    !r.class_means[static_cast<std::size_t>(c)].values.empty();
    if (ok) {
      have.push_back(c);
    } else {
      r.partial = true;
      r.partial_reasons.push_back("jitter class " + std::to_string(c) +
                                  " has no classified traces");
    }
  }
  if (!have.empty())
    r.curves = jitter_vs_threshold(batch, r.assignment, r.class_means, have, th);

  if (batch.has_truth) {
    r.has_truth = true;
    for (std::size_t i = 0; i < batch.traces.size(); ++i) {
      const int nt = batch.traces[i].n_true;
      if (nt < 0 || nt > 3) continue;
      ++r.truth_n_le3;
      if (r.assignment.labels[i] == nt) ++r.truth_n_le3_correct;
    }
    if (!have.empty()) {
      const std::vector<CrossingRecord> recs = threshold_crossings(
          batch, r.assignment, r.class_means, r.representative_fraction);
      for (int c : have) {
        double sum = 0, sum2 = 0;
        std::size_t n = 0;
        for (const CrossingRecord& rec : recs) {
          if (rec.photon_class != c || rec.missed) continue;
          const double off = rec.time - batch.traces[rec.trace_id].t0_true;
          sum += off;
          sum2 += off * off;
          ++n;
        }
        if (n < 2) continue;
        const double mean = sum / static_cast<double>(n);
        const double var =
            (sum2 - sum * mean) / static_cast<double>(n - 1);
        r.truth_arrival.push_back(
            {c, n, mean, std::sqrt(std::max(var, 0.0))});
      }
    }
  }
  return r;
}

std::string analysis_report_json(const AnalysisResult& r, const RunConfig& cfg,
                                 const TraceBatch& batch,
                                 const std::string& input_path,
                                 const std::string& timestamp) {
  ordered_json j;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  j["timestamp"] = timestamp;
  j["config_hash"] = hash_hex(config_hash(cfg));
  j["seed"] = cfg.seed;
  ordered_json& in = j["input"];
  in["path"] = input_path;
  in["n_traces"] = batch.traces.size();
  in["samples_per_trace"] = batch.digitizer.trace_length;
  in["sample_rate_mhz"] = batch.digitizer.sample_rate / 1e6;
  in["bits"] = batch.digitizer.bits;
  in["full_scale"] = batch.digitizer.full_scale;
  in["has_truth"] = batch.has_truth;
  j["config"] = ordered_json::parse(config_to_json(cfg));
  j["baseline"] = {{"rms", r.baseline_rms}};

  ordered_json& ah = j["area_histogram"];
  ah["n_bins"] = r.hist.counts.size();
  ah["classification_available"] = r.hist.classification_available;
  ah["peaks"] = ordered_json::array();
  for (std::size_t k = 0; k < r.hist.peak_centers.size(); ++k)
    ah["peaks"].push_back({{"center", r.hist.peak_centers[k]},
                           {"height", r.hist.peak_heights[k]},
                           {"sigma", r.hist.peak_sigmas[k]}});
  ah["valleys"] = r.hist.valleys;

  j["classes"] = ordered_json::array();
  for (const ClassSummary& cs : r.classes) {
    ordered_json e;
    e["photon_class"] = cs.photon_class;
    e["count"] = cs.count;
    e["fraction_of_batch"] =
        static_cast<double>(cs.count) / static_cast<double>(batch.traces.size());
    if (cs.has_mean) {
      e["rise_10_90_ns"] = cs.mean_pulse.rise_10_90 * 1e9;
      e["decay_1e_ns"] = cs.mean_pulse.decay_1e * 1e9;
      e["peak"] = cs.mean_pulse.peak;
      e["peak_time_ns"] = cs.mean_pulse.peak_time * 1e9;
    }
    j["classes"].push_back(e);
  }

  if (r.calibrated) {
    ordered_json cal;
    cal["knots"] = ordered_json::array();
    for (std::size_t k = 0; k < r.calibration.knot_scores.size(); ++k)
      cal["knots"].push_back({{"score", r.calibration.knot_scores[k]},
                              {"energy_ev", r.calibration.knot_energies[k]},
                              {"residual_ev", r.calibration.residuals[k]}});
    cal["fwhm_1photon_ev"] = r.calibration.fwhm_1photon_ev;
    j["calibration"] = cal;
  } else {
    j["calibration"] = nullptr;
  }

  j["jitter"] = ordered_json::array();
  for (const JitterCurve& c : r.curves) {
    ordered_json e;
    e["photon_class"] = c.photon_class;
    e["points"] = ordered_json::array();
    for (const JitterPoint& pt : c.points) {
      ordered_json q;
      q["fraction"] = pt.fraction;
      q["fwhm_ns"] = pt.fwhm * 1e9;
      q["fwhm_err_ns"] = pt.fwhm_err * 1e9;
      q["reduced_chi2"] = pt.reduced_chi2;
      q["n_events"] = pt.n_events;
      q["misses"] = pt.misses;
      q["trimmed"] = pt.trimmed;
      q["fit"] = {{"amplitude", pt.fit.amplitude},
                  {"t0_ns", pt.fit.t0 * 1e9},
                  {"sigma_ns", pt.fit.sigma * 1e9},
                  {"tau_per_ns", pt.fit.tau * 1e-9}};
      q["fit_valid"] = pt.fit_valid;
      q["low_stats"] = pt.low_stats;
      e["points"].push_back(q);
    }
    j["jitter"].push_back(e);
  }

  if (r.has_truth) {
    ordered_json tc;
    tc["n_le3"] = r.truth_n_le3;
    tc["n_le3_correct"] = r.truth_n_le3_correct;
    tc["accuracy_n_le3"] =
        r.truth_n_le3 ? static_cast<double>(r.truth_n_le3_correct) /
                            static_cast<double>(r.truth_n_le3)
                      : 0.0;
    tc["fraction"] = r.representative_fraction;
    tc["arrival"] = ordered_json::array();
    for (const TruthArrivalRow& row : r.truth_arrival)
      tc["arrival"].push_back({{"photon_class", row.photon_class},
                               {"n", row.n},
                               {"mean_offset_ns", row.mean_offset * 1e9},
                               {"std_offset_ns", row.std_offset * 1e9}});
    j["truth_closure"] = tc;
  } else {
    j["truth_closure"] = nullptr;
  }

  j["clipped_samples"] = batch.clipped_samples;
  j["partial"] = r.partial;
  j["partial_reasons"] = r.partial_reasons;
  return j.dump(2) + "\n";
}

std::string area_hist_csv(const AreaHistogram& h) {
  std::string s = "bin_center,count,smoothed\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double c = 0.5 * (h.edges[i] + h.edges[i + 1]);
    s += fmt(c) + "," + std::to_string(h.counts[i]) + "," + fmt(h.smoothed[i]) +
         "\n";
  }
  return s;
}

std::string mean_pulses_csv(const AnalysisResult& r) {
  std::vector<int> cols;
  for (std::size_t c = 1; c < r.class_means.size(); ++c)
    if (!r.class_means[c].values.empty()) cols.push_back(static_cast<int>(c));
  std::string s = "time_ns";
  for (int c : cols) s += ",class_" + std::to_string(c);
  s += "\n";
  if (cols.empty()) return s;
  const Signal& first = r.class_means[static_cast<std::size_t>(cols[0])];
  for (std::size_t i = 0; i < first.values.size(); ++i) {
    s += fmt(static_cast<double>(i) * first.dt * 1e9);
    for (int c : cols)
      s += "," + fmt(r.class_means[static_cast<std::size_t>(c)].values[i]);
    s += "\n";
  }
  return s;
}

std::string crossings_csv(const AnalysisResult& r, const TraceBatch& batch) {
  std::string s = "photon_class,bin_center_ns,count,fit\n";
  if (r.curves.empty()) return s;
  const double f = r.representative_fraction;
  const std::vector<CrossingRecord> recs =
      threshold_crossings(batch, r.assignment, r.class_means, f);
  for (const JitterCurve& c : r.curves) {
    std::vector<double> times;
    for (const CrossingRecord& rec : recs)
      if (rec.photon_class == c.photon_class && !rec.missed)
        times.push_back(rec.time);
    Histogram h = crossing_histogram(times, batch.digitizer.dt());
    const JitterPoint* pt = nullptr;
    for (const JitterPoint& q : c.points)
      if (q.fraction == f) pt = &q;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      const double lo = h.edges[i], hi = h.edges[i + 1];
      s += std::to_string(c.photon_class) + "," +
           fmt(0.5 * (lo + hi) * 1e9) + "," + fmt(h.counts[i]);
      if (pt && pt->fit_valid && pt->fit.sigma > 0) {
        const double mass = emg_mass(pt->fit);
        const double model =
            mass * (emg_cdf(hi, pt->fit.t0, pt->fit.sigma, pt->fit.tau) -
                    emg_cdf(lo, pt->fit.t0, pt->fit.sigma, pt->fit.tau));
        s += "," + fmt(model);
      } else {
        s += ",";
      }
      s += "\n";
    }
  }
  return s;
}

std::string jitter_csv(const AnalysisResult& r) {
  std::string s = "fraction";
  for (const JitterCurve& c : r.curves)
    s += ",class_" + std::to_string(c.photon_class) + "_fwhm_ns,class_" +
         std::to_string(c.photon_class) + "_err_ns";
  s += "\n";
  if (r.curves.empty()) return s;
  const std::size_t nf = r.curves.front().points.size();
  for (std::size_t i = 0; i < nf; ++i) {
    s += fmt(r.curves.front().points[i].fraction);
    for (const JitterCurve& c : r.curves)
      s += "," + fmt(c.points[i].fwhm * 1e9) + "," +
           fmt(c.points[i].fwhm_err * 1e9);
    s += "\n";
  }
  return s;
}

} // namespace tes
