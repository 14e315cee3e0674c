#include "tes/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tes {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

int sgn(double x) { return (x > 0) - (x < 0); }

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

} // namespace

Signal to_signal(const Trace& tr, const DigitizerParams& digi) {
  Signal s;
  s.dt = tr.dt > 0 ? tr.dt : digi.dt();
  const double lsb = digi.lsb();
  s.values.resize(tr.samples.size());
  for (std::size_t j = 0; j < tr.samples.size(); ++j)
    s.values[j] = tr.samples[j] * lsb;
  std::size_t pre = std::min<std::size_t>(digi.pre_trigger, s.values.size());
  if (pre > 0) {
    double b = 0;
    for (std::size_t j = 0; j < pre; ++j) b += s.values[j];
    b /= static_cast<double>(pre);
    for (double& v : s.values) v -= b;
  }
  return s;
}

double percentile(std::vector<double> v, double q) {
  require(!v.empty(), "percentile: empty sample");
  require(q >= 0.0 && q <= 100.0, "percentile: q outside [0, 100]");
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  double h = (static_cast<double>(v.size()) - 1.0) * q / 100.0;
  std::size_t lo = static_cast<std::size_t>(h);
  if (lo >= v.size() - 1) return v.back();
  double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

// ----- monotone piecewise cubic -----

// endpoint derivative: one-sided three-point estimate, clamped so the end
// segment cannot overshoot
static double pchip_edge(double h0, double h1, double m0, double m1) {
  double d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
  if (sgn(d) != sgn(m0)) return 0.0;
  if (sgn(m0) != sgn(m1) && std::abs(d) > 3.0 * std::abs(m0)) return 3.0 * m0;
  return d;
}

Pchip::Pchip(std::vector<double> xs, std::vector<double> ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
  require(xs_.size() == ys_.size(), "pchip: size mismatch");
  require(xs_.size() >= 2, "pchip: need at least two knots");
  for (std::size_t i = 1; i < xs_.size(); ++i)
    require(xs_[i] > xs_[i - 1], "pchip: knots not strictly increasing");

  std::size_t n = xs_.size();
  std::vector<double> h(n - 1), m(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = xs_[i + 1] - xs_[i];
    m[i] = (ys_[i + 1] - ys_[i]) / h[i];
  }
  d_.assign(n, 0.0);
  if (n == 2) {
    d_[0] = d_[1] = m[0];
    return;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (m[k - 1] == 0.0 || m[k] == 0.0 || sgn(m[k - 1]) != sgn(m[k])) {
      d_[k] = 0.0;
    } else {
      double w1 = 2.0 * h[k] + h[k - 1];
      double w2 = h[k] + 2.0 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
    }
  }
  d_[0] = pchip_edge(h[0], h[1], m[0], m[1]);
  d_[n - 1] = pchip_edge(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
}

std::size_t Pchip::interval(double x) const {
  if (x <= xs_.front()) return 0;
  if (x >= xs_.back()) return xs_.size() - 2;
  // first knot above x, minus one
  std::size_t k =
      static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) -
                               xs_.begin());
  return k - 1;
}

double Pchip::operator()(double x) const {
  require(!xs_.empty(), "pchip: empty interpolant");
  std::size_t k = interval(x);
  double hseg = xs_[k + 1] - xs_[k];
  double m = (ys_[k + 1] - ys_[k]) / hseg;
  double c2 = (3.0 * m - 2.0 * d_[k] - d_[k + 1]) / hseg;
  double c3 = (d_[k] + d_[k + 1] - 2.0 * m) / (hseg * hseg);
  double s = x - xs_[k];
  return ys_[k] + s * (d_[k] + s * (c2 + s * c3));
}

double Pchip::derivative(double x) const {
  require(!xs_.empty(), "pchip: empty interpolant");
  std::size_t k = interval(x);
  double hseg = xs_[k + 1] - xs_[k];
  double m = (ys_[k + 1] - ys_[k]) / hseg;
  double c2 = (3.0 * m - 2.0 * d_[k] - d_[k + 1]) / hseg;
  double c3 = (d_[k] + d_[k + 1] - 2.0 * m) / (hseg * hseg);
  double s = x - xs_[k];
  return d_[k] + s * (2.0 * c2 + 3.0 * c3 * s);
}

// ----- matched filtering -----

double matched_filter(const Signal& trace, const Signal& tmpl) {
  require(trace.values.size() == tmpl.values.size(),
          "matched filter: length mismatch");
  double denom = dot(tmpl.values, tmpl.values);
  require(denom > 0.0, "matched filter: zero template");
  return dot(trace.values, tmpl.values) / denom;
}

Whitener::Whitener(const NoiseParams& noise, double dt) {
  require(dt > 0.0, "whitener: dt must be positive");
  double slow_var = std::max(
      0.0, noise.total_rms * noise.total_rms - noise.white_rms * noise.white_rms);
  double white_var = noise.white_rms * noise.white_rms;
  a_ = slow_var > 0.0 ? std::exp(-dt / noise.slow_tau) : 0.0;
  double c0 = (1.0 - a_ * a_) * slow_var + (1.0 + a_ * a_) * white_var;
  double c1 = -a_ * white_var;
  if (c0 <= 0.0 || c1 == 0.0) {
    theta_ = 0.0;
    return;
  }
  double r = c1 / c0; // |r| <= a/(1+a^2) < 1/2, the sqrt is always real
  theta_ = (1.0 - std::sqrt(1.0 - 4.0 * r * r)) / (2.0 * r);
}

std::vector<double> Whitener::operator()(const std::vector<double>& x) const {
  std::vector<double> e(x.size());
  if (x.empty()) return e;
  double prev_x = x[0];
  double prev_e = x[0] * std::sqrt(1.0 - a_ * a_);
  e[0] = prev_e;
  for (std::size_t i = 1; i < x.size(); ++i) {
    double d = x[i] - a_ * prev_x;
    prev_e = d - theta_ * prev_e;
    e[i] = prev_e;
    prev_x = x[i];
  }
  return e;
}

std::vector<double> matched_filter_scores(const TraceBatch& batch,
                                          const NoiseParams& noise) {
  const std::size_t n = batch.traces.size();
  std::vector<double> scores(n, 0.0);
  if (n == 0) return scores;
  const DigitizerParams& digi = batch.digitizer;
  const std::size_t sub = std::min<std::size_t>(4000, n);
  const std::size_t ns = batch.traces[0].samples.size();
  require(ns > 0, "matched filter: empty traces");
  const std::size_t pre = std::min<std::size_t>(digi.pre_trigger, ns);

  // pass 1 over the subsample: per-trace baseline, peak, pooled baseline RMS
  std::vector<double> base(sub, 0.0), peak(sub, 0.0);
  double s1 = 0, s2 = 0;
  std::size_t m = 0;
  const double lsb = digi.lsb();
  for (std::size_t i = 0; i < sub; ++i) {
    const Trace& tr = batch.traces[i];
    double b = 0;
    for (std::size_t j = 0; j < pre; ++j) b += tr.samples[j] * lsb;
    if (pre > 0) b /= static_cast<double>(pre);
    base[i] = b;
    double pk = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < tr.samples.size(); ++j)
      pk = std::max(pk, tr.samples[j] * lsb - b);
    peak[i] = pk;
    for (std::size_t j = 0; j < pre; ++j) {
      double y = tr.samples[j] * lsb - b;
      s1 += y;
      s2 += y * y;
      ++m;
    }
  }
  double bstd = 0;
  if (m > 0) {
    double mean = s1 / static_cast<double>(m);
    bstd = std::sqrt(std::max(0.0, s2 / static_cast<double>(m) - mean * mean));
  }

  // pass 2: template = mean of the above-noise traces (all of them if the
  // cut selects nothing), re-baselined
  std::vector<double> tmpl(ns, 0.0);
  std::size_t used = 0;
  for (int strict = 1; strict >= 0 && used == 0; --strict) {
    std::fill(tmpl.begin(), tmpl.end(), 0.0);
    for (std::size_t i = 0; i < sub; ++i) {
      if (strict && !(peak[i] > 5.0 * bstd)) continue;
      const Trace& tr = batch.traces[i];
      for (std::size_t j = 0; j < ns; ++j)
        tmpl[j] += tr.samples[j] * lsb - base[i];
      ++used;
    }
  }
  for (double& v : tmpl) v /= static_cast<double>(used);
  if (pre > 0) {
    double b = 0;
    for (std::size_t j = 0; j < pre; ++j) b += tmpl[j];
    b /= static_cast<double>(pre);
    for (double& v : tmpl) v -= b;
  }

  Whitener wh(noise, digi.dt());
  std::vector<double> wt = wh(tmpl);
  double norm = std::sqrt(dot(wt, wt));
  if (!(norm > 0.0))
    throw std::runtime_error("matched filter: degenerate template");
  for (double& v : wt) v /= norm;

  // score every trace against the whitened unit template
  std::vector<double> x(ns);
  for (std::size_t i = 0; i < n; ++i) {
    const Trace& tr = batch.traces[i];
    require(tr.samples.size() == ns, "matched filter: ragged batch");
    double b = 0;
    for (std::size_t j = 0; j < pre; ++j) b += tr.samples[j] * lsb;
    if (pre > 0) b /= static_cast<double>(pre);
    for (std::size_t j = 0; j < ns; ++j) x[j] = tr.samples[j] * lsb - b;
    scores[i] = dot(wh(x), wt);
  }
  return scores;
}

// ----- histogramming and peak detection -----

AreaHistogram build_area_histogram(const std::vector<double>& scores,
                                   std::size_t n_bins) {
  require(!scores.empty(), "histogram: empty scores");
  require(n_bins >= 4, "histogram: need at least four bins");
  AreaHistogram h;
  double mn = scores[0], mx = scores[0];
  for (double s : scores) {
    mn = std::min(mn, s);
    mx = std::max(mx, s);
  }
  if (mn == mx) {
    mn -= 0.5;
    mx += 0.5;
  }
  const std::size_t nb = n_bins;
  h.edges.resize(nb + 1);
  for (std::size_t i = 0; i <= nb; ++i)
    h.edges[i] = mn + (mx - mn) * static_cast<double>(i) / static_cast<double>(nb);
  h.counts.assign(nb, 0);
  for (double s : scores) {
    double u = (s - mn) / (mx - mn) * static_cast<double>(nb);
    std::size_t k = u <= 0.0 ? 0 : static_cast<std::size_t>(u);
    ++h.counts[std::min(k, nb - 1)];
  }

  // moving average, zero-padded, window anchored like a centered convolution
  const long w = std::max(1L, std::lround(std::nearbyint(0.01 * nb)));
  h.smoothed.assign(nb, 0.0);
  for (long i = 0; i < static_cast<long>(nb); ++i) {
    double acc = 0;
    for (long k = 0; k < w; ++k) {
      long j = i + (w - 1) / 2 - k;
      if (j >= 0 && j < static_cast<long>(nb)) acc += h.counts[j];
    }
    h.smoothed[i] = acc / static_cast<double>(w);
  }
  const std::vector<double>& sm = h.smoothed;

  // window-local maxima, leftmost of any plateau
  std::vector<int> cand;
  for (long i = 0; i < static_cast<long>(nb); ++i) {
    long lo = std::max(0L, i - w), hi = std::min<long>(nb, i + w + 1);
    double seg = 0;
    for (long j = lo; j < hi; ++j) seg = std::max(seg, sm[j]);
    if (!(sm[i] > 0.0) || sm[i] != seg) continue;
    bool left_equal = false;
    for (long j = lo; j < i; ++j) left_equal = left_equal || sm[j] == sm[i];
    if (!left_equal) cand.push_back(static_cast<int>(i));
  }

  // greedy accept, tallest first: candidate kept iff every already-accepted
  // peak is separated from it by a valley deeper than five Poisson sigmas
  // of the candidate height
  std::stable_sort(cand.begin(), cand.end(),
                   [&](int a, int b) { return sm[a] > sm[b]; });
  std::vector<int> acc;
  for (int i : cand) {
    bool ok = true;
    for (int j : acc) {
      int lo = std::min(i, j), hi = std::max(i, j);
      double valley = sm[lo];
      for (int k = lo; k <= hi; ++k) valley = std::min(valley, sm[k]);
      if (!(sm[i] - valley > 5.0 * std::sqrt(std::max(sm[i], 1.0)))) {
        ok = false;
        break;
      }
    }
    if (ok) acc.push_back(i);
  }
  std::sort(acc.begin(), acc.end());
  h.peak_bins = acc;

  auto center = [&](int i) { return 0.5 * (h.edges[i] + h.edges[i + 1]); };

  // refine each peak with a Gaussian-core log-parabola over the raw counts
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int pi : acc) {
    h.peak_heights.push_back(sm[pi]);
    long jstar = std::max(0L, pi - w);
    for (long j = jstar; j <= std::min<long>(nb - 1, pi + w); ++j)
      if (h.counts[j] > h.counts[jstar]) jstar = j;
    long L = jstar, R = jstar;
    double bar = 0.3 * static_cast<double>(h.counts[jstar]);
    while (L > 0 && static_cast<double>(h.counts[L - 1]) >= bar) --L;
    while (R + 1 < static_cast<long>(nb) &&
           static_cast<double>(h.counts[R + 1]) >= bar)
      ++R;
    if (R - L < 2 && L > 0 && h.counts[L - 1] > 0) --L;
    if (R - L < 2 && R + 1 < static_cast<long>(nb) && h.counts[R + 1] > 0) ++R;
    double cx = center(static_cast<int>(jstar)), csig = nan;
    if (R - L >= 2) {
      // weighted LS of ln(count) on a quadratic about the seed bin
      double s0 = 0, sx = 0, sxx = 0, sxxx = 0, sxxxx = 0, sy = 0, sxy = 0,
             sxxy = 0;
      for (long j = L; j <= R; ++j) {
        double wgt = static_cast<double>(h.counts[j]);
        if (wgt <= 0) continue;
        double xj = center(static_cast<int>(j)) - center(static_cast<int>(jstar));
        double yj = std::log(wgt);
        s0 += wgt;
        sx += wgt * xj;
        sxx += wgt * xj * xj;
        sxxx += wgt * xj * xj * xj;
        sxxxx += wgt * xj * xj * xj * xj;
        sy += wgt * yj;
        sxy += wgt * xj * yj;
        sxxy += wgt * xj * xj * yj;
      }
      double a11 = s0, a12 = sx, a13 = sxx, a22 = sxx, a23 = sxxx, a33 = sxxxx;
      double det = a11 * (a22 * a33 - a23 * a23) - a12 * (a12 * a33 - a23 * a13) +
                   a13 * (a12 * a23 - a22 * a13);
      if (det != 0.0) {
        double b1 = sy, b2 = sxy, b3 = sxxy;
        double cq = (a11 * (a22 * b3 - a23 * b2) - a12 * (a12 * b3 - a23 * b1) +
                     a13 * (a12 * b2 - a22 * b1)) /
                    det;
        double bq = (a11 * (b2 * a33 - b3 * a23) - b1 * (a12 * a33 - a23 * a13) +
                     a13 * (a12 * b3 - b2 * a13)) /
                    det;
        if (cq < 0.0) {
          double vx = -bq / (2.0 * cq) + center(static_cast<int>(jstar));
          if (vx >= h.edges[L] && vx <= h.edges[R + 1]) {
            cx = vx;
            csig = std::sqrt(-1.0 / (2.0 * cq));
          }
        }
      }
    }
    h.peak_centers.push_back(cx);
    h.peak_sigmas.push_back(csig);
  }

  // refined centers must stay ordered; otherwise keep the plain bin centers
  for (std::size_t i = 1; i < h.peak_centers.size(); ++i)
    if (!(h.peak_centers[i] > h.peak_centers[i - 1])) {
      for (std::size_t k = 0; k < acc.size(); ++k)
        h.peak_centers[k] = center(acc[k]);
      break;
    }

  for (std::size_t i = 1; i < acc.size(); ++i) {
    int lo = acc[i - 1], hi = acc[i], vb = lo;
    for (int k = lo; k <= hi; ++k)
      if (sm[k] < sm[vb]) vb = k;
    // center the boundary among all minimal bins so an empty gap between
    // clusters splits evenly instead of hugging the lower cluster's tail
    std::vector<int> ties;
    for (int k = lo; k <= hi; ++k)
      if (sm[k] == sm[vb]) ties.push_back(k);
    vb = ties[ties.size() / 2];
    h.valley_bins.push_back(vb);
    h.valleys.push_back(center(vb));
  }
  h.classification_available = acc.size() >= 2;
  return h;
}

PhotonClassAssignment classify(const std::vector<double>& scores,
                               const AreaHistogram& hist) {
  require(hist.classification_available, "classify: need at least two peaks");
  PhotonClassAssignment asg;
  asg.boundaries = hist.valleys;
  asg.labels.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    asg.labels[i] = static_cast<int>(
        std::upper_bound(asg.boundaries.begin(), asg.boundaries.end(),
                         scores[i]) -
        asg.boundaries.begin());
  for (std::size_t k = 0; k + 1 < hist.peak_bins.size(); ++k) {
    double vh = hist.smoothed[hist.valley_bins[k]];
    double ph = std::min(hist.peak_heights[k], hist.peak_heights[k + 1]);
    if (vh > 0.2 * ph) asg.overlap_warning = true;
  }
  return asg;
}

EnergyCalibration energy_calibration(const AreaHistogram& hist,
                                     double photon_energy_ev) {
  require(photon_energy_ev > 0.0, "calibration: photon energy must be positive");
  require(hist.peak_centers.size() >= 3, "calibration: need at least three peaks");
  for (std::size_t i = 1; i < hist.peak_centers.size(); ++i)
    require(hist.peak_centers[i] > hist.peak_centers[i - 1],
            "calibration: peak centers not monotone");
  EnergyCalibration cal;
  cal.knot_scores = hist.peak_centers;
  for (std::size_t n = 0; n < hist.peak_centers.size(); ++n)
    cal.knot_energies.push_back(static_cast<double>(n) * photon_energy_ev);
  cal.map = Pchip(cal.knot_scores, cal.knot_energies);
  for (std::size_t n = 0; n < cal.knot_scores.size(); ++n)
    cal.residuals.push_back(cal.map(cal.knot_scores[n]) - cal.knot_energies[n]);
  cal.fwhm_1photon_ev = std::numeric_limits<double>::quiet_NaN();
  if (hist.peak_sigmas.size() > 1 && std::isfinite(hist.peak_sigmas[1])) {
    double slope = cal.map.derivative(cal.knot_scores[1]);
    cal.fwhm_1photon_ev =
        2.3548200450309493 * hist.peak_sigmas[1] * slope;
  }
  return cal;
}

Signal class_mean_pulse(const TraceBatch& batch,
                        const PhotonClassAssignment& assignment, int n) {
  require(assignment.labels.size() == batch.traces.size(),
          "mean pulse: assignment does not cover the batch");
  Signal mean;
  std::size_t count = 0;
  for (std::size_t i = 0; i < batch.traces.size(); ++i) {
    if (assignment.labels[i] != n) continue;
    Signal s = to_signal(batch.traces[i], batch.digitizer);
    if (count == 0) {
      mean = std::move(s);
    } else {
      require(s.values.size() == mean.values.size(), "mean pulse: ragged batch");
      for (std::size_t j = 0; j < s.values.size(); ++j)
        mean.values[j] += s.values[j];
    }
    ++count;
  }
  require(count > 0, "mean pulse: empty class");
  for (double& v : mean.values) v /= static_cast<double>(count);
  return mean;
}

RiseFallMetrics rise_fall_metrics(const Signal& s) {
  const std::vector<double>& v = s.values;
  if (v.size() < 3) throw std::runtime_error("rise-fall: trace too short");
  std::size_t ip = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[ip]) ip = j;
  double peak = v[ip];
  if (!(peak > 0.0)) throw std::runtime_error("rise-fall: flat trace");

  // crossings nearest the peak on the way up
  auto up_crossing = [&](double level, std::size_t from) {
    for (std::size_t j = from; j-- > 0;) {
      if (v[j] < level)
        return std::pair<bool, double>(
            true, (static_cast<double>(j) + (level - v[j]) / (v[j + 1] - v[j])) *
                      s.dt);
    }
    return std::pair<bool, double>(false, 0.0);
  };
  auto [ok90, t90] = up_crossing(0.9 * peak, ip);
  auto [ok10, t10] = up_crossing(0.1 * peak, ip);
  if (!ok90 || !ok10) throw std::runtime_error("rise-fall: no rising crossing");

  const double level_e = peak / 2.718281828459045;
  double decay = -1.0;
  for (std::size_t j = ip + 1; j < v.size(); ++j) {
    if (v[j] <= level_e) {
      double frac = (v[j - 1] - level_e) / (v[j - 1] - v[j]);
      decay = (static_cast<double>(j - 1) + frac - static_cast<double>(ip)) * s.dt;
      break;
    }
  }
  if (decay < 0.0) throw std::runtime_error("rise-fall: no decay crossing");

  RiseFallMetrics out;
  out.rise_10_90 = t90 - t10;
  out.decay_1e = decay;
  out.peak = peak;
  out.peak_time = static_cast<double>(ip) * s.dt;
  return out;
}

// ----- threshold crossings -----

double baseline_rms(const TraceBatch& batch) {
  const std::size_t pre = batch.digitizer.pre_trigger;
  const double lsb = batch.digitizer.lsb();
  double s1 = 0, s2 = 0;
  std::size_t m = 0;
  for (const Trace& tr : batch.traces) {
    std::size_t p = std::min<std::size_t>(pre, tr.samples.size());
    for (std::size_t j = 0; j < p; ++j) {
      double y = tr.samples[j] * lsb;
      s1 += y;
      s2 += y * y;
      ++m;
    }
  }
  if (m < 2) return 0.0;
  double mean = s1 / static_cast<double>(m);
  return std::sqrt(std::max(0.0, s2 / static_cast<double>(m) - mean * mean));
}

namespace {

// persistence requirement as a function of level-to-noise contrast
long hold_samples(double level, double sigma_b) {
  double r = sigma_b > 0.0 ? level / sigma_b
                           : std::numeric_limits<double>::infinity();
  if (r >= 4.0) return 1;
  if (r >= 3.0) return 2;
  if (r >= 2.0) return 6;
  return 32;
}

constexpr long kArmWindow = 20;     // trailing samples inspected for arming
constexpr double kGateBefore = 12e-9;  // gate opens this early of the trigger
constexpr double kGateAfter = 300e-9;  // and closes this late

} // namespace

double crossing_time(const Signal& s, double level, double sigma_b,
                     std::size_t pre_trigger) {
  const std::vector<double>& v = s.values;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (v.size() < 2 || !(s.dt > 0.0) || !(level > 0.0)) return nan;
  long lo = static_cast<long>(pre_trigger) - std::lround(kGateBefore / s.dt);
  long hi = static_cast<long>(pre_trigger) + std::lround(kGateAfter / s.dt);
  lo = std::max(lo, 0L);
  hi = std::min(hi, static_cast<long>(v.size()) - 1);
  const long H = hold_samples(level, sigma_b);
  const double arm_level = level - sigma_b;
  for (long iu = lo; iu < hi; ++iu) {
    if (!(v[iu] < level && v[iu + 1] >= level)) continue;
    bool held = true;
    long hend = std::min<long>(iu + H, static_cast<long>(v.size()) - 1);
    for (long j = iu + 1; j <= hend; ++j) held = held && v[j] >= level;
    if (!held) continue;
    double trail = v[iu];
    for (long j = std::max(0L, iu - (kArmWindow - 1)); j <= iu; ++j)
      trail = std::min(trail, v[j]);
    if (!(trail < arm_level)) continue;
    return (static_cast<double>(iu) + (level - v[iu]) / (v[iu + 1] - v[iu])) *
           s.dt;
  }
  return nan;
}

std::vector<CrossingRecord> threshold_crossings(
    const TraceBatch& batch, const PhotonClassAssignment& assignment,
    const std::vector<Signal>& class_means, double fraction) {
  require(fraction > 0.0 && fraction < 1.0, "crossings: fraction outside (0, 1)");
  require(assignment.labels.size() == batch.traces.size(),
          "crossings: assignment does not cover the batch");
  std::vector<double> peak(class_means.size(), 0.0);
  for (std::size_t c = 1; c < class_means.size(); ++c)
    for (double x : class_means[c].values) peak[c] = std::max(peak[c], x);
  const double sigma_b = baseline_rms(batch);

  std::vector<CrossingRecord> out;
  for (std::size_t i = 0; i < batch.traces.size(); ++i) {
    int label = assignment.labels[i];
    if (label < 1 || static_cast<std::size_t>(label) >= class_means.size() ||
        !(peak[label] > 0.0))
      continue;
    Signal s = to_signal(batch.traces[i], batch.digitizer);
    double t = crossing_time(s, fraction * peak[label], sigma_b,
                             batch.digitizer.pre_trigger);
    CrossingRecord rec;
    rec.trace_id = i;
    rec.photon_class = label;
    rec.fraction = fraction;
    rec.time = t;
    rec.missed = !std::isfinite(t);
    out.push_back(rec);
  }
  return out;
}

Histogram crossing_histogram(const std::vector<double>& times, double dt,
                             std::size_t* trimmed, std::size_t* kept) {
  if (trimmed) *trimmed = 0;
  if (kept) *kept = 0;
  Histogram h;
  if (times.empty()) return h;

  double lo = percentile(times, 1.5);
  double hi = percentile(times, 99.5);
  double span = hi - lo;
  if (span <= dt / 100.0) return h;

  // sample-grid-anchored bins, an integer number of sample periods wide, so
  // every bin integrates whole interpolation-phase periods
  double bw = dt * std::max(1.0, std::ceil(span / 200.0 / dt));
  double e0 = std::floor(lo / bw) * bw;
  double e1 = std::ceil(hi / bw) * bw;
  std::size_t nb = static_cast<std::size_t>(std::llround((e1 - e0) / bw));
  nb = std::max<std::size_t>(nb, 1);
  h.edges.resize(nb + 1);
  for (std::size_t i = 0; i <= nb; ++i)
    h.edges[i] = e0 + bw * static_cast<double>(i);
  h.counts.assign(nb, 0.0);
  for (double t : times) {
    if (t < e0 || t > e1) {
      if (trimmed) ++*trimmed;
      continue;
    }
    std::size_t k = static_cast<std::size_t>((t - e0) / bw);
    h.counts[std::min(k, nb - 1)] += 1.0;
    if (kept) ++*kept;
  }
  return h;
}

namespace {

JitterPoint fit_crossing_sample(std::vector<double> times, double fraction,
                                std::size_t misses, double dt) {
  JitterPoint pt;
  pt.fraction = fraction;
  pt.misses = misses;
  pt.low_stats = times.size() < 100;
  if (times.empty()) return pt;

  double lo = percentile(times, 1.5);
  double hi = percentile(times, 99.5);
  double span = hi - lo;
  if (span <= dt / 100.0) {
    // essentially a point mass: report the raw span, nothing to fit
    pt.fwhm = span;
    pt.n_events = times.size();
    pt.fit_valid = true;
    return pt;
  }

  Histogram h = crossing_histogram(times, dt, &pt.trimmed, &pt.n_events);

  try {
    EmgFit fit = fit_emg(h);
    pt.fit = fit.params;
    pt.fwhm = fit.fwhm;
    pt.fwhm_err = fit.fwhm_err;
    pt.reduced_chi2 = fit.reduced_chi2;
    pt.fit_valid = fit.status == FitStatus::converged;
  } catch (const std::invalid_argument&) {
    // too few occupied bins to fit; report the trimmed span honestly
    pt.fwhm = span;
    pt.fit_valid = false;
  }
  return pt;
}

} // namespace

std::vector<JitterCurve> jitter_vs_threshold(
    const TraceBatch& batch, const PhotonClassAssignment& assignment,
    const std::vector<Signal>& class_means, const std::vector<int>& classes,
    const std::vector<double>& fractions) {
  require(assignment.labels.size() == batch.traces.size(),
          "jitter: assignment does not cover the batch");
  require(!fractions.empty(), "jitter: no fractions");
  for (double f : fractions)
    require(f > 0.0 && f < 1.0, "jitter: fraction outside (0, 1)");
  std::vector<int> class_index(class_means.size(), -1);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    int c = classes[k];
    require(c >= 1 && static_cast<std::size_t>(c) < class_means.size() &&
                !class_means[c].values.empty(),
            "jitter: class without a mean pulse");
    class_index[c] = static_cast<int>(k);
  }
  std::vector<double> peak(class_means.size(), 0.0);
  for (std::size_t c = 1; c < class_means.size(); ++c)
    for (double x : class_means[c].values) peak[c] = std::max(peak[c], x);
  const double sigma_b = baseline_rms(batch);
  const double dt = batch.digitizer.dt();

  std::vector<std::vector<std::vector<double>>> times(
      classes.size(), std::vector<std::vector<double>>(fractions.size()));
  std::vector<std::vector<std::size_t>> misses(
      classes.size(), std::vector<std::size_t>(fractions.size(), 0));
  for (std::size_t i = 0; i < batch.traces.size(); ++i) {
    int label = assignment.labels[i];
    if (label < 1 || static_cast<std::size_t>(label) >= class_index.size())
      continue;
    int k = class_index[label];
    if (k < 0) continue;
    Signal s = to_signal(batch.traces[i], batch.digitizer);
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
      double t = crossing_time(s, fractions[fi] * peak[label], sigma_b,
                               batch.digitizer.pre_trigger);
      if (std::isfinite(t))
        times[k][fi].push_back(t);
      else
        ++misses[k][fi];
    }
  }

  std::vector<JitterCurve> out(classes.size());
  for (std::size_t k = 0; k < classes.size(); ++k) {
    out[k].photon_class = classes[k];
    for (std::size_t fi = 0; fi < fractions.size(); ++fi)
      out[k].points.push_back(fit_crossing_sample(
          std::move(times[k][fi]), fractions[fi], misses[k][fi], dt));
  }
  return out;
}

} // namespace tes
