#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "tes/pulse_sim.hpp"
#include "tes/rng.hpp"
#include "tes/tesb.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

using namespace tes;

static double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

TEST_CASE("amplitude compression map") {
  CHECK(compress_amplitude(0.0, 0.25) == 0.0);
  // compression 0 is the identity
  for (double x : {0.1, 1.0, 2.5, 6.0}) CHECK(compress_amplitude(x, 0.0) == x);

  // reference table s*sin(n/s), s = 4, frozen
  const double a_ref[6] = {0.98962, 1.91770, 2.72656, 3.36588, 3.79594, 3.98998};
  for (int n = 1; n <= 6; ++n) {
    double a = compress_amplitude(n, 0.25);
    CHECK(std::abs(a - a_ref[n - 1]) < 5e-6);
    CHECK(rel(a, 4.0 * std::sin(n / 4.0)) < 1e-15);
  }

  // strictly monotone below the cap, with strictly shrinking increments
  double prev = 0.0, prev_gap = 1e9;
  for (int n = 1; n <= 6; ++n) {
    double a = compress_amplitude(n, 0.25);
    CHECK(a > prev);
    CHECK(a - prev < prev_gap);
    prev_gap = a - prev;
    prev = a;
  }

  // saturation at s*pi/2 and beyond
  CHECK(compress_amplitude(4.0 * 3.14159265358979 / 2.0 + 1.0, 0.25) == 4.0);
  CHECK_THROWS_AS(compress_amplitude(-0.1, 0.25), std::invalid_argument);
}

TEST_CASE("shape model solves the configured targets") {
  ShapeModel m(reference_shape());
  REQUIRE(m.n_classes() == 3);

  // frozen solution of the reference calibration
  struct Pin { double d, tau_f_ns, peak; };
  const Pin pins[3] = {
      {0.683859, 3659.21, 0.69046},
      {0.616030, 3468.21, 0.71244},
      {0.486822, 2843.08, 0.75577},
  };
  for (int n = 1; n <= 3; ++n) {
    CHECK(rel(m.mix(n), pins[n - 1].d) < 1e-3);
    CHECK(rel(m.tau_fall(n) * 1e9, pins[n - 1].tau_f_ns) < 1e-3);
    CHECK(rel(m.peak(n), pins[n - 1].peak) < 1e-3);
  }

  // photon numbers above the table reuse the last class shape
  for (double t : {10e-9, 60e-9, 400e-9}) {
    CHECK(m.unit_value(4, t) == m.unit_value(3, t));
    CHECK(m.unit_value(6, t) == m.unit_value(3, t));
  }

  // causality
  CHECK(ideal_pulse(1, m, -1e-9) == 0.0);
  CHECK(ideal_pulse(1, m, 0.0) == 0.0);
  CHECK(ideal_pulse(1, m, 5e-9) > 0.0);

  CHECK_THROWS_AS(m.unit_value(0, 1e-9), std::invalid_argument);
  CHECK_THROWS_AS(m.unit_value(7, 1e-9), std::invalid_argument);
}

// dense-grid 10-90% rise and 1/e decay with linear interpolation
static void measure_shape(const ShapeModel& m, int n, double& rise, double& decay) {
  const double dt = 0.05e-9;
  const int len = 120000;
  std::vector<double> v(len);
  int ip = 0;
  for (int j = 0; j < len; ++j) {
    v[j] = m.pulse(n, j * dt);
    if (v[j] > v[ip]) ip = j;
  }
  auto crossing_up = [&](double level) {
    for (int j = 1; j <= ip; ++j)
      if (v[j] >= level)
        return dt * (j - 1 + (level - v[j - 1]) / (v[j] - v[j - 1]));
    return -1.0;
  };
  double peak = v[ip];
  rise = crossing_up(0.9 * peak) - crossing_up(0.1 * peak);
  decay = -1.0;
  for (int j = ip + 1; j < len; ++j) {
    if (v[j] <= peak / 2.718281828459045) {
      decay = dt * (j - 1 + (peak / 2.718281828459045 - v[j - 1]) / (v[j] - v[j - 1])) -
              dt * ip;
      break;
    }
  }
}

TEST_CASE("ideal pulse rise and decay hit the published profile") {
  ShapeModel m(reference_shape());
  const double rise_ref[3] = {24.8e-9, 25.6e-9, 27.2e-9};
  const double decay_ref[3] = {759e-9, 1278e-9, 1692e-9};
  for (int n = 1; n <= 3; ++n) {
    double rise, decay;
    measure_shape(m, n, rise, decay);
    CHECK(rel(rise, rise_ref[n - 1]) < 0.02);
    CHECK(rel(decay, decay_ref[n - 1]) < 0.02);
  }

  // peak pulse heights strictly increase with photon number
  double prev = 0.0;
  for (int n = 1; n <= 6; ++n) {
    double pk = 0.0;
    for (int j = 0; j < 4000; ++j) pk = std::max(pk, m.pulse(n, j * 0.1e-9));
    CHECK(pk > prev);
    prev = pk;
  }
}

TEST_CASE("shape parameter validation") {
  PulseShapeParams p = reference_shape();
  p.classes[1].decay_1e = p.classes[0].decay_1e; // not strictly increasing
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  p = reference_shape();
  p.n_max = 2;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  p = reference_shape();
  p.compression = -1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  p = reference_shape();
  p.ringing.fraction = 0.05; // on, but without frequency/damping
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.ringing.frequency = 5e6;
  p.ringing.damping = 200e-9;
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("ringing rider perturbs the waveform only when enabled") {
  PulseShapeParams p = reference_shape();
  p.ringing.fraction = 0.05;
  p.ringing.frequency = 5e6;
  p.ringing.damping = 300e-9;
  ShapeModel plain(reference_shape()), ringing(p);
  bool differs = false;
  for (int j = 1; j < 3000; ++j) {
    double t = j * 1e-9;
    double d = std::abs(ringing.pulse(1, t) - plain.pulse(1, t));
    if (d > 1e-12) differs = true;
    CHECK(d <= 0.05 * plain.peak(1) * plain.amplitude(1) + 1e-12);
  }
  CHECK(differs);
  CHECK(ringing.pulse(1, -1e-9) == 0.0);
}

TEST_CASE("mid-tread quantization") {
  DigitizerParams d;
  d.validate();
  CHECK(d.lsb() == doctest::Approx(0.0390625).epsilon(1e-15));
  CHECK(d.code_min() == -128);
  CHECK(d.code_max() == 127);

  std::uint64_t clipped = 0;
  TraceRng rng(99);
  for (int i = 0; i < 5000; ++i) {
    double v = (rng.uniform() - 0.5) * 9.8; // inside the code range
    std::int16_t code = quantize(v, d, clipped);
    CHECK(std::abs(code * d.lsb() - v) <= 0.5 * d.lsb() + 1e-12);
  }
  CHECK(clipped == 0);
  CHECK(quantize(7.3, d, clipped) == 127);
  CHECK(clipped == 1);
  CHECK(quantize(-7.3, d, clipped) == -128);
  CHECK(clipped == 2);

  DigitizerParams bad = d;
  bad.bits = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = d;
  bad.pre_trigger = bad.trace_length;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("simulate_batch determinism and stream independence") {
  ShapeModel m(reference_shape());
  DeviceParams dev = reference_device();
  SourceParams src;
  src.rng_seed = 4242;
  src.energy_smearing = 0.14; // exercise every draw path
  NoiseParams noise;
  DigitizerParams digi;
  digi.trace_length = 400;
  digi.pre_trigger = 125;

  TraceBatch a = simulate_batch(src, m, dev, noise, digi, 60);
  TraceBatch b = simulate_batch(src, m, dev, noise, digi, 60);
  REQUIRE(a.traces.size() == 60);
  CHECK(a.clipped_samples == b.clipped_samples);
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    CHECK(a.traces[i].samples == b.traces[i].samples);
    CHECK(a.traces[i].t0_true == b.traces[i].t0_true);
    CHECK(a.traces[i].n_true == b.traces[i].n_true);
  }

  // per-trace streams: a shorter run is a prefix of a longer one
  TraceBatch c = simulate_batch(src, m, dev, noise, digi, 25);
  for (std::size_t i = 0; i < c.traces.size(); ++i)
    CHECK(c.traces[i].samples == a.traces[i].samples);

  src.rng_seed = 4243;
  TraceBatch d = simulate_batch(src, m, dev, noise, digi, 60);
  bool same = true;
  for (std::size_t i = 0; i < d.traces.size() && same; ++i)
    same = d.traces[i].samples == a.traces[i].samples;
  CHECK_FALSE(same);
}

TEST_CASE("zero mean photon number gives pure noise traces") {
  ShapeModel m(reference_shape());
  SourceParams src;
  src.mean_photon_number = 0.0;
  src.rng_seed = 5;
  NoiseParams noise;
  DigitizerParams digi;
  digi.trace_length = 200;
  digi.pre_trigger = 50;
  TraceBatch b = simulate_batch(src, m, reference_device(), noise, digi, 40);
  for (const Trace& tr : b.traces) {
    CHECK(tr.n_true == 0);
    CHECK(tr.t0_true == 0.0);
  }
}

TEST_CASE("noise-only sample RMS and correlation match the model") {
  ShapeModel m(reference_shape());
  SourceParams src;
  src.mean_photon_number = 0.0;
  src.rng_seed = 31;
  NoiseParams noise;
  DigitizerParams digi; // 3125 samples
  TraceBatch b = simulate_batch(src, m, reference_device(), noise, digi, 320);

  // one million samples: quantized RMS within 2% of the configured total
  double s1 = 0, s2 = 0, lag = 0;
  std::size_t n = 0, nlag = 0;
  const double lsb = digi.lsb();
  for (const Trace& tr : b.traces) {
    double prev = 0;
    for (std::size_t j = 0; j < tr.samples.size(); ++j) {
      double v = tr.samples[j] * lsb;
      s1 += v;
      s2 += v * v;
      if (j > 0) {
        lag += v * prev;
        ++nlag;
      }
      prev = v;
      ++n;
    }
  }
  REQUIRE(n >= 1000000);
  double mean = s1 / n;
  double var = s2 / n - mean * mean;
  CHECK(rel(std::sqrt(var), noise.total_rms) < 0.02);

  // lag-1 autocorrelation: slow AR(1) share of the total variance
  double a = std::exp(-digi.dt() / noise.slow_tau);
  double rho_model = a * (noise.total_rms * noise.total_rms -
                          noise.white_rms * noise.white_rms) /
                     (noise.total_rms * noise.total_rms);
  double rho = (lag / nlag - mean * mean) / var;
  CHECK(std::abs(rho - rho_model) < 0.02);
}

TEST_CASE("photon-number frequencies follow the conditioned distribution") {
  // distribution of a Poisson(1.3) draw conditioned to <= 6, frozen from an
  // exact reference evaluation
  const double pmf[7] = {
      0.27264182543662644511, 0.35443437306761437864, 0.23038234249394934612,
      0.09983234841404471665, 0.032445513234564532911, 0.0084358334409867785569,
      0.0018277639122138020207,
  };
  ShapeModel m(reference_shape());
  SourceParams src;
  src.rng_seed = 77;
  NoiseParams noise;
  DigitizerParams digi;
  digi.trace_length = 16; // photon draw happens before waveform synthesis
  digi.pre_trigger = 4;
  const std::size_t n_traces = 20000;
  TraceBatch b = simulate_batch(src, m, reference_device(), noise, digi, n_traces);

  std::size_t counts[7] = {};
  for (const Trace& tr : b.traces) {
    REQUIRE(tr.n_true >= 0);
    REQUIRE(tr.n_true <= 6);
    ++counts[tr.n_true];
  }
  for (int k = 0; k <= 6; ++k) {
    double expect = n_traces * pmf[k];
    double sd = std::sqrt(n_traces * pmf[k] * (1.0 - pmf[k]));
    CHECK(std::abs(counts[k] - expect) <= 3.0 * sd);
  }
}

TEST_CASE("arrival delay scales as the first of n absorptions") {
  ShapeModel m(reference_shape());
  SourceParams src;
  src.rng_seed = 11;
  NoiseParams noise;
  DigitizerParams digi;
  digi.trace_length = 16;
  digi.pre_trigger = 4;
  TraceBatch b = simulate_batch(src, m, reference_device(), noise, digi, 30000);

  double sum[4] = {}, cnt[4] = {};
  for (const Trace& tr : b.traces) {
    if (tr.n_true >= 1 && tr.n_true <= 3) {
      sum[tr.n_true] += tr.t0_true - src.arrival_offset;
      cnt[tr.n_true] += 1;
    }
  }
  for (int k = 1; k <= 3; ++k) {
    REQUIRE(cnt[k] > 500);
    double mean = sum[k] / cnt[k];
    double expect = src.arrival_exp / k; // Gaussian part has zero mean
    double sd = std::hypot(src.arrival_sigma, expect) / std::sqrt(cnt[k]);
    CHECK(std::abs(mean - expect) < 4.0 * sd);
  }
}

TEST_CASE("mean simulated pulse reproduces the noiseless shape") {
  ShapeModel m(reference_shape());
  SourceParams src;
  src.rng_seed = 2718;
  src.arrival_sigma = 0.0; // frame-locked arrival for the pointwise bound
  src.arrival_exp = 0.0;
  NoiseParams noise;
  DigitizerParams digi;
  digi.trace_length = 1250;
  digi.pre_trigger = 125;
  TraceBatch b = simulate_batch(src, m, reference_device(), noise, digi, 30000);

  const double lsb = digi.lsb();
  std::vector<double> mean(digi.trace_length, 0.0);
  std::size_t n1 = 0;
  for (const Trace& tr : b.traces) {
    if (tr.n_true != 1) continue;
    ++n1;
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += tr.samples[j] * lsb;
  }
  REQUIRE(n1 >= 10000);
  double bound = noise.total_rms / std::sqrt(static_cast<double>(n1));
  double dev2 = 0, worst = 0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    mean[j] /= static_cast<double>(n1);
    double ideal = ideal_pulse(1, m, j * digi.dt() - src.arrival_offset);
    double dv = std::abs(mean[j] - ideal);
    dev2 += dv * dv;
    worst = std::max(worst, dv);
  }
  // statistical agreement at the configured noise floor: RMS of the
  // pointwise deviations within the 3-sigma budget, no point beyond 6
  CHECK(std::sqrt(dev2 / mean.size()) <= 3.0 * bound);
  CHECK(worst <= 6.0 * bound);
}

TEST_CASE("clipping is counted") {
  ShapeModel m(reference_shape());
  SourceParams src;
  src.rng_seed = 9;
  NoiseParams noise;
  DigitizerParams digi;
  digi.full_scale = 1.0; // +-0.5: photon pulses exceed the range
  digi.trace_length = 400;
  digi.pre_trigger = 125;
  TraceBatch b = simulate_batch(src, m, reference_device(), noise, digi, 50);
  CHECK(b.clipped_samples > 0);
  for (const Trace& tr : b.traces)
    for (std::int16_t s : tr.samples) {
      CHECK(s >= digi.code_min());
      CHECK(s <= digi.code_max());
    }
}

TEST_CASE("simulation parameter validation") {
  ShapeModel m(reference_shape());
  DeviceParams dev = reference_device();
  DigitizerParams digi;
  digi.trace_length = 64;
  digi.pre_trigger = 16;

  SourceParams src;
  src.mean_photon_number = -1;
  CHECK_THROWS_AS(simulate_batch(src, m, dev, NoiseParams{}, digi, 1),
                  std::invalid_argument);

  NoiseParams bad;
  bad.white_rms = 0.1;
  bad.total_rms = 0.05;
  CHECK_THROWS_AS(simulate_batch(SourceParams{}, m, dev, bad, digi, 1),
                  std::invalid_argument);

  // nonzero noise must at least cover the quantizer's own contribution
  NoiseParams thin;
  thin.white_rms = 0.002;
  thin.total_rms = 0.003;
  CHECK_THROWS_AS(simulate_batch(SourceParams{}, m, dev, thin, digi, 1),
                  std::invalid_argument);
}

static std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

TEST_CASE("trace file round trip and golden header") {
  TraceBatch b;
  b.digitizer.sample_rate = 1.25e9;
  b.digitizer.bits = 8;
  b.digitizer.full_scale = 10.0;
  b.digitizer.trace_length = 4;
  b.digitizer.pre_trigger = 0;
  b.has_truth = true;
  b.traces.resize(2);
  b.traces[0].samples = {1, -2, 3, -4};
  b.traces[0].t0_true = 1.0e-7;
  b.traces[0].n_true = 1;
  b.traces[1].samples = {127, -128, 0, 17};
  b.traces[1].t0_true = 9.96e-8;
  b.traces[1].n_true = 2;
  for (Trace& tr : b.traces) tr.dt = 1.0 / b.digitizer.sample_rate;

  const std::string path = "/tmp/tes_test_roundtrip.tesb";
  write_tesb(path, b);

  // header bytes frozen from the format definition
  const std::string golden =
      "5445534201000108000000205fa0d24100000000000024400200000004000000";
  std::string raw = file_bytes(path);
  REQUIRE(raw.size() == 32 + 2 * (8 + 9));
  std::string head;
  for (int i = 0; i < 32; ++i) {
    char buf[3];
    std::snprintf(buf, sizeof buf, "%02x", static_cast<unsigned char>(raw[i]));
    head += buf;
  }
  CHECK(head == golden);

  TraceBatch r = read_tesb(path);
  CHECK(r.has_truth);
  CHECK(r.digitizer.sample_rate == b.digitizer.sample_rate);
  CHECK(r.digitizer.bits == 8);
  CHECK(r.digitizer.full_scale == 10.0);
  CHECK(r.digitizer.trace_length == 4);
  REQUIRE(r.traces.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r.traces[i].samples == b.traces[i].samples);
    CHECK(r.traces[i].t0_true == b.traces[i].t0_true);
    CHECK(r.traces[i].n_true == b.traces[i].n_true);
    CHECK(r.traces[i].dt == doctest::Approx(0.8e-9).epsilon(1e-12));
  }
}

TEST_CASE("trace file error handling") {
  const std::string path = "/tmp/tes_test_bad.tesb";
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOPE-this-is-not-a-trace-file-at-all";
  }
  CHECK_THROWS_AS(read_tesb(path), std::runtime_error);

  // valid file, then truncate it
  TraceBatch b;
  b.digitizer.trace_length = 8;
  b.digitizer.pre_trigger = 0;
  b.has_truth = false;
  b.traces.resize(3);
  for (Trace& tr : b.traces) {
    tr.samples.assign(8, 5);
    tr.dt = b.digitizer.dt();
  }
  write_tesb(path, b);
  std::string raw = file_bytes(path);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(raw.data(), static_cast<std::streamsize>(raw.size() - 7));
  }
  CHECK_THROWS_AS(read_tesb(path), std::runtime_error);

  // unsupported version
  raw[4] = 2;
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  }
  CHECK_THROWS_AS(read_tesb(path), std::runtime_error);

  CHECK_THROWS_AS(read_tesb("/tmp/tes_no_such_file.tesb"), std::runtime_error);

  // truth-less round trip flags the absence
  write_tesb(path, b);
  TraceBatch r = read_tesb(path);
  CHECK_FALSE(r.has_truth);
  CHECK(r.traces[0].n_true == -1);
}
