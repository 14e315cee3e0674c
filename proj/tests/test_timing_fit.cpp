#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "tes/rng.hpp"
#include "tes/timing_fit.hpp"

#include <cmath>

using namespace tes;

static double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

TEST_CASE("scaled complementary error function") {
  // frozen from a 40-digit reference evaluation
  struct Pin { double x, v; };
  const Pin pins[] = {
      {0.0, 1.0},
      {0.1, 0.89645697996912664193},
      {0.5, 0.61569034419292587487},
      {1.0, 0.42758357615580700441},
      {2.0, 0.25539567631050574387},
      {5.0, 0.11070463773306862637},
      {10.0, 0.056140992743822585858},
      {25.0, 0.022549572432641358944},
      {25.5, 0.022108108052519826561},
      {26.0, 0.021683584850562906616},
      {30.0, 0.018795888861416751497},
      {35.35533905932738, 0.015951315783986023161},
      {50.0, 0.0112815362653237725},
      {100.0, 0.0056416137829894329036},
      {-0.5, 1.9523604891825570933},
      {-1.0, 5.0089800807622834663},
      {-2.0, 108.94090438997797241},
      {-3.0, 16205.988853999586625},
  };
  for (const auto& p : pins) CHECK(rel(erfcx(p.x), p.v) < 1e-12);
}

TEST_CASE("EMG density evaluation") {
  // frozen from a 40-digit reference evaluation
  EmgParams p{1.0, 0.0, 1.0, 0.7};
  CHECK(rel(emg_eval(p, -2.0), 0.045025123941764420271) < 1e-12);
  CHECK(rel(emg_eval(p, -0.5), 0.52294500529848607751) < 1e-12);
  CHECK(rel(emg_eval(p, 0.0), 0.77489384877939062707) < 1e-12);
  CHECK(rel(emg_eval(p, 1.0), 0.98268011549264922444) < 1e-12);
  CHECK(rel(emg_eval(p, 3.0), 0.38796370228984570553) < 1e-12);
  CHECK(rel(emg_eval(p, 8.0), 0.011842488825077609732) < 1e-12);

  SUBCASE("second-scale arguments") {
    EmgParams q{1.0, 1e-7, 2e-9, 3e8};
    CHECK(rel(emg_eval(q, 9.5e-8), 2.6027470405675856448e-11) < 1e-11);
    CHECK(rel(emg_eval(q, 1e-7), 1.6460556355685746892e-9) < 1e-11);
    CHECK(rel(emg_eval(q, 1.04e-7), 1.6617666953452776644e-9) < 1e-11);
    CHECK(rel(emg_eval(q, 1.2e-7), 1.4877365927696681088e-11) < 1e-11);
  }

  SUBCASE("extreme tail-to-width ratio stays finite and exact") {
    // tau*sigma = 50; the naive formula overflows around tau*sigma ~ 27
    EmgParams q{1.0, 1e-7, 1e-9, 5e10};
    CHECK(rel(emg_eval(q, 9.8e-8), 2.6016401660056925947e-12) < 1e-10);
    CHECK(rel(emg_eval(q, 1e-7), 1.9992009580853567311e-11) < 1e-10);
    CHECK(rel(emg_eval(q, 1.01e-7), 1.2373027731508704052e-11) < 1e-10);
    CHECK(rel(emg_eval(q, 1.1e-7), 4.8188665813252619637e-33) < 1e-10);
  }

  SUBCASE("no-tail marker is the Gaussian with the shared prefactor") {
    EmgParams q{2.0, 0.0, 3.0, 0.0};
    double peak = 2.0 * 3.0 * std::sqrt(std::acos(-1.0) / 2.0);
    CHECK(rel(emg_eval(q, 0.0), peak) < 1e-14);
    CHECK(rel(emg_eval(q, 3.0) / emg_eval(q, 0.0), std::exp(-0.5)) < 1e-14);
  }

  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(emg_eval({1, 0, 0, 1}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(emg_eval({1, 0, 1, -1}, 0.0), std::invalid_argument);
  }
}

TEST_CASE("EMG distribution function") {
  CHECK(rel(emg_cdf(-2.0, 0, 1, 0.7), 0.004787706327494566076) < 1e-12);
  CHECK(rel(emg_cdf(-0.5, 0, 1, 0.7), 0.099912665787669566161) < 1e-12);
  CHECK(rel(emg_cdf(0.0, 0, 1, 0.7), 0.19086208089890697339) < 1e-12);
  CHECK(rel(emg_cdf(1.0, 0, 1, 0.7), 0.44931209988876223343) < 1e-12);
  CHECK(rel(emg_cdf(3.0, 0, 1, 0.7), 0.84387497786387633091) < 1e-12);
  CHECK(rel(emg_cdf(8.0, 0, 1, 0.7), 0.9952755305024944331) < 1e-12);
  CHECK(rel(emg_cdf(9.8e-8, 1e-7, 1e-9, 5e10), 0.021712227687568934325) < 1e-10);
  CHECK(rel(emg_cdf(1e-7, 1e-7, 1e-9, 5e10), 0.49202434210800698757) < 1e-10);
  CHECK(rel(emg_cdf(1.01e-7, 1e-7, 1e-9, 5e10), 0.83640862216986470069) < 1e-10);
  CHECK(emg_cdf(1.1e-7, 1e-7, 1e-9, 5e10) == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("monotone and normalized") {
    double prev = -1;
    for (int i = -80; i <= 160; ++i) {
      double v = emg_cdf(i * 0.25, 0, 1, 0.7);
      CHECK(v >= prev);
      prev = v;
    }
    CHECK(emg_cdf(-12.0, 0, 1, 0.7) < 1e-10);
    CHECK(emg_cdf(80.0, 0, 1, 0.7) > 1.0 - 1e-10);
  }
}

TEST_CASE("EMG mass matches the analytic normalization") {
  // Simpson integration against A*sigma*sqrt(2 pi)/tau
  EmgParams p{1.0, 0.0, 1.0, 0.7};
  auto mass = [&](double lo, double hi, int n) {
    double h = (hi - lo) / n, s = emg_eval(p, lo) + emg_eval(p, hi);
    for (int i = 1; i < n; ++i) s += emg_eval(p, lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
  };
  double analytic = 1.0 * std::sqrt(2.0 * std::acos(-1.0)) / 0.7;
  CHECK(rel(mass(-14.0, 80.0, 200000), analytic) < 1e-8);

  SUBCASE("no-tail marker mass") {
    p = {1.0, 0.0, 1.0, 0.0};
    CHECK(rel(mass(-14.0, 14.0, 100000), std::acos(-1.0)) < 1e-8);
  }
}

TEST_CASE("EMG width extraction") {
  // frozen from dense-grid + bisection reference at 1e-9 tolerance
  CHECK(rel(emg_fwhm({1, 0, 1, 1}), 2.8908903874172555848) < 5e-9);
  CHECK(rel(emg_fwhm({1, 0, 1, 0.25}), 5.024509582890105598) < 5e-9);
  CHECK(rel(emg_fwhm({1, 0, 1, 0.6}), 3.3524179531772139457) < 5e-9);
  CHECK(rel(emg_fwhm({1, 0, 1, 0.05}), 16.474754319433465372) < 5e-9);
  CHECK(rel(emg_fwhm({1, 0, 1, 200}), 2.3548494784002237782) < 5e-9);
  CHECK(rel(emg_fwhm({1, 5e-7, 2e-9, 3e8}), 6.7048359063544278914e-9) < 5e-9);

  SUBCASE("no-tail marker is exactly Gaussian") {
    CHECK(rel(emg_fwhm({1, 0, 1, 0}), 2.354820045030949382) < 1e-15);
    CHECK(rel(emg_fwhm({1, 0, 2.5e-9, 0}), 2.5e-9 * 2.354820045030949382) < 1e-15);
  }

  SUBCASE("vanishing width leaves the exponential half-life") {
    CHECK(rel(emg_fwhm({1, 0, 1e-6, 1.0}), std::log(2.0)) < 1e-4);
  }

  SUBCASE("tail only widens") {
    for (double tau : {0.05, 0.3, 1.0, 5.0, 40.0, 300.0})
      CHECK(emg_fwhm({1, 0, 1, tau}) >= 2.354820045030949382);
  }

  SUBCASE("monotone in width and tail length") {
    CHECK(emg_fwhm({1, 0, 1.2, 1}) > emg_fwhm({1, 0, 1.0, 1}));
    CHECK(emg_fwhm({1, 0, 1.0, 0.5}) > emg_fwhm({1, 0, 1.0, 1.0}));
  }
}

namespace {

Histogram sample_histogram(std::uint64_t seed, int n_events, double t0, double sigma,
                           double tail_k, double lo, double hi, int nbins) {
  TraceRng rng(seed);
  Histogram h;
  h.edges.resize(nbins + 1);
  h.counts.assign(nbins, 0.0);
  for (int i = 0; i <= nbins; ++i) h.edges[i] = lo + (hi - lo) * i / nbins;
  double bw = (hi - lo) / nbins;
  for (int i = 0; i < n_events; ++i) {
    double t = t0 + sigma * rng.normal();
    if (tail_k > 0) t += rng.expo(tail_k);
    int j = static_cast<int>(std::floor((t - lo) / bw));
    if (j >= 0 && j < nbins) h.counts[j] += 1;
  }
  return h;
}

} // namespace

TEST_CASE("EMG fit recovers known parameters") {
  // t0 = 0, sigma = 2 ns, tail time constant 5 ns (tau = 0.2/ns)
  Histogram h = sample_histogram(314159, 100000, 0.0, 2e-9, 5e-9, -10e-9, 42e-9, 260);
  EmgFit fit = fit_emg(h);
  CHECK(fit.status == FitStatus::converged);
  CHECK(rel(fit.params.sigma, 2e-9) < 0.02);
  CHECK(rel(1.0 / fit.params.tau, 5e-9) < 0.02);
  CHECK(std::abs(fit.params.t0) < 0.1e-9);
  CHECK(fit.reduced_chi2 > 0.5);
  CHECK(fit.reduced_chi2 < 2.0);
  CHECK(fit.fwhm > 2.354820045030949382 * fit.params.sigma);
  CHECK(fit.fwhm_err > 0);
  CHECK(fit.fwhm_err < 0.05 * fit.fwhm);
  CHECK(fit.covariance[2][2] > 0);
  CHECK(std::sqrt(fit.covariance[2][2]) < 0.05 * fit.params.sigma);

  SUBCASE("fitted mass equals the event count") {
    double mass = fit.params.amplitude * fit.params.sigma *
                  std::sqrt(2.0 * std::acos(-1.0)) / fit.params.tau;
    CHECK(rel(mass, 100000.0) < 0.02);
  }

  SUBCASE("shift equivariance") {
    Histogram hs = h;
    const double shift = 3.7e-8;
    for (auto& e : hs.edges) e += shift;
    EmgFit f2 = fit_emg(hs);
    CHECK(std::abs(f2.params.t0 - (fit.params.t0 + shift)) < 1e-6 * fit.params.sigma);
    CHECK(rel(f2.params.sigma, fit.params.sigma) < 1e-6);
    CHECK(rel(f2.params.tau, fit.params.tau) < 1e-6);
    CHECK(rel(f2.fwhm, fit.fwhm) < 1e-6);
  }

  SUBCASE("scale equivariance") {
    Histogram hs = h;
    const double c = 1000.0;
    for (auto& e : hs.edges) e *= c;
    EmgFit f2 = fit_emg(hs);
    CHECK(rel(f2.params.t0, fit.params.t0 * c) < 1e-5);
    CHECK(rel(f2.params.sigma, fit.params.sigma * c) < 1e-6);
    CHECK(rel(f2.params.tau, fit.params.tau / c) < 1e-6);
    CHECK(rel(f2.fwhm, fit.fwhm * c) < 1e-6);
  }
}

TEST_CASE("EMG fit on pure Gaussian data leaves no tail") {
  Histogram h = sample_histogram(271828, 100000, 5e-9, 2e-9, 0.0, -4e-9, 14e-9, 180);
  EmgFit fit = fit_emg(h);
  CHECK(fit.status == FitStatus::converged);
  CHECK(rel(fit.params.sigma, 2e-9) < 0.02);
  double tail_k = fit.params.tau > 0 ? 1.0 / fit.params.tau : 0.0;
  CHECK(tail_k <= 0.05 * fit.params.sigma);
  CHECK(rel(fit.fwhm, 2.354820045030949382 * fit.params.sigma) < 0.01);
}

TEST_CASE("EMG fit flags degenerate width") {
  Histogram h;
  h.edges.resize(11);
  for (int i = 0; i <= 10; ++i) h.edges[i] = i;
  h.counts = {1, 1, 1, 100000, 1, 1, 1, 1, 0, 1};
  EmgFit fit = fit_emg(h);
  CHECK(fit.status == FitStatus::degenerate);
}

TEST_CASE("EMG fit input validation") {
  Histogram h;
  h.edges = {0, 1, 2, 3, 4, 5};
  h.counts = {1, 2, 3, 2, 1};
  CHECK_THROWS_AS(fit_emg(h), std::invalid_argument); // only 5 occupied bins
  h.edges = {0, 1, 1, 3, 4, 5};
  CHECK_THROWS_AS(fit_emg(h), std::invalid_argument);
  h.edges = {0, 1, 2, 3, 4};
  CHECK_THROWS_AS(fit_emg(h), std::invalid_argument);
}

TEST_CASE("random stream known answers") {
  // frozen from an independent implementation of the same generator chain
  SUBCASE("derived stream seeds") {
    CHECK(splitmix64(42 + 1 * 0x9E3779B97F4A7C15ull) == 2949826092126892291ull);
    CHECK(splitmix64(42 + 8 * 0x9E3779B97F4A7C15ull) == 6270620877612482005ull);
    CHECK(splitmix64(123456789 + 1 * 0x9E3779B97F4A7C15ull) == 8832083440362974766ull);
  }
  SUBCASE("raw and converted draws, batch 42 trace 0") {
    TraceRng r = TraceRng::for_trace(42, 0);
    CHECK(r.raw() == 11572511668999661906ull);
    CHECK(r.raw() == 15353713867457212013ull);
    TraceRng r2 = TraceRng::for_trace(42, 0);
    double z1 = r2.normal();
    double z2 = r2.normal();
    CHECK(z1 == doctest::Approx(0.47753280861168916492).epsilon(1e-14));
    CHECK(z2 == doctest::Approx(-0.83932888432593363543).epsilon(1e-14));
    CHECK(r2.expo(1.6e-9) == doctest::Approx(8.5784284344041074733e-10).epsilon(1e-14));
  }
  SUBCASE("raw and converted draws, batch 42 trace 7") {
    TraceRng r = TraceRng::for_trace(42, 7);
    CHECK(r.raw() == 5135703061704051463ull);
    TraceRng r2 = TraceRng::for_trace(42, 7);
    CHECK(r2.normal() == doctest::Approx(-1.3474616784348070225).epsilon(1e-14));
    CHECK(r2.normal() == doctest::Approx(0.86121384671982050262).epsilon(1e-14));
    CHECK(r2.expo(1.6e-9) == doctest::Approx(1.445692385457519364e-9).epsilon(1e-14));
  }
  SUBCASE("capped Poisson sequence, mean 1.3") {
    TraceRng r = TraceRng::for_trace(42, 0);
    const int expect[12] = {3, 3, 3, 0, 0, 3, 0, 0, 3, 0, 2, 2};
    for (int v : expect) CHECK(r.poisson_capped(1.3, 6) == v);
  }
}
