#ifndef TES_TIMING_FIT_HPP
#define TES_TIMING_FIT_HPP

// Exponentially-modified-Gaussian fitting of crossing-time histograms and
// FWHM extraction.

#include <array>
#include <vector>

namespace tes {

// Scaled complementary error function exp(x^2)*erfc(x), finite for all x
// where the result is representable. Direct product below x = 25, asymptotic
// series above (the direct product underflows/overflows past x ~ 26.6).
double erfcx(double x);

struct EmgParams {
  double amplitude; // A, counts-scale
  double t0;        // Gaussian center, s
  double sigma;     // Gaussian width, s
  double tau;       // exponential RATE, 1/s; tau == 0 is the conventional
                    // no-tail marker (pure Gaussian with the same prefactor)
};

// f(t) = A*sigma*sqrt(pi/2) * exp(tau^2 sigma^2/2) * exp(-tau (t-t0))
//        * erfc((-(t-t0) + tau sigma^2)/(sqrt(2) sigma)),
// evaluated through erfcx so large tau*sigma cannot overflow.
// tau == 0 evaluates A*sigma*sqrt(pi/2)*exp(-(t-t0)^2/(2 sigma^2)).
double emg_eval(const EmgParams& p, double t);

// CDF of the unit-mass density proportional to emg_eval; tau == 0 gives the
// Gaussian CDF. Total mass of emg_eval itself is A*sigma*sqrt(2 pi)/tau
// (A*sigma^2*pi at the tau == 0 marker).
double emg_cdf(double t, double t0, double sigma, double tau);

// Numeric FWHM: golden-section mode search then bisection for the half-height
// roots, absolute tolerance sigma*1e-9. tau == 0 returns 2 sqrt(2 ln 2) sigma.
double emg_fwhm(const EmgParams& p);

struct Histogram {
  std::vector<double> edges;  // size counts.size()+1, strictly increasing
  std::vector<double> counts;
};

enum class FitStatus { converged, max_iter, degenerate };

struct EmgFit {
  EmgParams params{};
  std::array<std::array<double, 4>, 4> covariance{}; // (A, t0, sigma, tau) order
  double fwhm = 0;       // s
  double fwhm_err = 0;   // covariance-propagated, s
  double reduced_chi2 = 0; // over bins with >= 5 counts; NaN when undefined
  FitStatus status = FitStatus::degenerate;
  int iterations = 0;
  int dof = 0;           // occupied-bin count (>= 5 events) minus 4
};

// Weighted least squares of the EMG to the histogram (Poisson weights,
// variance = max(count, 1)); bin contents are modelled by the exact bin
// integral of the density. Adaptively damped Gauss-Newton with monotone cost
// decrease and an active-set reduction at the tau boundary, relative step
// tolerance 1e-10, at most 500 iterations. The exponential component is
// parametrized internally by the time constant k = 1/tau (k = 0 is the
// smooth Gaussian limit), so near-Gaussian data poses no boundary problem.
// Precondition: at least 6 occupied bins.
EmgFit fit_emg(const Histogram& h);

} // namespace tes

#endif
