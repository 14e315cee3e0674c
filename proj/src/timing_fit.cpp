#include "tes/timing_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace tes {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kPi = std::numbers::pi;

double gauss_fwhm_coef() {
  static const double v = 2.0 * std::sqrt(2.0 * std::log(2.0));
  return v;
}

} // namespace

double erfcx(double x) {
  if (x < 0.0) {
    // reachable only for moderately negative x; past ~ -26.6 the true value
    // exceeds double range and the inf from exp is the honest answer
    return 2.0 * std::exp(x * x) - erfcx(-x);
  }
  if (x <= 25.0) return std::exp(x * x) * std::erfc(x);
  // asymptotic series, truncation error ~ 1e-13 at x = 25
  double inv2x2 = 1.0 / (2.0 * x * x);
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 8; ++k) {
    term *= -(2 * k - 1) * inv2x2;
    sum += term;
  }
  return sum / (x * std::sqrt(kPi));
}

static void check_params(const EmgParams& p) {
  if (!(p.sigma > 0)) throw std::invalid_argument("sigma must be > 0");
  if (!(p.tau >= 0)) throw std::invalid_argument("tau must be >= 0");
}

double emg_eval(const EmgParams& p, double t) {
  check_params(p);
  double c = p.amplitude * p.sigma * std::sqrt(kPi / 2.0);
  double u = (t - p.t0) / p.sigma;
  if (p.tau == 0.0) return c * std::exp(-0.5 * u * u);
  double s = p.tau * p.sigma;
  double z = (s - u) / kSqrt2;
  if (z >= 0.0) return c * std::exp(-0.5 * u * u) * erfcx(z);
  // here z^2 - u^2/2 = s(s/2 - u) < 0, so the exponent is safe
  return c * std::exp(z * z - 0.5 * u * u) * std::erfc(z);
}

double emg_cdf(double t, double t0, double sigma, double tau) {
  if (!(sigma > 0)) throw std::invalid_argument("sigma must be > 0");
  if (!(tau >= 0)) throw std::invalid_argument("tau must be >= 0");
  double u = (t - t0) / sigma;
  double phi = 0.5 * std::erfc(-u / kSqrt2);
  if (tau == 0.0) return phi;
  double s = tau * sigma;
  double z = (s - u) / kSqrt2;
  double term;
  if (z >= 0.0) term = 0.5 * std::exp(-0.5 * u * u) * erfcx(z);
  else term = 0.5 * std::exp(z * z - 0.5 * u * u) * std::erfc(z);
  return std::clamp(phi - term, 0.0, 1.0);
}

double emg_fwhm(const EmgParams& p) {
  check_params(p);
  if (p.tau == 0.0) return gauss_fwhm_coef() * p.sigma;
  double k = 1.0 / p.tau;
  auto f = [&](double t) { return emg_eval(p, t); };

  // the mode lies right of t0 - sigma; for long tails it drifts right like
  // sigma*sqrt(2 |ln(tau sigma)|), comfortably inside this bracket
  double a = p.t0 - 4.0 * p.sigma;
  double b = p.t0 + 8.0 * p.sigma + 4.0 * k;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  const double tol = p.sigma * 1e-9;
  while (b - a > tol) {
    if (fc > fd) {
      b = d; d = c; fd = fc;
      c = b - g * (b - a); fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + g * (b - a); fd = f(d);
    }
  }
  double mode = 0.5 * (a + b);
  double half = 0.5 * f(mode);

  auto bisect = [&](double in, double out) {
    // f(in) >= half > f(out)
    for (int i = 0; i < 200 && std::abs(out - in) > tol; ++i) {
      double m = 0.5 * (in + out);
      (f(m) >= half ? in : out) = m;
    }
    return 0.5 * (in + out);
  };

  double lo = mode - p.sigma;
  while (f(lo) > half) lo -= p.sigma;
  double left = bisect(lo + p.sigma, lo);

  double step = std::max(p.sigma, 0.7 * k);
  double hi = mode + step;
  while (f(hi) > half) hi += step;
  double right = bisect(hi - step, hi);
  return right - left;
}

namespace {

void model_counts(const Histogram& h, const double x[4], std::vector<double>& mu) {
  // x = {N, t0, sigma, k}; k is the exponential time constant, k = 0 Gaussian
  const size_t nb = h.counts.size();
  mu.resize(nb);
  double tau = (x[3] > 0) ? 1.0 / x[3] : 0.0;
  double prev = emg_cdf(h.edges[0], x[1], x[2], tau);
  for (size_t j = 0; j < nb; ++j) {
    double next = emg_cdf(h.edges[j + 1], x[1], x[2], tau);
    mu[j] = x[0] * (next - prev);
    prev = next;
  }
}

double cost_of(const Histogram& h, const std::vector<double>& w, const double x[4],
               std::vector<double>& mu) {
  model_counts(h, x, mu);
  double s = 0;
  for (size_t j = 0; j < mu.size(); ++j) {
    double r = h.counts[j] - mu[j];
    s += r * r * w[j];
  }
  return s;
}

// Jacobi-scaled Cholesky solve of (A + lam*diag(A)) x = b over the leading
// n x n block; false if not SPD
bool chol_solve(const double a_in[4][4], const double b[4], double lam, int n,
                double out[4]) {
  double d[4];
  for (int i = 0; i < n; ++i) {
    double aii = a_in[i][i] * (1.0 + lam);
    if (!(aii > 0)) return false;
    d[i] = 1.0 / std::sqrt(aii);
  }
  double a[4][4];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      a[i][j] = (i == j) ? 1.0 : a_in[i][j] * d[i] * d[j];

  double l[4][4] = {};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (int m = 0; m < j; ++m) s -= l[i][m] * l[j][m];
      if (i == j) {
        if (!(s > 1e-14)) return false;
        l[i][i] = std::sqrt(s);
      } else {
        l[i][j] = s / l[j][j];
      }
    }
  }
  double y[4];
  for (int i = 0; i < n; ++i) {
    double s = b[i] * d[i];
    for (int m = 0; m < i; ++m) s -= l[i][m] * y[m];
    y[i] = s / l[i][i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (int m = i + 1; m < n; ++m) s -= l[m][i] * out[m];
    out[i] = s / l[i][i];
  }
  for (int i = 0; i < n; ++i) out[i] *= d[i];
  return true;
}

// damped solve over a parameter subset; delta is zero elsewhere
bool solve_direction(const double nrm[4][4], const double grad[4],
                     const int* idx, int m, double lam, double delta[4]) {
  double a[4][4], b[4], sol[4];
  for (int i = 0; i < m; ++i) {
    b[i] = grad[idx[i]];
    for (int j = 0; j < m; ++j) a[i][j] = nrm[idx[i]][idx[j]];
  }
  if (!chol_solve(a, b, lam, m, sol)) return false;
  for (int i = 0; i < 4; ++i) delta[i] = 0;
  for (int i = 0; i < m; ++i) delta[idx[i]] = sol[i];
  return true;
}

// inverse of SPD 4x4 via the scaled Cholesky; false if not SPD
bool inv4(const double a_in[4][4], double inv[4][4]) {
  double e[4], col[4];
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 4; ++i) e[i] = (i == j) ? 1.0 : 0.0;
    if (!chol_solve(a_in, e, 0.0, 4, col)) return false;
    for (int i = 0; i < 4; ++i) inv[i][j] = col[i];
  }
  return true;
}

void jacobian(const Histogram& h, const double x[4],
              std::vector<std::array<double, 4>>& jac) {
  const size_t nb = h.counts.size();
  jac.assign(nb, {});
  std::vector<double> mup, mum;
  double hstep[4] = {
      1e-6 * std::max(std::abs(x[0]), 1.0),
      1e-6 * x[2],
      1e-6 * x[2],
      1e-6 * std::max(x[3], 0.01 * x[2]),
  };
  for (int i = 0; i < 4; ++i) {
    double xp[4] = {x[0], x[1], x[2], x[3]};
    double xm[4] = {x[0], x[1], x[2], x[3]};
    xp[i] += hstep[i];
    xm[i] -= hstep[i];
    if (i == 3 && xm[3] < 0) xm[3] = x[3]; // forward difference at the k >= 0 edge
    if (i == 2 && !(xm[2] > 0)) xm[2] = x[2];
    model_counts(h, xp, mup);
    model_counts(h, xm, mum);
    double denom = xp[i] - xm[i];
    for (size_t j = 0; j < nb; ++j) jac[j][i] = (mup[j] - mum[j]) / denom;
  }
}

} // namespace

EmgFit fit_emg(const Histogram& h) {
  const size_t nb = h.counts.size();
  if (nb == 0 || h.edges.size() != nb + 1)
    throw std::invalid_argument("histogram edges/counts size mismatch");
  for (size_t j = 0; j + 1 < h.edges.size(); ++j)
    if (!(h.edges[j + 1] > h.edges[j]))
      throw std::invalid_argument("histogram edges must be strictly increasing");
  size_t occupied = 0;
  for (double c : h.counts) {
    if (c < 0) throw std::invalid_argument("histogram counts must be nonnegative");
    if (c > 0) ++occupied;
  }
  if (occupied < 6) throw std::invalid_argument("need at least 6 occupied bins");

  auto center = [&h](size_t j) { return 0.5 * (h.edges[j] + h.edges[j + 1]); };
  size_t jmax = 0;
  double total = 0, mean_acc = 0;
  for (size_t j = 0; j < nb; ++j) {
    if (h.counts[j] > h.counts[jmax]) jmax = j;
    total += h.counts[j];
    mean_acc += h.counts[j] * center(j);
  }
  double cmax = h.counts[jmax];
  double mode = center(jmax);
  double mean = mean_acc / total;
  double bw = (h.edges[nb] - h.edges[0]) / static_cast<double>(nb);

  // initialization: mode for t0, left half-width for sigma, right-skew for k
  double lhw = 0;
  for (size_t j = jmax + 1; j-- > 0;) {
    if (h.counts[j] < 0.5 * cmax) {
      lhw = mode - center(j);
      break;
    }
  }
  if (lhw <= 0) lhw = bw;
  double sig0 = std::max(lhw / std::sqrt(2.0 * std::log(2.0)), 0.3 * bw);
  double k0 = std::clamp(std::max(mean - mode, 0.2 * sig0), 1e-3 * bw, 1e3 * bw);

  std::vector<double> w(nb);
  for (size_t j = 0; j < nb; ++j) w[j] = 1.0 / std::max(h.counts[j], 1.0);

  double x[4] = {total, mode, sig0, k0};
  std::vector<double> mu;
  double cost = cost_of(h, w, x, mu);

  std::vector<std::array<double, 4>> jac;
  double nrm[4][4], grad[4];
  bool converged = false;
  int iter = 0;
  double lam = 1e-3;
  const double sigma_floor = 1e-4 * bw;

  for (iter = 1; iter <= 500; ++iter) {
    jacobian(h, x, jac);
    model_counts(h, x, mu);
    for (int i = 0; i < 4; ++i) {
      grad[i] = 0;
      for (int j = 0; j < 4; ++j) nrm[i][j] = 0;
    }
    for (size_t j = 0; j < nb; ++j) {
      double r = h.counts[j] - mu[j];
      for (int i = 0; i < 4; ++i) {
        grad[i] += jac[j][i] * r * w[j];
        for (int m = i; m < 4; ++m) nrm[i][m] += jac[j][i] * jac[j][m] * w[j];
      }
    }
    for (int i = 0; i < 4; ++i)
      for (int m = 0; m < i; ++m) nrm[i][m] = nrm[m][i];

    double xn[4];
    double newcost = 0;
    bool accepted = false;
    bool any_solve = false;
    const int full[4] = {0, 1, 2, 3};
    const int reduced[3] = {0, 1, 2};
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      double delta[4];
      bool ok = solve_direction(nrm, grad, full, 4, lam, delta);
      // active set: near k = 0 the t0 and k columns are collinear and a
      // step into the bound, once clamped, can point uphill; re-solve with
      // k frozen instead
      if (ok && x[3] <= 0.0 && delta[3] < 0.0)
        ok = solve_direction(nrm, grad, reduced, 3, lam, delta);
      if (ok) {
        any_solve = true;
        for (int i = 0; i < 4; ++i) xn[i] = x[i] + delta[i];
        xn[0] = std::max(xn[0], 1e-6 * total);
        xn[2] = std::max(xn[2], sigma_floor);
        xn[3] = std::max(xn[3], 0.0);
        bool moved = false;
        for (int i = 0; i < 4; ++i) moved = moved || xn[i] != x[i];
        if (moved) {
          newcost = cost_of(h, w, xn, mu);
          // demand a decrease clear of summation rounding so a stalled
          // direction cannot masquerade as progress
          if (newcost < cost * (1.0 - 1e-12)) accepted = true;
        }
      }
      if (!accepted) lam = std::max(lam * 8.0, 1e-8);
    }
    if (!accepted) {
      converged = any_solve; // damping escalation exhausted: stationary point
      break;
    }
    lam = std::max(lam * 0.25, 1e-12);
    double rel = 0;
    double scale[4] = {std::max(std::abs(x[0]), 1.0), x[2], x[2],
                       std::max(x[2], x[3])};
    for (int i = 0; i < 4; ++i)
      rel = std::max(rel, std::abs(xn[i] - x[i]) / scale[i]);
    for (int i = 0; i < 4; ++i) x[i] = xn[i];
    cost = newcost;
    if (rel <= 1e-10) {
      converged = true;
      break;
    }
  }

  EmgFit fit;
  fit.iterations = std::min(iter, 500);

  double n_fit = x[0], t0 = x[1], sg = x[2], k = x[3];
  const double keps = 1e-12 * sg;
  bool tail = k > keps;
  fit.params.t0 = t0;
  fit.params.sigma = sg;
  if (tail) {
    fit.params.tau = 1.0 / k;
    fit.params.amplitude = n_fit / (sg * std::sqrt(2.0 * kPi) * k);
  } else {
    fit.params.tau = 0.0;
    fit.params.amplitude = n_fit / (kPi * sg * sg);
  }

  bool finite = std::isfinite(cost);
  for (int i = 0; i < 4; ++i) finite = finite && std::isfinite(x[i]);
  if (!finite || sg <= 1.5 * sigma_floor || sg < 0.01 * bw)
    fit.status = FitStatus::degenerate;
  else
    fit.status = converged ? FitStatus::converged : FitStatus::max_iter;

  // covariance of (N, t0, sigma, k) from the final normal equations,
  // then delta method to (A, t0, sigma, tau)
  jacobian(h, x, jac);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) nrm[i][j] = 0;
  for (size_t j = 0; j < nb; ++j)
    for (int i = 0; i < 4; ++i)
      for (int m = i; m < 4; ++m) nrm[i][m] += jac[j][i] * jac[j][m] * w[j];
  for (int i = 0; i < 4; ++i)
    for (int m = 0; m < i; ++m) nrm[i][m] = nrm[m][i];
  double cin[4][4];
  bool have_cov = inv4(nrm, cin);

  if (have_cov) {
    double t[4][4] = {};
    t[0][0] = fit.params.amplitude / n_fit;
    t[0][2] = -fit.params.amplitude / sg;
    t[0][3] = tail ? -fit.params.amplitude / k : 0.0;
    t[1][1] = 1.0;
    t[2][2] = 1.0;
    t[3][3] = tail ? -1.0 / (k * k) : 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double s = 0;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) s += t[i][a] * cin[a][b] * t[j][b];
        fit.covariance[i][j] = s;
      }
  }

  fit.fwhm = emg_fwhm(fit.params);
  if (have_cov) {
    // propagate through (sigma, k)
    EmgParams q = fit.params;
    double hs = 1e-5 * sg;
    q.sigma = sg + hs;
    double fp = emg_fwhm(q);
    q.sigma = sg - hs;
    double fm = emg_fwhm(q);
    q.sigma = sg;
    double dfds = (fp - fm) / (2 * hs);
    double dfdk = 0;
    if (tail) {
      double hk = 1e-5 * k;
      q.tau = 1.0 / (k + hk);
      fp = emg_fwhm(q);
      q.tau = 1.0 / (k - hk);
      fm = emg_fwhm(q);
      dfdk = (fp - fm) / (2 * hk);
    }
    double var = dfds * dfds * cin[2][2] + dfdk * dfdk * cin[3][3] +
                 2 * dfds * dfdk * cin[2][3];
    fit.fwhm_err = std::sqrt(std::max(var, 0.0));
  }

  model_counts(h, x, mu);
  double chi5 = 0;
  int n5 = 0;
  for (size_t j = 0; j < nb; ++j) {
    if (h.counts[j] >= 5) {
      double r = h.counts[j] - mu[j];
      chi5 += r * r / h.counts[j];
      ++n5;
    }
  }
  fit.dof = n5 - 4;
  fit.reduced_chi2 = fit.dof > 0 ? chi5 / fit.dof
                                 : std::numeric_limits<double>::quiet_NaN();
  return fit;
}

} // namespace tes
