#include "gnas/dual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace gnas::dual {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

std::vector<double> matvec(const std::vector<double>& a, const std::vector<double>& x, int n) {
  std::vector<double> y(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) y[i] += a[i * n + j] * x[j];
  return y;
}

std::vector<double> matvec_t(const std::vector<double>& a, const std::vector<double>& x, int n) {
  std::vector<double> y(n, 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) y[j] += a[i * n + j] * x[i];
  return y;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

// LU with partial pivoting; throws on (near-)singular matrices.
struct Lu {
  int n;
  std::vector<double> a;
  std::vector<int> piv;

  explicit Lu(std::vector<double> m, int nn) : n(nn), a(std::move(m)), piv(nn) {
    std::iota(piv.begin(), piv.end(), 0);
    for (int k = 0; k < n; ++k) {
      int p = k;
      for (int i = k + 1; i < n; ++i)
        if (std::fabs(a[i * n + k]) > std::fabs(a[p * n + k])) p = i;
      if (std::fabs(a[p * n + k]) < 1e-13) throw ContractViolation("lu: singular matrix");
      if (p != k) {
        for (int j = 0; j < n; ++j) std::swap(a[p * n + j], a[k * n + j]);
        std::swap(piv[p], piv[k]);
      }
      for (int i = k + 1; i < n; ++i) {
        a[i * n + k] /= a[k * n + k];
        for (int j = k + 1; j < n; ++j) a[i * n + j] -= a[i * n + k] * a[k * n + j];
      }
    }
  }

  std::vector<double> solve(const std::vector<double>& b) const {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = b[piv[i]];
    for (int i = 1; i < n; ++i)
      for (int j = 0; j < i; ++j) x[i] -= a[i * n + j] * x[j];
    for (int i = n - 1; i >= 0; --i) {
      for (int j = i + 1; j < n; ++j) x[i] -= a[i * n + j] * x[j];
      x[i] /= a[i * n + i];
    }
    return x;
  }
};

void check_instance(const DualInstance& inst) {
  GNAS_CHECK(inst.n >= 1, "dual: instance size must be >= 1");
  GNAS_CHECK(static_cast<int>(inst.psi.size()) == inst.n * inst.n, "dual: psi must be n x n");
  GNAS_CHECK(static_cast<int>(inst.y1.size()) == inst.n && static_cast<int>(inst.y2.size()) == inst.n,
             "dual: label/target length mismatch");
  GNAS_CHECK(inst.w1 != 0.0, "dual: w1 must be nonzero");
  for (double y : inst.y1) GNAS_CHECK(y == 1.0 || y == -1.0, "dual: labels must be +/-1");
}

void check_phi(const std::vector<double>& phi, const DualInstance& inst) {
  GNAS_CHECK(static_cast<int>(phi.size()) == inst.n, "dual: phi length mismatch");
  for (double p : phi) GNAS_CHECK(p > 0.0 && p < 1.0, "dual: phi must lie strictly in (0,1)");
}

}  // namespace

std::vector<double> sym_eigenvalues(std::vector<double> a, int n) {
  // cyclic Jacobi rotations; fine at the sizes used here
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (tau >= 0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (int i = 0; i < n; ++i) ev[i] = a[i * n + i];
  std::sort(ev.begin(), ev.end());
  return ev;
}

double condition_number(const std::vector<double>& a, int n) {
  std::vector<double> ata(n * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += a[k * n + i] * a[k * n + j];
      ata[i * n + j] = s;
    }
  const std::vector<double> ev = sym_eigenvalues(std::move(ata), n);
  if (ev.front() <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(ev.back() / ev.front());
}

DualInstance random_instance(int n, uint64_t seed) {
  GNAS_CHECK(n >= 1, "random_instance: n must be >= 1");
  Rng rng = make_rng(seed, 0xd0a1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uw1(0.5, 2.0);
  std::uniform_real_distribution<double> uw2(-1.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);

  DualInstance inst;
  inst.n = n;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    inst.psi.assign(n * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) inst.psi[i * n + j] = (i == j ? 1.0 : 0.0) + 0.1 * gauss(rng);
    if (condition_number(inst.psi, n) <= 100.0) break;
    if (attempt == 999) throw ContractViolation("random_instance: could not condition psi");
  }
  inst.w1 = uw1(rng);
  inst.w2 = uw2(rng);
  inst.y1.resize(n);
  inst.y2.resize(n);
  for (int i = 0; i < n; ++i) {
    inst.y1[i] = coin(rng) ? 1.0 : -1.0;
    inst.y2[i] = uw2(rng);
  }
  return inst;
}

double primal_loss(const std::vector<double>& theta, const DualInstance& inst) {
  check_instance(inst);
  GNAS_CHECK(static_cast<int>(theta.size()) == inst.n, "primal_loss: theta length mismatch");
  const std::vector<double> pt = matvec(inst.psi, theta, inst.n);
  double loss = 0.0;
  for (int i = 0; i < inst.n; ++i) {
    const double h1 = pt[i] * inst.w1, h2 = pt[i] * inst.w2;
    loss += softplus(-inst.y1[i] * h1);
    loss += 0.5 * (h2 - inst.y2[i]) * (h2 - inst.y2[i]);
    loss += 0.5 * h1 * h1 - 0.5 * h2 * h2;
  }
  return loss;
}

std::vector<double> primal_gradient(const std::vector<double>& theta, const DualInstance& inst) {
  check_instance(inst);
  const int n = inst.n;
  const std::vector<double> pt = matvec(inst.psi, theta, n);
  std::vector<double> r(n);
  for (int i = 0; i < n; ++i) {
    const double h1 = pt[i] * inst.w1;
    // d/d(pt): -w1*y1*sigmoid(-y1*h1) + w2*(w2*pt - y2) + w1^2*pt - w2^2*pt
    r[i] = -inst.w1 * inst.y1[i] * sigmoid(-inst.y1[i] * h1) - inst.w2 * inst.y2[i] +
           inst.w1 * inst.w1 * pt[i];
  }
  return matvec_t(inst.psi, r, n);
}

std::vector<double> primal_hessian(const std::vector<double>& theta, const DualInstance& inst) {
  check_instance(inst);
  const int n = inst.n;
  const std::vector<double> pt = matvec(inst.psi, theta, n);
  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) {
    const double s = sigmoid(-inst.y1[i] * pt[i] * inst.w1);
    d[i] = inst.w1 * inst.w1 * (1.0 + s * (1.0 - s));
  }
  std::vector<double> h(n * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += inst.psi[k * n + i] * d[k] * inst.psi[k * n + j];
      h[i * n + j] = s;
    }
  return h;
}

double saddle_value(const std::vector<double>& phi, const std::vector<double>& theta,
                    const DualInstance& inst) {
  check_instance(inst);
  check_phi(phi, inst);
  GNAS_CHECK(static_cast<int>(theta.size()) == inst.n, "saddle_value: theta length mismatch");
  const std::vector<double> pt = matvec(inst.psi, theta, inst.n);
  double h = 0.0;
  for (int i = 0; i < inst.n; ++i) {
    const double h1 = pt[i] * inst.w1, h2 = pt[i] * inst.w2;
    h += -(phi[i] * std::log(phi[i]) + (1.0 - phi[i]) * std::log(1.0 - phi[i]));
    h += -phi[i] * inst.y1[i] * h1;
    h += 0.5 * (h2 - inst.y2[i]) * (h2 - inst.y2[i]);
    h += 0.5 * h1 * h1 - 0.5 * h2 * h2;
  }
  return h;
}

std::vector<double> theta_star(const std::vector<double>& phi, const DualInstance& inst) {
  check_instance(inst);
  check_phi(phi, inst);
  std::vector<double> rhs(inst.n);
  for (int i = 0; i < inst.n; ++i)
    rhs[i] = inst.y1[i] * phi[i] / inst.w1 + inst.w2 / (inst.w1 * inst.w1) * inst.y2[i];
  return Lu(inst.psi, inst.n).solve(rhs);
}

double dual_objective(const std::vector<double>& phi, const DualInstance& inst) {
  return saddle_value(phi, theta_star(phi, inst), inst);
}

std::vector<double> dual_gradient(const std::vector<double>& phi, const DualInstance& inst) {
  check_instance(inst);
  check_phi(phi, inst);
  std::vector<double> g(inst.n);
  for (int i = 0; i < inst.n; ++i)
    g[i] = std::log((1.0 - phi[i]) / phi[i]) - phi[i] -
           inst.w2 / inst.w1 * inst.y1[i] * inst.y2[i];
  return g;
}

MinimizeResult minimize_primal(const DualInstance& inst, int max_iters) {
  check_instance(inst);
  MinimizeResult res;
  res.theta.assign(inst.n, 0.0);
  res.loss = primal_loss(res.theta, inst);
  double step = 1.0;
  for (res.iters = 0; res.iters < max_iters; ++res.iters) {
    const std::vector<double> g = primal_gradient(res.theta, inst);
    const double gnorm = inf_norm(g);
    if (gnorm < 1e-10) {
      res.converged = true;
      break;
    }
    const double g2 = dot(g, g);
    std::vector<double> cand(inst.n);
    double t = step;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (int i = 0; i < inst.n; ++i) cand[i] = res.theta[i] - t * g[i];
      const double cl = primal_loss(cand, inst);
      // near the optimum the Armijo decrease drops below double rounding;
      // gradient-norm progress keeps the iteration moving there
      const bool armijo = cl <= res.loss - 1e-4 * t * g2;
      const bool grad_progress =
          cl <= res.loss + 1e-14 * std::fabs(res.loss) &&
          inf_norm(primal_gradient(cand, inst)) < 0.9 * gnorm;
      if (armijo || grad_progress) {
        res.theta = cand;
        res.loss = cl;
        step = std::min(t * 2.0, 1e3);
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;  // no representable progress left
  }
  // Newton polish when the linear GD rate is too slow for the 1e-10 gradient
  // tolerance (ill-conditioned psi); the objective is smooth and strictly convex
  for (int it = 0; !res.converged && it < 100; ++it) {
    const std::vector<double> g = primal_gradient(res.theta, inst);
    const double gnorm = inf_norm(g);
    if (gnorm < 1e-10) {
      res.converged = true;
      break;
    }
    const std::vector<double> d = Lu(primal_hessian(res.theta, inst), inst.n).solve(g);
    double t = 1.0;
    for (int bt = 0; bt < 60; ++bt) {
      std::vector<double> cand(inst.n);
      for (int i = 0; i < inst.n; ++i) cand[i] = res.theta[i] - t * d[i];
      const double cl = primal_loss(cand, inst);
      if (cl <= res.loss + 1e-14 * std::fabs(res.loss)) {
        res.theta = std::move(cand);
        res.loss = cl;
        break;
      }
      t *= 0.5;
    }
    ++res.iters;
  }
  return res;
}

MaximizeResult maximize_dual_bisection(const DualInstance& inst) {
  check_instance(inst);
  MaximizeResult res;
  res.phi.resize(inst.n);
  for (int i = 0; i < inst.n; ++i) {
    // g(phi) = log((1-phi)/phi) - phi - c is strictly decreasing on (0,1)
    const double c = inst.w2 / inst.w1 * inst.y1[i] * inst.y2[i];
    double lo = 1e-15, hi = 1.0 - 1e-15;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double g = std::log((1.0 - mid) / mid) - mid - c;
      (g > 0.0 ? lo : hi) = mid;
      ++res.iters;
      if (hi - lo < 1e-16) break;
    }
    res.phi[i] = 0.5 * (lo + hi);
  }
  res.value = dual_objective(res.phi, inst);
  res.converged = true;
  return res;
}

MaximizeResult maximize_dual_ascent(const DualInstance& inst, int max_iters) {
  check_instance(inst);
  MaximizeResult res;
  std::vector<double> rho(inst.n, 0.0);
  auto phi_of = [&](const std::vector<double>& r) {
    std::vector<double> p(inst.n);
    for (int i = 0; i < inst.n; ++i) p[i] = sigmoid(r[i]);
    return p;
  };
  res.phi = phi_of(rho);
  res.value = dual_objective(res.phi, inst);
  double step = 1.0;
  for (res.iters = 0; res.iters < max_iters; ++res.iters) {
    const std::vector<double> gphi = dual_gradient(res.phi, inst);
    std::vector<double> grho(inst.n);
    for (int i = 0; i < inst.n; ++i) grho[i] = gphi[i] * res.phi[i] * (1.0 - res.phi[i]);
    if (inf_norm(grho) < 1e-13) {
      res.converged = true;
      break;
    }
    const double g2 = dot(grho, grho);
    double t = step;
    for (int bt = 0; bt < 60; ++bt) {
      std::vector<double> cand(inst.n);
      for (int i = 0; i < inst.n; ++i) cand[i] = rho[i] + t * grho[i];
      const std::vector<double> cphi = phi_of(cand);
      const double cv = dual_objective(cphi, inst);
      if (cv >= res.value + 1e-4 * t * g2) {
        rho = cand;
        res.phi = cphi;
        res.value = cv;
        step = std::min(t * 2.0, 1e3);
        break;
      }
      t *= 0.5;
    }
  }
  return res;
}

DualityReport verify_instance(const DualInstance& inst, double tol) {
  check_instance(inst);
  GNAS_CHECK(tol > 0.0, "verify_instance: tol must be positive");
  const int n = inst.n;
  DualityReport rep;
  rep.n = n;

  const MinimizeResult primal = minimize_primal(inst);
  const MaximizeResult dual = maximize_dual_bisection(inst);
  const MaximizeResult ascent = maximize_dual_ascent(inst);
  rep.primal_min = primal.loss;
  rep.dual_max = dual.value;
  rep.gap_abs = std::fabs(primal.loss - dual.value);
  rep.gap_rel = rep.gap_abs / std::max(1.0, std::fabs(primal.loss));
  rep.phi_star = dual.phi;
  rep.theta_hat = primal.theta;
  rep.primal_iters = primal.iters;
  rep.ascent_iters = ascent.iters;
  rep.ascent_gap = std::fabs(dual.value - ascent.value);

  // stationarity of theta |-> H(phi*, theta) at theta*(phi*)
  {
    const std::vector<double> ts = theta_star(dual.phi, inst);
    const std::vector<double> pt = matvec(inst.psi, ts, n);
    std::vector<double> r(n);
    for (int i = 0; i < n; ++i)
      r[i] = inst.w1 * inst.w1 * pt[i] - inst.w1 * inst.y1[i] * dual.phi[i] -
             inst.w2 * inst.y2[i];
    rep.stationarity = inf_norm(matvec_t(inst.psi, r, n));
  }

  // analytic dual gradient vs central differences, off an optimum
  {
    std::vector<double> phi(n);
    for (int i = 0; i < n; ++i) phi[i] = 0.25 + 0.5 * (i + 1.0) / (n + 1.0);
    const std::vector<double> g = dual_gradient(phi, inst);
    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
      std::vector<double> up = phi, dn = phi;
      up[i] += h;
      dn[i] -= h;
      const double fd = (dual_objective(up, inst) - dual_objective(dn, inst)) / (2.0 * h);
      const double rel = std::fabs(fd - g[i]) / std::max(1.0, std::fabs(g[i]));
      rep.grad_err = std::max(rep.grad_err, rel);
      // cross-coordinate coupling of the analytic gradient
      const std::vector<double> gu = dual_gradient(up, inst);
      const std::vector<double> gd = dual_gradient(dn, inst);
      for (int j = 0; j < n; ++j)
        if (j != i)
          rep.offdiag_err =
              std::max(rep.offdiag_err, std::max(std::fabs(gu[j] - g[j]), std::fabs(gd[j] - g[j])));
    }
  }

  // closure: phi* = sigmoid(-Y1*yhat1) at the primal optimum
  {
    const std::vector<double> pt = matvec(inst.psi, primal.theta, n);
    for (int i = 0; i < n; ++i) {
      const double phic = sigmoid(-inst.y1[i] * pt[i] * inst.w1);
      rep.closure_err = std::max(rep.closure_err, std::fabs(phic - dual.phi[i]));
    }
  }

  rep.converged = primal.converged && dual.converged;
  rep.passed = rep.converged && rep.gap_rel <= tol && rep.closure_err <= tol &&
               std::isfinite(rep.primal_min) && std::isfinite(rep.dual_max);
  return rep;
}

std::vector<DualityReport> verify_batch(int instances, int n_max, double tol, uint64_t seed) {
  GNAS_CHECK(instances >= 1, "verify_batch: need at least one instance");
  GNAS_CHECK(n_max >= 2, "verify_batch: n_max must be >= 2");
  std::vector<DualityReport> out;
  out.reserve(instances);
  for (int i = 0; i < instances; ++i) {
    const int n = 2 + i % (n_max - 1);
    const uint64_t inst_seed = seed * 1000003ULL + static_cast<uint64_t>(i);
    DualityReport rep = verify_instance(random_instance(n, inst_seed), tol);
    rep.seed = inst_seed;
    out.push_back(std::move(rep));
  }
  return out;
}

void write_report_csv(const std::vector<DualityReport>& reports, const std::string& path) {
  std::string csv = "n,seed,primal,dual,gap,grad_err,offdiag_err,stationarity,iters\n";
  double max_gap_rel = 0.0;
  int pass = 0;
  for (const DualityReport& r : reports) {
    csv += std::to_string(r.n) + "," + std::to_string(r.seed) + "," + fmt_double(r.primal_min) +
           "," + fmt_double(r.dual_max) + "," + fmt_double(r.gap_abs) + "," +
           fmt_double(r.grad_err) + "," + fmt_double(r.offdiag_err) + "," +
           fmt_double(r.stationarity) + "," + std::to_string(r.primal_iters) + "\n";
    max_gap_rel = std::max(max_gap_rel, r.gap_rel);
    pass += r.passed ? 1 : 0;
  }
  csv += "# summary: instances=" + std::to_string(reports.size()) +
         " passed=" + std::to_string(pass) + " max_gap_rel=" + fmt_double(max_gap_rel) + "\n";
  write_file(path, csv);
}

bool all_passed(const std::vector<DualityReport>& reports) {
  return std::all_of(reports.begin(), reports.end(),
                     [](const DualityReport& r) { return r.passed; });
}

}  // namespace gnas::dual
