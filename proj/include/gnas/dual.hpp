#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnas/util.hpp"

namespace gnas::dual {

/// Linearized instance: predictions are yhat1 = psi*theta*w1 and
/// yhat2 = psi*theta*w2 with square psi (row-major n x n).
struct DualInstance {
  int n = 0;
  std::vector<double> psi;
  double w1 = 1.0;
  double w2 = 0.0;
  std::vector<double> y1;  // labels in {-1,+1}
  std::vector<double> y2;  // regression targets in [-1,1]
};

/// psi = I + 0.1*G, resampled until cond_2(psi) <= 100; w1 in [0.5,2],
/// w2 in [-1,1].
DualInstance random_instance(int n, uint64_t seed);

/// Spectral (2-norm) condition number of a general square matrix.
double condition_number(const std::vector<double>& a, int n);

/// Eigenvalues of a symmetric matrix (ascending), cyclic Jacobi.
std::vector<double> sym_eigenvalues(std::vector<double> a, int n);

double primal_loss(const std::vector<double>& theta, const DualInstance& inst);
std::vector<double> primal_gradient(const std::vector<double>& theta, const DualInstance& inst);
/// Hessian of the primal objective (row-major n x n, symmetric).
std::vector<double> primal_hessian(const std::vector<double>& theta, const DualInstance& inst);

/// Saddle function H(phi, theta); H(phi) = min_theta, L(theta) = max_phi.
double saddle_value(const std::vector<double>& phi, const std::vector<double>& theta,
                    const DualInstance& inst);

/// Stationary point of theta |-> H(phi, theta): solves
/// psi*x = (1/w1)*Y1'*phi + (w2/w1^2)*y2 by LU with partial pivoting.
std::vector<double> theta_star(const std::vector<double>& phi, const DualInstance& inst);

double dual_objective(const std::vector<double>& phi, const DualInstance& inst);
/// Analytic gradient: log((1-phi)/phi) - phi - (w2/w1)*y1.*y2, diagonal
/// coupling only.
std::vector<double> dual_gradient(const std::vector<double>& phi, const DualInstance& inst);

struct MinimizeResult {
  std::vector<double> theta;
  double loss = 0.0;
  int iters = 0;
  bool converged = false;
};
/// Gradient descent with Armijo backtracking until ||grad||_inf < 1e-10.
MinimizeResult minimize_primal(const DualInstance& inst, int max_iters = 20000);

struct MaximizeResult {
  std::vector<double> phi;
  double value = 0.0;
  int iters = 0;
  bool converged = false;
};
/// Per-coordinate bisection on the analytic gradient roots.
MaximizeResult maximize_dual_bisection(const DualInstance& inst);
/// Ascent on the logit parametrization phi = sigmoid(rho) (cross-check).
MaximizeResult maximize_dual_ascent(const DualInstance& inst, int max_iters = 20000);

struct DualityReport {
  int n = 0;
  uint64_t seed = 0;
  double primal_min = 0.0;
  double dual_max = 0.0;
  double gap_abs = 0.0;
  double gap_rel = 0.0;
  double stationarity = 0.0;  // ||grad_theta H(phi*, theta*(phi*))||_inf
  double grad_err = 0.0;      // analytic vs finite-difference, max relative
  double offdiag_err = 0.0;   // cross-coordinate gradient coupling
  double closure_err = 0.0;   // ||phi* - sigmoid(-Y1*yhat1(theta_hat))||_inf
  double ascent_gap = 0.0;    // |bisection dual - ascent dual|
  std::vector<double> phi_star;
  std::vector<double> theta_hat;
  int primal_iters = 0;
  int ascent_iters = 0;
  bool converged = false;
  bool passed = false;  // gap_rel <= tol && converged && closure within tol
};

DualityReport verify_instance(const DualInstance& inst, double tol);

/// Instance i uses n = 2 + (i mod (n_max - 1)) and RNG stream (seed, i).
std::vector<DualityReport> verify_batch(int instances, int n_max, double tol, uint64_t seed);

/// One CSV row per instance plus a summary footer.
void write_report_csv(const std::vector<DualityReport>& reports, const std::string& path);
bool all_passed(const std::vector<DualityReport>& reports);

}  // namespace gnas::dual
