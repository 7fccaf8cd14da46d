#pragma once

#include <vector>

#include "skillseq/manifold.hpp"
#include "skillseq/tphsmm.hpp"

namespace skillseq {

/// Riemannian linear-quadratic tracking of a sequence of Gaussians.
///
/// The robot is a double integrator in the tangent space of its current
/// state: x_{t+1} = Exp_{x_t}(v_t dt) and v_{t+1} is v_t + u_t dt carried to
/// x_{t+1} by parallel transport. The cost is
///   sum_t w_t Log_{mu_t}(x_t)^T Sigma_t^-1 Log_{mu_t}(x_t) + sum_t u_t^T R u_t
/// with w_t = 1 except at the last step, where it is the terminal weight.
struct TrackingProblem {
  Manifold manifold;
  std::vector<RiemannianGaussian> references;
  Matrix R;
  double dt = 0.02;
  Point x0;
  /// Initial velocity in the tangent space at x0; empty means zero.
  Tangent v0;
  double terminal_weight = 1.0;

  int horizon() const { return static_cast<int>(references.size()); }
  void validate() const;
};

struct TrackingSettings {
  /// Control weight R = control_weight * I.
  double control_weight = 1e-2;
  double dt = 0.02;
  double terminal_weight = 1.0;
  /// Number of linearization passes; later passes linearize about the previous rollout.
  int passes = 1;
};

struct TrackingSolution {
  std::vector<Point> states;       // x_0 .. x_{T-1}
  std::vector<Tangent> velocities; // v_t in the tangent space at x_t
  std::vector<Tangent> controls;   // u_t in the tangent space at x_t; last one is zero
  std::vector<double> step_costs;
  /// Feedback gains and feedforward terms of the last pass, each expressed in
  /// the tangent space of that pass's nominal state at step t.
  std::vector<Matrix> gains;
  std::vector<Vector> feedforward;
  std::vector<Point> nominal;
  double cost = 0.0;
};

/// Per-step references taken from the decoded states' global Gaussians.
TrackingProblem build_reference(const StateSequence& sequence, const GlobalGMM& global,
                                const Point& x0, const TrackingSettings& settings = {});

TrackingSolution solve(const TrackingProblem& problem, int passes = 1);

/// Integrates the dynamics under the given controls (one per step, last ignored).
TrackingSolution rollout(const TrackingProblem& problem, const std::vector<Tangent>& controls);

/// Cost of a solution's states and controls under the problem.
double rollout_cost(const TrackingSolution& solution, const TrackingProblem& problem);

}  // namespace skillseq
