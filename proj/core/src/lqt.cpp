#include "skillseq/lqt.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "skillseq/error.hpp"

namespace skillseq {

namespace {

// Sigma^-1 of every reference, inverted once per run of identical references.
std::vector<Matrix> precisions(const std::vector<RiemannianGaussian>& refs) {
  std::vector<Matrix> out;
  out.reserve(refs.size());
  for (std::size_t t = 0; t < refs.size(); ++t) {
    if (t > 0 && refs[t].covariance == refs[t - 1].covariance) {
      out.push_back(out.back());
      continue;
    }
    check_spd(refs[t].covariance, "tracking reference");
    const Eigen::LLT<Matrix> llt(refs[t].covariance);
    const int d = static_cast<int>(refs[t].covariance.rows());
    Matrix inv = llt.solve(Matrix::Identity(d, d));
    out.push_back(0.5 * (inv + inv.transpose()));
  }
  return out;
}

double weight_at(const TrackingProblem& p, int t) {
  return t == p.horizon() - 1 ? p.terminal_weight : 1.0;
}

Tangent initial_velocity(const TrackingProblem& p) {
  return p.v0.size() == 0 ? Tangent::Zero(p.manifold.tangent_dim()) : p.v0;
}

// Sum of the running costs; fills per-step costs when asked.
double evaluate(const TrackingProblem& problem, const TrackingSolution& solution,
                std::vector<double>* steps) {
  const Manifold& m = problem.manifold;
  const auto prec = precisions(problem.references);
  if (steps) steps->assign(problem.horizon(), 0.0);
  double total = 0.0;
  for (int t = 0; t < problem.horizon(); ++t) {
    const Vector e = m.log(problem.references[t].mean, solution.states[t]);
    double c = weight_at(problem, t) * e.dot(prec[t] * e);
    c += solution.controls[t].dot(problem.R * solution.controls[t]);
    if (steps) (*steps)[t] = c;
    total += c;
  }
  return total;
}

}  // namespace

void TrackingProblem::validate() const {
  const int d = manifold.tangent_dim();
  if (references.empty()) throw ValidationError("tracking problem has no references");
  if (!(dt > 0.0)) throw ValidationError("tracking time step must be positive");
  if (!(terminal_weight > 0.0)) throw ValidationError("terminal weight must be positive");
  if (R.rows() != d || R.cols() != d) {
    throw ValidationError("control weight must be " + std::to_string(d) + "x" + std::to_string(d));
  }
  check_spd(R, "control weight R");
  manifold.check_point(x0, "initial tracking state");
  if (v0.size() != 0 && v0.size() != d) throw ValidationError("initial velocity has wrong size");
  for (const auto& r : references) {
    manifold.check_point(r.mean, "tracking reference mean");
    if (r.covariance.rows() != d) throw ValidationError("tracking reference covariance size");
  }
}

TrackingProblem build_reference(const StateSequence& sequence, const GlobalGMM& global,
                                const Point& x0, const TrackingSettings& settings) {
  TrackingProblem p;
  p.manifold = global.manifold;
  p.dt = settings.dt;
  p.terminal_weight = settings.terminal_weight;
  const int d = p.manifold.tangent_dim();
  p.R = settings.control_weight * Matrix::Identity(d, d);
  p.x0 = x0;
  p.references.reserve(sequence.states.size());
  for (int k : sequence.states) {
    if (k < 0 || k >= global.size()) {
      throw ValidationError("decoded state " + std::to_string(k) +
                            " has no global component");
    }
    p.references.push_back(global.components[k]);
  }
  return p;
}

TrackingSolution rollout(const TrackingProblem& problem, const std::vector<Tangent>& controls) {
  const Manifold& m = problem.manifold;
  const int T = problem.horizon();
  const int d = m.tangent_dim();
  if (static_cast<int>(controls.size()) != T) {
    throw ValidationError("rollout needs one control per step");
  }
  TrackingSolution s;
  s.states.reserve(T);
  s.velocities.reserve(T);
  s.controls.reserve(T);
  Point x = problem.x0;
  Tangent v = initial_velocity(problem);
  for (int t = 0; t < T; ++t) {
    const Tangent u = t + 1 < T ? controls[t] : Tangent::Zero(d);
    s.states.push_back(x);
    s.velocities.push_back(v);
    s.controls.push_back(u);
    if (t + 1 == T) break;
    const Point next = m.exp(x, v * problem.dt);
    v = m.transport(x, next, v + u * problem.dt);
    x = next;
  }
  s.cost = evaluate(problem, s, &s.step_costs);
  return s;
}

double rollout_cost(const TrackingSolution& solution, const TrackingProblem& problem) {
  return evaluate(problem, solution, nullptr);
}

TrackingSolution solve(const TrackingProblem& problem, int passes) {
  problem.validate();
  if (passes < 1) throw ValidationError("tracking needs at least one pass");
  const Manifold& m = problem.manifold;
  const int T = problem.horizon();
  const int d = m.tangent_dim();
  const double dt = problem.dt;
  const auto prec = precisions(problem.references);

  // Nominal trajectory: zero controls for the first pass.
  TrackingSolution nominal = rollout(problem, std::vector<Tangent>(T, Tangent::Zero(d)));
  TrackingSolution result;

  for (int pass = 0; pass < passes; ++pass) {
    const auto& xb = nominal.states;
    const auto& vb = nominal.velocities;
    const auto& ub = nominal.controls;

    std::vector<Matrix> gains(T, Matrix::Zero(d, 2 * d));
    std::vector<Vector> ff(T, Vector::Zero(d));

    // Terminal value function V(z) = z^T S z - 2 s^T z.
    auto running = [&](int t, Matrix& Q, Vector& qz) {
      const Matrix transport = m.transport_matrix(problem.references[t].mean, xb[t]);
      Q = Matrix::Zero(2 * d, 2 * d);
      Q.topLeftCorner(d, d) = weight_at(problem, t) * transport * prec[t] * transport.transpose();
      Vector target = Vector::Zero(2 * d);
      target.head(d) = m.log(xb[t], problem.references[t].mean);
      qz = Q * target;
    };

    Matrix S;
    Vector s;
    running(T - 1, S, s);
    for (int t = T - 2; t >= 0; --t) {
      const Matrix Gam = m.transport_matrix(xb[t], xb[t + 1]);
      Matrix F = Matrix::Zero(2 * d, 2 * d);
      F.topLeftCorner(d, d) = Gam;
      F.topRightCorner(d, d) = Gam * dt;
      F.bottomRightCorner(d, d) = Gam;
      Matrix G = Matrix::Zero(2 * d, d);
      G.bottomRows(d) = Gam * dt;

      const Matrix SG = S * G;
      Matrix H = problem.R + G.transpose() * SG;
      H = 0.5 * (H + H.transpose());
      const Eigen::LLT<Matrix> llt(H);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("tracking recursion lost positive-definiteness at step " +
                             std::to_string(t));
      }
      const Matrix K = llt.solve(SG.transpose() * F);
      const Vector k = llt.solve(G.transpose() * s - problem.R * ub[t]);
      const Matrix closed = F - G * K;

      Matrix Q;
      Vector qz;
      running(t, Q, qz);
      const Vector s_next = qz + K.transpose() * (problem.R * (ub[t] + k)) +
                            closed.transpose() * (s - SG * k);
      Matrix S_next = Q + F.transpose() * S * closed;
      S = 0.5 * (S_next + S_next.transpose());
      s = s_next;
      if (!S.allFinite() || !s.allFinite()) {
        throw NumericalError("tracking cost diverged at step " + std::to_string(t));
      }
      gains[t] = K;
      ff[t] = k;
    }

    // Forward rollout with the affine feedback law.
    TrackingSolution sol;
    Point x = problem.x0;
    Tangent v = initial_velocity(problem);
    for (int t = 0; t < T; ++t) {
      Tangent u = Tangent::Zero(d);
      if (t + 1 < T) {
        Vector z(2 * d);
        z.head(d) = m.log(xb[t], x);
        z.tail(d) = m.transport(x, xb[t], v) - vb[t];
        const Vector du = -gains[t] * z + ff[t];
        u = m.transport(xb[t], x, ub[t] + du);
      }
      sol.states.push_back(x);
      sol.velocities.push_back(v);
      sol.controls.push_back(u);
      if (t + 1 == T) break;
      const Point next = m.exp(x, v * dt);
      v = m.transport(x, next, v + u * dt);
      x = next;
      if (!x.allFinite() || !v.allFinite()) {
        throw NumericalError("tracking rollout diverged at step " + std::to_string(t));
      }
    }
    sol.gains = std::move(gains);
    sol.feedforward = std::move(ff);
    sol.nominal = xb;
    sol.cost = evaluate(problem, sol, &sol.step_costs);
    if (!std::isfinite(sol.cost)) throw NumericalError("tracking cost is not finite");
    result = sol;
    nominal = std::move(sol);
  }
  return result;
}

}  // namespace skillseq
