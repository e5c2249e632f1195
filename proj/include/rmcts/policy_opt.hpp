#pragma once

// KL-regularized posterior policy.
//
// Given action rewards Q, a prior pi0 and a budget N, the posterior pi_bar
// maximizes
//     F(pi) = sum_a pi(a) Q(a) - lambda * KL(pi0 || pi),   lambda = C / sqrt(N).
// The maximizer equalizes the UCB-like quantity Q(a) + lambda * pi0(a) / pi(a)
// across actions; the common value u > max Q is the root of
//     f(u) = -1 + lambda * sum_a pi0(a) / (u - Q(a)),
// which is convex and decreasing on (max Q, inf). Newton's method started at
// u0 = max_a (Q(a) + lambda * pi0(a)) has f(u0) >= 0 and increases
// monotonically to the root.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace rmcts {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct PolicyOptProblem {
  Vec<Scalar> q;
  Vec<Scalar> prior;
  Scalar n_sims = Scalar(1);
  Scalar c = Scalar(1);

  Scalar lambda() const { return c / std::sqrt(n_sims); }

  void validate() const {
    if (q.size() < 1 || q.size() != prior.size())
      throw std::invalid_argument("policy_opt: q and prior must be nonempty and the same length");
    if (!(n_sims >= Scalar(1))) throw std::invalid_argument("policy_opt: n_sims must be >= 1");
    if (!(c > Scalar(0))) throw std::invalid_argument("policy_opt: c must be positive");
    if (!(prior.array() > Scalar(0)).all()) throw std::invalid_argument("policy_opt: prior entries must be positive");
    if (!q.allFinite()) throw std::invalid_argument("policy_opt: q must be finite");
  }
};

template <typename Scalar>
struct OptimizedPolicy {
  Vec<Scalar> pi_bar;
  Scalar u = Scalar(0);
  int iterations = 0;
};

inline constexpr double kPolicyOptTolerance = 1e-10;
inline constexpr int kPolicyOptMaxIterations = 1000;

/// f(u) = -1 + lambda * sum pi0 / (u - Q).
template <typename Scalar>
Scalar equal_ucb_residual(const PolicyOptProblem<Scalar>& p, Scalar u) {
  return Scalar(-1) + p.lambda() * (p.prior.array() / (u - p.q.array())).sum();
}

/// Solves for the posterior. `observe(iteration, u, f_u)` is called for the
/// starting point and after every Newton step.
template <typename Scalar, typename Observer>
OptimizedPolicy<Scalar> solve_policy(const PolicyOptProblem<Scalar>& p, Observer&& observe) {
  p.validate();
  const Scalar lambda = p.lambda();
  const Scalar eps = std::max(static_cast<Scalar>(kPolicyOptTolerance), Scalar(64) * std::numeric_limits<Scalar>::epsilon());

  Scalar u = (p.q.array() + lambda * p.prior.array()).maxCoeff();
  Scalar f = equal_ucb_residual(p, u);
  int iterations = 0;
  observe(iterations, u, f);
  while (f > eps) {
    if (iterations >= kPolicyOptMaxIterations)
      throw std::runtime_error("policy_opt: Newton iteration did not converge");
    const auto gap = (u - p.q.array()).eval();
    const Scalar df = -lambda * (p.prior.array() / gap.square()).sum();
    u -= f / df;
    f = equal_ucb_residual(p, u);
    ++iterations;
    observe(iterations, u, f);
  }

  OptimizedPolicy<Scalar> out;
  out.pi_bar = (lambda * p.prior.array() / (u - p.q.array())).matrix();
  out.pi_bar /= out.pi_bar.sum();
  out.u = u;
  out.iterations = iterations;
  return out;
}

template <typename Scalar>
OptimizedPolicy<Scalar> solve_policy(const PolicyOptProblem<Scalar>& p) {
  return solve_policy(p, [](int, Scalar, Scalar) {});
}

template <typename Scalar>
OptimizedPolicy<Scalar> solve_policy(const Eigen::Ref<const Vec<Scalar>>& q,
                                     const Eigen::Ref<const Vec<Scalar>>& prior, Scalar n_sims, Scalar c) {
  return solve_policy(PolicyOptProblem<Scalar>{q, prior, n_sims, c});
}

/// KL(p || q) = sum p ln(p / q) over entries with p > 0.
template <typename Scalar>
Scalar kl_divergence(const Eigen::Ref<const Vec<Scalar>>& p, const Eigen::Ref<const Vec<Scalar>>& q) {
  Scalar total(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= Scalar(0)) continue;
    if (q[i] <= Scalar(0)) throw std::domain_error("kl_divergence: q has zero mass where p is positive");
    total += p[i] * std::log(p[i] / q[i]);
  }
  return total;
}

/// F(pi) = sum pi Q - lambda * KL(pi0 || pi).
template <typename Scalar>
Scalar policy_objective(const Eigen::Ref<const Vec<Scalar>>& pi, const PolicyOptProblem<Scalar>& p) {
  return pi.dot(p.q) - p.lambda() * kl_divergence<Scalar>(p.prior, pi);
}

/// sum pi Q - lambda * KL(pi || pi0), the objective of the reverse-KL posterior.
template <typename Scalar>
Scalar reverse_kl_objective(const Eigen::Ref<const Vec<Scalar>>& pi, const PolicyOptProblem<Scalar>& p) {
  return pi.dot(p.q) - p.lambda() * kl_divergence<Scalar>(pi, p.prior);
}

/// Reverse-KL posterior: pi(a) proportional to pi0(a) * exp(Q(a) / lambda).
template <typename Scalar>
Vec<Scalar> solve_reverse_kl(const PolicyOptProblem<Scalar>& p) {
  p.validate();
  const auto logits = (p.prior.array().log() + p.q.array() / p.lambda()).eval();
  Vec<Scalar> out = (logits - logits.maxCoeff()).exp().matrix();
  out /= out.sum();
  return out;
}

/// Q(s,a) + C * pi0(s,a) * sqrt(sum_b N(s,b)) / (1 + N(s,a)).
template <typename Scalar>
Scalar ucb(Scalar q, Scalar prior, Scalar n_parent_total, Scalar n_action, Scalar c) {
  return q + c * prior * std::sqrt(n_parent_total) / (Scalar(1) + n_action);
}

inline double ucb(double q, double prior, long long n_parent_total, long long n_action, double c) {
  return ucb<double>(q, prior, static_cast<double>(n_parent_total), static_cast<double>(n_action), c);
}

}  // namespace rmcts
