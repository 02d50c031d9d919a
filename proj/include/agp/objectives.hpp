#pragma once

#include "agp/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <string>
#include <vector>

namespace agp {

template <class F>
concept ObjectiveLike = requires(const F& f, const Vec& x) {
  { f.dim() } -> std::convertible_to<int>;
  { f.value(x) } -> std::convertible_to<double>;
  { f.gradient(x) } -> std::convertible_to<Vec>;
  { f.strong_convexity() } -> std::convertible_to<double>;
  { f.smoothness() } -> std::convertible_to<double>;
};

namespace detail {
inline void check_finite(const Vec& x) {
  if (!x.allFinite()) throw NonFinite("objective evaluated at a non-finite point");
}
}  // namespace detail

// f(x) = 1/2 (x-b)' A (x-b) with A symmetric positive definite.
// Curvature constants are the eigenvalue extremes of A; the minimizer is b.
class QuadraticObjective {
 public:
  QuadraticObjective(Mat A, Vec b) : A_(std::move(A)), b_(std::move(b)) {
    if (A_.rows() != A_.cols() || A_.rows() != b_.size())
      throw DimensionMismatch("quadratic objective shapes disagree");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A_ + A_.transpose()));
    mu_ = es.eigenvalues().minCoeff();
    m_smooth_ = es.eigenvalues().maxCoeff();
    if (mu_ <= 0.0)
      throw SingularSystem("quadratic objective is not positive definite (lambda_min = " +
                           std::to_string(mu_) + ")");
  }

  int dim() const { return static_cast<int>(b_.size()); }
  const Mat& matrix() const { return A_; }
  const Vec& offset() const { return b_; }

  double value(const Vec& x) const {
    detail::check_finite(x);
    const Vec d = x - b_;
    return 0.5 * d.dot(A_ * d);
  }
  Vec gradient(const Vec& x) const {
    detail::check_finite(x);
    return A_ * (x - b_);
  }
  double strong_convexity() const { return mu_; }
  double smoothness() const { return m_smooth_; }
  const Vec& minimizer() const { return b_; }

 private:
  Mat A_;
  Vec b_;
  double mu_ = 0.0;
  double m_smooth_ = 0.0;
};

inline Vec local_minimizer(const QuadraticObjective& f) { return f.minimizer(); }

// One agent's share of a least-squares fit: f(w) = (1/D) |Xw - y|^2 where D
// is the dataset size across all agents.
class LeastSquaresObjective {
 public:
  LeastSquaresObjective(Mat X, Vec y, std::int64_t total_samples)
      : X_(std::move(X)), y_(std::move(y)), total_(total_samples) {
    if (X_.rows() != y_.size() || total_ < X_.rows())
      throw DimensionMismatch("least-squares data shapes disagree");
    gram_ = (2.0 / static_cast<double>(total_)) * (X_.transpose() * X_);
    Eigen::SelfAdjointEigenSolver<Mat> es(gram_);
    const double lam_min = es.eigenvalues().minCoeff();
    const double lam_max = es.eigenvalues().maxCoeff();
    // Assumption of strong convexity needs a full-rank data term; a small
    // ridge stands in when the local data is rank-deficient.
    if (lam_min <= 1e-12 * std::max(1.0, lam_max)) {
      ridged_ = true;
      gram_ += kRidge * Mat::Identity(dim(), dim());
    }
    Eigen::SelfAdjointEigenSolver<Mat> es2(gram_);
    mu_ = es2.eigenvalues().minCoeff();
    m_smooth_ = es2.eigenvalues().maxCoeff();
    rhs_ = (2.0 / static_cast<double>(total_)) * (X_.transpose() * y_);
  }

  static constexpr double kRidge = 1e-8;

  int dim() const { return static_cast<int>(X_.cols()); }
  bool ridged() const { return ridged_; }
  std::int64_t total_samples() const { return total_; }
  const Mat& data() const { return X_; }
  const Vec& targets() const { return y_; }

  double value(const Vec& w) const {
    detail::check_finite(w);
    double v = (X_ * w - y_).squaredNorm() / static_cast<double>(total_);
    if (ridged_) v += 0.5 * kRidge * w.squaredNorm();
    return v;
  }
  Vec gradient(const Vec& w) const {
    detail::check_finite(w);
    Vec g = (2.0 / static_cast<double>(total_)) * (X_.transpose() * (X_ * w - y_));
    if (ridged_) g += kRidge * w;
    return g;
  }
  double strong_convexity() const { return mu_; }
  double smoothness() const { return m_smooth_; }

  // Equivalent quadratic form (up to an additive constant).
  QuadraticObjective to_quadratic() const {
    const Vec b = Eigen::LDLT<Mat>(gram_).solve(rhs_);
    return QuadraticObjective(gram_, b);
  }

 private:
  Mat X_;
  Vec y_;
  std::int64_t total_;
  Mat gram_;
  Vec rhs_;
  bool ridged_ = false;
  double mu_ = 0.0;
  double m_smooth_ = 0.0;
};

inline Vec local_minimizer(const LeastSquaresObjective& f) {
  return f.to_quadratic().minimizer();
}

// Multinomial logistic regression with one-hot labels and an L2 ridge, on a
// flattened (classes x features) weight vector. The data term's curvature is
// bounded by lambda_max(X'X)/2, so smoothness() is a valid (not tight) bound.
class LogisticObjective {
 public:
  LogisticObjective(Mat X, Mat onehot, double lambda)
      : X_(std::move(X)), Y_(std::move(onehot)), lambda_(lambda) {
    if (X_.rows() != Y_.rows()) throw DimensionMismatch("logistic sample counts disagree");
    if (lambda_ <= 0.0) throw InvalidTarget("logistic regularization must be positive");
    Eigen::SelfAdjointEigenSolver<Mat> es(X_.transpose() * X_);
    data_bound_ = 0.5 * es.eigenvalues().maxCoeff();
  }

  int classes() const { return static_cast<int>(Y_.cols()); }
  int features() const { return static_cast<int>(X_.cols()); }
  int dim() const { return classes() * features(); }
  double lambda() const { return lambda_; }

  double value(const Vec& w) const {
    detail::check_finite(w);
    const Mat W = unflatten(w);
    double nll = 0.0;
    for (int l = 0; l < X_.rows(); ++l) {
      const Vec scores = W * X_.row(l).transpose();
      const double lse = log_sum_exp(scores);
      nll -= Y_.row(l).dot((scores.array() - lse).matrix());
    }
    return nll + 0.5 * lambda_ * w.squaredNorm();
  }

  Vec gradient(const Vec& w) const { return flatten(gradient_matrix(unflatten(w))); }

  Mat gradient_matrix(const Mat& W) const {
    Mat g = lambda_ * W;
    for (int l = 0; l < X_.rows(); ++l) {
      const Vec scores = W * X_.row(l).transpose();
      const Vec p = softmax(scores);
      g += (p - Y_.row(l).transpose()) * X_.row(l);
    }
    return g;
  }

  // Exact Hessian of the flattened objective; intended for small instances.
  Mat hessian(const Vec& w) const {
    const Mat W = unflatten(w);
    const int kc = classes();
    const int kf = features();
    Mat H = lambda_ * Mat::Identity(dim(), dim());
    for (int l = 0; l < X_.rows(); ++l) {
      const Vec p = softmax(W * X_.row(l).transpose());
      const Mat S = Mat(p.asDiagonal()) - p * p.transpose();
      for (int a = 0; a < kc; ++a)
        for (int b = 0; b < kc; ++b)
          H.block(a * kf, b * kf, kf, kf) +=
              S(a, b) * (X_.row(l).transpose() * X_.row(l));
    }
    return H;
  }

  double strong_convexity() const { return lambda_; }
  double smoothness() const { return lambda_ + data_bound_; }

  Mat unflatten(const Vec& w) const {
    if (w.size() != dim()) throw DimensionMismatch("logistic weight vector has wrong size");
    Mat W(classes(), features());
    for (int a = 0; a < classes(); ++a) W.row(a) = w.segment(a * features(), features());
    return W;
  }
  static Vec flatten(const Mat& W) {
    Vec w(W.rows() * W.cols());
    for (int a = 0; a < W.rows(); ++a) w.segment(a * W.cols(), W.cols()) = W.row(a);
    return w;
  }

 private:
  static double log_sum_exp(const Vec& v) {
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
  }
  static Vec softmax(const Vec& v) {
    Vec e = (v.array() - v.maxCoeff()).exp();
    return e / e.sum();
  }

  Mat X_;
  Mat Y_;
  double lambda_;
  double data_bound_ = 0.0;
};

struct CurvatureConstants {
  double mu;
  double smoothness;
};

template <ObjectiveLike F>
CurvatureConstants constants(const F& f) {
  return {f.strong_convexity(), f.smoothness()};
}

// Aggregate constants used throughout the analysis: M = max_i M_i and
// mu = min_i mu_i, with kappa = M / mu.
template <ObjectiveLike F>
CurvatureConstants aggregate_constants(const std::vector<F>& objs) {
  double mu = std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (const F& f : objs) {
    mu = std::min(mu, f.strong_convexity());
    m = std::max(m, f.smoothness());
  }
  return {mu, m};
}

// Minimizer of sum_i w_i f_i for quadratics: solves (sum w_i A_i) x = sum w_i A_i b_i.
inline Vec weighted_minimizer(const std::vector<QuadraticObjective>& objs,
                              const std::vector<double>& weights) {
  if (objs.empty() || objs.size() != weights.size())
    throw DimensionMismatch("weighted_minimizer needs one weight per objective");
  const int d = objs.front().dim();
  Mat lhs = Mat::Zero(d, d);
  Vec rhs = Vec::Zero(d);
  for (std::size_t i = 0; i < objs.size(); ++i) {
    lhs += weights[i] * objs[i].matrix();
    rhs += weights[i] * (objs[i].matrix() * objs[i].offset());
  }
  Eigen::LDLT<Mat> solver(lhs);
  if (solver.info() != Eigen::Success || !solver.isPositive())
    throw SingularSystem("aggregate quadratic system is not positive definite");
  Vec x = solver.solve(rhs);
  x += solver.solve(rhs - lhs * x);  // one step of iterative refinement
  return x;
}

// Damped-Newton solve of sum_i w_i f_i for logistic objectives down to
// gradient norm 1e-10. Small instances only (builds the dense Hessian).
inline Vec weighted_minimizer(const std::vector<LogisticObjective>& objs,
                              const std::vector<double>& weights,
                              double grad_tol = 1e-10, int max_iters = 200) {
  if (objs.empty() || objs.size() != weights.size())
    throw DimensionMismatch("weighted_minimizer needs one weight per objective");
  const int d = objs.front().dim();
  Vec x = Vec::Zero(d);
  auto grad_at = [&](const Vec& p) {
    Vec g = Vec::Zero(d);
    for (std::size_t i = 0; i < objs.size(); ++i) g += weights[i] * objs[i].gradient(p);
    return g;
  };
  for (int it = 0; it < max_iters; ++it) {
    const Vec g = grad_at(x);
    if (g.norm() <= grad_tol) return x;
    Mat H = Mat::Zero(d, d);
    for (std::size_t i = 0; i < objs.size(); ++i) H += weights[i] * objs[i].hessian(x);
    const Vec step = Eigen::LDLT<Mat>(H).solve(g);
    double t = 1.0;
    const double g0 = g.norm();
    while (t > 1e-8 && grad_at(x - t * step).norm() > g0) t *= 0.5;
    x -= t * step;
  }
  if (grad_at(x).norm() > grad_tol)
    throw SingularSystem("Newton solve did not reach the requested gradient norm");
  return x;
}

template <ObjectiveLike F>
Vec global_minimizer(const std::vector<F>& objs) {
  return weighted_minimizer(objs, std::vector<double>(objs.size(), 1.0));
}

inline Vec local_minimizer(const LogisticObjective& f) {
  return weighted_minimizer(std::vector<LogisticObjective>{f}, {1.0});
}

// One agent's slice of a synthetic least-squares problem: the data realizes
// the quadratic exactly, i.e. (2/D) X'X equals the quadratic's matrix and
// X b equals the targets.
struct SyntheticAgentProblem {
  QuadraticObjective objective;
  Mat data;
  Vec targets;
};

namespace detail {

inline Mat random_orthonormal(int rows, int cols, Rng& rng) {
  Mat g(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) g(r, c) = rng.next_gaussian();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(rows, cols);
  const Mat r_mat = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (int c = 0; c < cols; ++c)
    if (r_mat(c, c) < 0) q.col(c) = -q.col(c);
  return q;
}

}  // namespace detail

// Synthetic partition with per-agent conditioning control. Each agent gets a
// quadratic with eigenvalues log-spaced on [1/sqrt(k_i), sqrt(k_i)] (so its
// condition number is exactly the target and the geometric mean of the
// spectrum is 1), a random orientation, a random minimizer, and a regression
// dataset that realizes the quadratic exactly.
inline std::vector<SyntheticAgentProblem> generate_synthetic_partition(
    int n, int d, int samples_per_agent, const std::vector<double>& condition_targets,
    std::uint64_t seed) {
  if (static_cast<int>(condition_targets.size()) != n)
    throw InvalidTarget("need one condition target per agent");
  if (samples_per_agent < d)
    throw InvalidTarget("samples_per_agent must be >= feature count to realize the targets");
  for (double k : condition_targets) {
    if (!(k >= 1.0)) throw InvalidTarget("condition targets must be >= 1");
    if (d == 1 && k != 1.0) throw InvalidTarget("1-d quadratics always have condition number 1");
  }

  Rng rng(seed);
  const std::int64_t total = static_cast<std::int64_t>(n) * samples_per_agent;
  std::vector<SyntheticAgentProblem> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double kappa = condition_targets[i];
    Vec spectrum(d);
    for (int j = 0; j < d; ++j) {
      const double t = d == 1 ? 0.5 : static_cast<double>(j) / (d - 1);
      spectrum[j] = std::pow(kappa, t - 0.5);
    }
    const Mat basis = detail::random_orthonormal(d, d, rng);
    const Mat sampler = detail::random_orthonormal(samples_per_agent, d, rng);
    Vec minimizer(d);
    for (int j = 0; j < d; ++j) minimizer[j] = rng.next_gaussian();

    const double scale = std::sqrt(static_cast<double>(total) / 2.0);
    Mat X = sampler * (spectrum.array().sqrt().matrix() * scale).asDiagonal() * basis.transpose();
    Vec y = X * minimizer;
    Mat A = basis * spectrum.asDiagonal() * basis.transpose();
    out.push_back({QuadraticObjective(std::move(A), minimizer), std::move(X), std::move(y)});
  }
  return out;
}

inline std::vector<QuadraticObjective> quadratics_of(
    const std::vector<SyntheticAgentProblem>& problems) {
  std::vector<QuadraticObjective> objs;
  objs.reserve(problems.size());
  for (const auto& p : problems) objs.push_back(p.objective);
  return objs;
}

}  // namespace agp
