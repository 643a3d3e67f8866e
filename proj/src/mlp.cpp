#include "llgs/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace llgs {

MlpParams MlpParams::zeros(int in, int hidden, int out) {
  MlpParams p;
  p.W1 = Eigen::MatrixXd::Zero(hidden, in);
  p.b1 = Eigen::VectorXd::Zero(hidden);
  p.W2 = Eigen::MatrixXd::Zero(out, hidden);
  p.b2 = Eigen::VectorXd::Zero(out);
  return p;
}

MlpParams MlpParams::xavier(int in, int hidden, int out, Rng& rng) {
  MlpParams p = zeros(in, hidden, out);
  double a1 = std::sqrt(6.0 / (in + hidden));
  double a2 = std::sqrt(6.0 / (hidden + out));
  for (int i = 0; i < hidden; ++i)
    for (int j = 0; j < in; ++j) p.W1(i, j) = rng.uniform(-a1, a1);
  for (int i = 0; i < out; ++i)
    for (int j = 0; j < hidden; ++j) p.W2(i, j) = rng.uniform(-a2, a2);
  return p;
}

void MlpParams::set_zero() {
  W1.setZero();
  b1.setZero();
  W2.setZero();
  b2.setZero();
}

bool MlpParams::all_finite() const {
  return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite();
}

double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 30.0) return x;
  // exp underflows to 0 near -745; keep the codomain strictly positive.
  if (x < -30.0) return std::max(std::exp(x), std::numeric_limits<double>::min());
  return std::log1p(std::exp(x));
}

double softplus_deriv(double x) { return sigmoid(x); }

namespace {

inline double head_apply(Head head, double x) {
  switch (head) {
    case Head::kIdentity: return x;
    case Head::kSigmoid: return sigmoid(x);
    case Head::kSoftplus: return softplus(x);
    case Head::kTanh: return std::tanh(x);
  }
  return x;
}

// Derivative expressed from pre- and post-activation values.
inline double head_deriv(Head head, double pre, double post) {
  switch (head) {
    case Head::kIdentity: return 1.0;
    case Head::kSigmoid: return post * (1.0 - post);
    case Head::kSoftplus: return softplus_deriv(pre);
    case Head::kTanh: return 1.0 - post * post;
  }
  return 1.0;
}

}  // namespace

Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::VectorXd& in, Head head,
                            MlpCache* cache) {
  Eigen::VectorXd z1 = p.W1 * in + p.b1;
  Eigen::VectorXd h = z1.cwiseMax(0.0);
  Eigen::VectorXd pre = p.W2 * h + p.b2;
  Eigen::VectorXd out(pre.size());
  for (Eigen::Index i = 0; i < pre.size(); ++i) out[i] = head_apply(head, pre[i]);
  if (cache) {
    cache->z1 = std::move(z1);
    cache->out_pre = pre;
    cache->out = out;
  }
  return out;
}

Eigen::VectorXd mlp_backward(const MlpParams& p, MlpParams& grad, const Eigen::VectorXd& in,
                             const MlpCache& cache, Head head, const Eigen::VectorXd& dout) {
  Eigen::VectorXd dpre(dout.size());
  for (Eigen::Index i = 0; i < dout.size(); ++i)
    dpre[i] = dout[i] * head_deriv(head, cache.out_pre[i], cache.out[i]);

  Eigen::VectorXd h = cache.z1.cwiseMax(0.0);
  grad.W2.noalias() += dpre * h.transpose();
  grad.b2 += dpre;

  Eigen::VectorXd dh = p.W2.transpose() * dpre;
  Eigen::VectorXd dz1(dh.size());
  for (Eigen::Index i = 0; i < dh.size(); ++i) dz1[i] = cache.z1[i] > 0.0 ? dh[i] : 0.0;

  grad.W1.noalias() += dz1 * in.transpose();
  grad.b1 += dz1;
  return p.W1.transpose() * dz1;
}

}  // namespace llgs
