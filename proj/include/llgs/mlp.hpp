#pragma once

#include <Eigen/Dense>

#include "llgs/rng.hpp"

namespace llgs {

// Single-hidden-layer perceptron: out = head(W2 * relu(W1 * in + b1) + b2).
struct MlpParams {
  Eigen::MatrixXd W1;  // hidden x in
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd W2;  // out x hidden
  Eigen::VectorXd b2;  // out

  int in_dim() const { return static_cast<int>(W1.cols()); }
  int hidden_dim() const { return static_cast<int>(W1.rows()); }
  int out_dim() const { return static_cast<int>(W2.rows()); }

  static MlpParams zeros(int in, int hidden, int out);
  static MlpParams xavier(int in, int hidden, int out, Rng& rng);
  void set_zero();
  bool all_finite() const;
};

enum class Head { kIdentity, kSigmoid, kSoftplus, kTanh };

double sigmoid(double x);
double softplus(double x);        // log(1+e^x), overflow-safe
double softplus_deriv(double x);  // logistic(x)

// Retained activations for the backward pass.
struct MlpCache {
  Eigen::VectorXd z1;       // hidden pre-activation
  Eigen::VectorXd out_pre;  // head pre-activation
  Eigen::VectorXd out;      // post-activation
};

Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::VectorXd& in, Head head,
                            MlpCache* cache = nullptr);

// dout is the adjoint of the post-activation output. Gradients accumulate
// into `grad` (same shapes as `p`); returns the adjoint of the input.
// ReLU and L1-style kinks use subgradient 0.
Eigen::VectorXd mlp_backward(const MlpParams& p, MlpParams& grad, const Eigen::VectorXd& in,
                             const MlpCache& cache, Head head, const Eigen::VectorXd& dout);

}  // namespace llgs
