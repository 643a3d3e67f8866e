#pragma once

#include <cstdint>

#include "llgs/image.hpp"
#include "llgs/splat_render.hpp"

namespace llgs {

// ---- Loss weight schedule ---------------------------------------------------

struct ScheduleConfig {
  double lambda_ill = 1.0;
  double lambda_dssim = 0.2;
  double re_init = 2.0;       // residual weight at iteration 0
  double re_final = 0.5;      // value reached at re_decay_iters, then constant
  int64_t re_decay_iters = 2000;
  int64_t enh_on_iter = 2000;  // enhancement loss switches on here
  double enh_value = 1.0;
};

struct LossWeights {
  double ill = 1.0;
  double re = 2.0;
  double enh = 0.0;
  double dssim = 0.2;
};

LossWeights lambda_schedule(int64_t iter, const ScheduleConfig& cfg = {});

// ---- Individual objectives (value + optional analytic gradient) -------------
// Gradient images are allocated/overwritten by the callee. All means are
// per-element (pixels x channels). L1 kinks use subgradient 0.

// mean |pred - target| / (sg(pred) + eps); no gradient through the denominator.
// `sg_pred` pins the stop-gradient argument to an explicit image — used by
// finite-difference harnesses, which must hold sg() inputs at the
// linearization point to probe the same function the analytic gradient
// differentiates.
double l1_weighted(const Image& pred, const Image& target, double eps,
                   Image* grad_pred = nullptr, const Image* sg_pred = nullptr);

// (1 - SSIM)/2 in [0,1].
double dssim(const Image& a, const Image& b, Image* grad_a = nullptr);

// Edge-aware weights from the blurred gray input: w = 1/(|forward diff| + eps),
// zero on the last column/row.
void smoothness_weights(const Image& gray_low, double eps, Image* w_x, Image* w_y);

double smoothness_loss(const Image& S, const Image& w_x, const Image& w_y,
                       Image* grad_S = nullptr);

// mean |S - max_channel(C_low)|
double init_illum_loss(const Image& S, const Image& C_low, Image* grad_S = nullptr);

// L_init + lambda_smo * L_smo
double illum_prior_loss(const Image& S, const Image& C_low, double lambda_smo, double eps_smo,
                        Image* grad_S = nullptr);

// mean |Rs|
double residual_loss(const Image& Rs, Image* grad_Rs = nullptr);

// mean |S_enh/(sg(S)+eps) - gamma| + mean |C_nor - C_pri|.
// grad_Senh_ratio collects the first term's S_enh adjoint; grad_Cnor the
// second term's adjoint of C_nor (to be chained into R and S_enh).
// `sg_S` pins the stop-gradient denominator (see l1_weighted).
double enhancement_loss(const Image& S, const Image& S_enh, const Image& C_nor,
                        const Image& C_pri, double gamma, double eps,
                        Image* grad_Senh_ratio = nullptr, Image* grad_Cnor = nullptr,
                        const Image* sg_S = nullptr);

// 1 - PCC in [0,2] over mask pixels (alpha > 0.5 when a mask is given).
// Constant inputs set *skipped and return 0 without touching gradients.
double depth_pcc_loss(const Image& rendered, const Image& prior, const Image* alpha_mask,
                      bool* skipped, Image* grad_rendered = nullptr);

// (1-lambda) L1w(C_low_hat, C_low) + lambda DSSIM(R*S, C_low); the DSSIM path
// is structurally independent of the transient branch.
double recon_loss(const ComponentMaps& maps, const Image& target, double lambda_dssim,
                  double eps_l1, Image* grad_R = nullptr, Image* grad_S = nullptr,
                  Image* grad_Rs = nullptr, const Image* sg_low = nullptr);

// ---- Total objective ---------------------------------------------------------

struct LossConfig {
  ScheduleConfig schedule;
  double eps_l1 = 1e-3;
  double eps_smo = 1e-2;
  double eps_enh = 1e-3;
  double lambda_smo = 0.001;
  double gamma = 4.0;
};

struct LossBundle {
  double recon = 0.0;
  double ill = 0.0;
  double re = 0.0;
  double enh = 0.0;
  double depth = 0.0;  // reported separately; not part of total
  double total = 0.0;
  LossWeights weights;
};

struct TotalLossGrads {
  Image dR, dS, dRs, dSenh;
};

// Stop-gradient arguments captured at a linearization point (FD harness use).
struct StopGradRefs {
  Image low;  // sg(C_low_hat) of Eq. 13
  Image S;    // sg(S) of Eq. 19
};

// recon + l_ill*ill + l_re(iter)*re + l_enh(iter)*enh, with map adjoints.
LossBundle total_loss(const ComponentMaps& maps, const Image& C_low, const Image& C_pri,
                      int64_t iter, const LossConfig& cfg, TotalLossGrads* grads = nullptr,
                      const StopGradRefs* frozen = nullptr);

}  // namespace llgs
