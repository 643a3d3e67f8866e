#include "llgs/losses.hpp"

#include <algorithm>
#include <cmath>

#include "llgs/common.hpp"
#include "llgs/ssim.hpp"

namespace llgs {

namespace {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// 5x5 Gaussian blur, sigma 1, replicate borders.
Image blur5(const Image& src) {
  static const double k[5] = {0.05448868, 0.24420134, 0.40261996, 0.24420134, 0.05448868};
  Image tmp(src.width, src.height, 1), out(src.width, src.height, 1);
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * src.at(clampi(x + i, 0, src.width - 1), y);
      tmp.at(x, y) = s;
    }
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp.at(x, clampi(y + i, 0, src.height - 1));
      out.at(x, y) = s;
    }
  return out;
}

}  // namespace

LossWeights lambda_schedule(int64_t iter, const ScheduleConfig& cfg) {
  LossWeights w;
  w.ill = cfg.lambda_ill;
  w.dssim = cfg.lambda_dssim;
  if (iter >= cfg.re_decay_iters) {
    w.re = cfg.re_final;
  } else {
    double f = static_cast<double>(iter) / static_cast<double>(cfg.re_decay_iters);
    w.re = cfg.re_init + (cfg.re_final - cfg.re_init) * f;
  }
  w.enh = iter >= cfg.enh_on_iter ? cfg.enh_value : 0.0;
  return w;
}

double l1_weighted(const Image& pred, const Image& target, double eps, Image* grad_pred,
                   const Image* sg_pred) {
  if (!pred.same_shape(target)) throw DataError("l1_weighted: shape mismatch");
  if (sg_pred && !sg_pred->same_shape(pred)) throw DataError("l1_weighted: sg shape mismatch");
  if (grad_pred) *grad_pred = Image(pred.width, pred.height, pred.channels, 0.0);
  double n = static_cast<double>(pred.data.size());
  double loss = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    // Stop-gradient denominator, floored at zero: the unclamped low-light
    // composite can dip negative through the residual term, and the loss
    // must stay nonnegative.
    double sg = sg_pred ? sg_pred->data[i] : pred.data[i];
    double denom = std::max(sg, 0.0) + eps;
    double diff = pred.data[i] - target.data[i];
    loss += std::abs(diff) / denom;
    if (grad_pred) grad_pred->data[i] = sgn(diff) / denom / n;
  }
  return loss / n;
}

double dssim(const Image& a, const Image& b, Image* grad_a) {
  double s = grad_a ? ssim_with_grad(a, b, grad_a) : ssim(a, b);
  if (grad_a)
    for (auto& v : grad_a->data) v *= -0.5;
  return (1.0 - s) / 2.0;
}

void smoothness_weights(const Image& gray_low, double eps, Image* w_x, Image* w_y) {
  if (gray_low.channels != 1) throw DataError("smoothness_weights: single-channel input required");
  Image b = blur5(gray_low);
  *w_x = Image(b.width, b.height, 1, 0.0);
  *w_y = Image(b.width, b.height, 1, 0.0);
  for (int y = 0; y < b.height; ++y)
    for (int x = 0; x + 1 < b.width; ++x)
      w_x->at(x, y) = 1.0 / (std::abs(b.at(x + 1, y) - b.at(x, y)) + eps);
  for (int y = 0; y + 1 < b.height; ++y)
    for (int x = 0; x < b.width; ++x)
      w_y->at(x, y) = 1.0 / (std::abs(b.at(x, y + 1) - b.at(x, y)) + eps);
}

double smoothness_loss(const Image& S, const Image& w_x, const Image& w_y, Image* grad_S) {
  if (!S.same_shape(w_x) || !S.same_shape(w_y)) throw DataError("smoothness_loss: shape mismatch");
  if (grad_S) *grad_S = Image(S.width, S.height, 1, 0.0);
  double n = static_cast<double>(S.width) * S.height;
  double loss = 0.0;
  for (int y = 0; y < S.height; ++y)
    for (int x = 0; x + 1 < S.width; ++x) {
      double d = S.at(x + 1, y) - S.at(x, y);
      loss += w_x.at(x, y) * std::abs(d) / n;
      if (grad_S) {
        double g = w_x.at(x, y) * sgn(d) / n;
        grad_S->at(x + 1, y) += g;
        grad_S->at(x, y) -= g;
      }
    }
  for (int y = 0; y + 1 < S.height; ++y)
    for (int x = 0; x < S.width; ++x) {
      double d = S.at(x, y + 1) - S.at(x, y);
      loss += w_y.at(x, y) * std::abs(d) / n;
      if (grad_S) {
        double g = w_y.at(x, y) * sgn(d) / n;
        grad_S->at(x, y + 1) += g;
        grad_S->at(x, y) -= g;
      }
    }
  return loss;
}

double init_illum_loss(const Image& S, const Image& C_low, Image* grad_S) {
  if (S.width != C_low.width || S.height != C_low.height || S.channels != 1)
    throw DataError("init_illum_loss: shape mismatch");
  if (grad_S) *grad_S = Image(S.width, S.height, 1, 0.0);
  double n = static_cast<double>(S.width) * S.height;
  double loss = 0.0;
  for (int y = 0; y < S.height; ++y)
    for (int x = 0; x < S.width; ++x) {
      double m = C_low.at(x, y, 0);
      for (int c = 1; c < C_low.channels; ++c) m = std::max(m, C_low.at(x, y, c));
      double d = S.at(x, y) - m;
      loss += std::abs(d) / n;
      if (grad_S) grad_S->at(x, y) = sgn(d) / n;
    }
  return loss;
}

double illum_prior_loss(const Image& S, const Image& C_low, double lambda_smo, double eps_smo,
                        Image* grad_S) {
  Image ginit, gsmo;
  double init = init_illum_loss(S, C_low, grad_S ? &ginit : nullptr);
  Image wx, wy;
  smoothness_weights(to_gray(C_low), eps_smo, &wx, &wy);
  double smo = smoothness_loss(S, wx, wy, grad_S ? &gsmo : nullptr);
  if (grad_S) {
    *grad_S = ginit;
    for (size_t i = 0; i < grad_S->data.size(); ++i) grad_S->data[i] += lambda_smo * gsmo.data[i];
  }
  return init + lambda_smo * smo;
}

double residual_loss(const Image& Rs, Image* grad_Rs) {
  if (grad_Rs) *grad_Rs = Image(Rs.width, Rs.height, Rs.channels, 0.0);
  double n = static_cast<double>(Rs.data.size());
  double loss = 0.0;
  for (size_t i = 0; i < Rs.data.size(); ++i) {
    loss += std::abs(Rs.data[i]) / n;
    if (grad_Rs) grad_Rs->data[i] = sgn(Rs.data[i]) / n;
  }
  return loss;
}

double enhancement_loss(const Image& S, const Image& S_enh, const Image& C_nor,
                        const Image& C_pri, double gamma, double eps, Image* grad_Senh_ratio,
                        Image* grad_Cnor, const Image* sg_S) {
  if (S_enh.channels != 3 || !C_nor.same_shape(C_pri))
    throw DataError("enhancement_loss: shape mismatch");
  if (grad_Senh_ratio) *grad_Senh_ratio = Image(S_enh.width, S_enh.height, 3, 0.0);
  if (grad_Cnor) *grad_Cnor = Image(C_nor.width, C_nor.height, 3, 0.0);

  double n3 = static_cast<double>(S_enh.data.size());
  double term1 = 0.0;
  for (int y = 0; y < S_enh.height; ++y)
    for (int x = 0; x < S_enh.width; ++x) {
      // stop-gradient on S
      double denom = (sg_S ? sg_S->at(x, y) : S.at(x, y)) + eps;
      for (int c = 0; c < 3; ++c) {
        double r = S_enh.at(x, y, c) / denom - gamma;
        term1 += std::abs(r) / n3;
        if (grad_Senh_ratio) grad_Senh_ratio->at(x, y, c) = sgn(r) / denom / n3;
      }
    }

  double m3 = static_cast<double>(C_nor.data.size());
  double term2 = 0.0;
  for (size_t i = 0; i < C_nor.data.size(); ++i) {
    double d = C_nor.data[i] - C_pri.data[i];
    term2 += std::abs(d) / m3;
    if (grad_Cnor) grad_Cnor->data[i] = sgn(d) / m3;
  }
  return term1 + term2;
}

double depth_pcc_loss(const Image& rendered, const Image& prior, const Image* alpha_mask,
                      bool* skipped, Image* grad_rendered) {
  if (rendered.width != prior.width || rendered.height != prior.height)
    throw DataError("depth_pcc_loss: shape mismatch");
  if (skipped) *skipped = false;
  if (grad_rendered) *grad_rendered = Image(rendered.width, rendered.height, 1, 0.0);

  std::vector<size_t> idx;
  size_t n_all = static_cast<size_t>(rendered.width) * rendered.height;
  idx.reserve(n_all);
  for (size_t i = 0; i < n_all; ++i) {
    if (alpha_mask == nullptr || alpha_mask->data[i] > 0.5) idx.push_back(i);
  }
  if (idx.size() < 2) {
    if (skipped) *skipped = true;
    log_debug("depth_pcc_loss: fewer than 2 covered pixels, skipped");
    return 0.0;
  }

  double mu_r = 0.0, mu_p = 0.0;
  for (size_t i : idx) {
    mu_r += rendered.data[i];
    mu_p += prior.data[i];
  }
  mu_r /= static_cast<double>(idx.size());
  mu_p /= static_cast<double>(idx.size());

  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (size_t i : idx) {
    double u = rendered.data[i] - mu_r;
    double v = prior.data[i] - mu_p;
    uu += u * u;
    vv += v * v;
    uv += u * v;
  }
  if (uu == 0.0 || vv == 0.0) {
    if (skipped) *skipped = true;
    log_debug("depth_pcc_loss: constant input, skipped");
    return 0.0;
  }
  double nu = std::sqrt(uu), nv = std::sqrt(vv);
  double rho = uv / (nu * nv);
  if (grad_rendered) {
    // d rho / d u_i with centered vectors; the mean-shift term vanishes
    // because both u and v are centered.
    for (size_t i : idx) {
      double u = rendered.data[i] - mu_r;
      double v = prior.data[i] - mu_p;
      grad_rendered->data[i] = -(v / (nu * nv) - rho * u / uu);
    }
  }
  return 1.0 - rho;
}

double recon_loss(const ComponentMaps& maps, const Image& target, double lambda_dssim,
                  double eps_l1, Image* grad_R, Image* grad_S, Image* grad_Rs,
                  const Image* sg_low) {
  Image intr = compose_intrinsic(maps);  // R*S, the DSSIM argument
  Image low = intr;
  if (!maps.Rs_map.empty())
    for (size_t i = 0; i < low.data.size(); ++i) low.data[i] += maps.Rs_map.data[i];

  bool want = grad_R != nullptr;
  Image d_low, d_intr;
  double l1 = l1_weighted(low, target, eps_l1, want ? &d_low : nullptr, sg_low);
  double ds = lambda_dssim != 0.0 ? dssim(intr, target, want ? &d_intr : nullptr) : 0.0;

  if (want) {
    *grad_R = Image(maps.R_map.width, maps.R_map.height, 3, 0.0);
    *grad_S = Image(maps.S_map.width, maps.S_map.height, 1, 0.0);
    *grad_Rs = Image(maps.R_map.width, maps.R_map.height, 3, 0.0);
    for (int y = 0; y < maps.R_map.height; ++y)
      for (int x = 0; x < maps.R_map.width; ++x) {
        double s = maps.S_map.at(x, y);
        double dS_acc = 0.0;
        for (int c = 0; c < 3; ++c) {
          double dC = (1.0 - lambda_dssim) * d_low.at(x, y, c);
          double dX = lambda_dssim != 0.0 ? lambda_dssim * d_intr.at(x, y, c) : 0.0;
          grad_R->at(x, y, c) = (dC + dX) * s;
          dS_acc += (dC + dX) * maps.R_map.at(x, y, c);
          grad_Rs->at(x, y, c) = dC;  // DSSIM path carries no transient gradient
        }
        grad_S->at(x, y) = dS_acc;
      }
  }
  return (1.0 - lambda_dssim) * l1 + lambda_dssim * ds;
}

LossBundle total_loss(const ComponentMaps& maps, const Image& C_low, const Image& C_pri,
                      int64_t iter, const LossConfig& cfg, TotalLossGrads* grads,
                      const StopGradRefs* frozen) {
  LossBundle out;
  out.weights = lambda_schedule(iter, cfg.schedule);
  bool want = grads != nullptr;

  Image dR_recon, dS_recon, dRs_recon;
  out.recon = recon_loss(maps, C_low, out.weights.dssim, cfg.eps_l1,
                         want ? &dR_recon : nullptr, want ? &dS_recon : nullptr,
                         want ? &dRs_recon : nullptr, frozen ? &frozen->low : nullptr);

  Image dS_ill;
  out.ill = illum_prior_loss(maps.S_map, C_low, cfg.lambda_smo, cfg.eps_smo,
                             want ? &dS_ill : nullptr);

  Image dRs_re;
  out.re = residual_loss(maps.Rs_map, want ? &dRs_re : nullptr);

  Image dSenh_ratio, dCnor;
  if (out.weights.enh != 0.0) {
    Image cnor = compose_enhanced(maps);
    out.enh = enhancement_loss(maps.S_map, maps.S_enh_map, cnor, C_pri, cfg.gamma, cfg.eps_enh,
                               want ? &dSenh_ratio : nullptr, want ? &dCnor : nullptr,
                               frozen ? &frozen->S : nullptr);
  }

  out.total = out.recon + out.weights.ill * out.ill + out.weights.re * out.re +
              out.weights.enh * out.enh;

  if (want) {
    int W = maps.R_map.width, H = maps.R_map.height;
    grads->dR = Image(W, H, 3, 0.0);
    grads->dS = Image(W, H, 1, 0.0);
    grads->dRs = Image(W, H, 3, 0.0);
    grads->dSenh = Image(W, H, 3, 0.0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        grads->dS.at(x, y) = dS_recon.at(x, y) + out.weights.ill * dS_ill.at(x, y);
        for (int c = 0; c < 3; ++c) {
          double dr = dR_recon.at(x, y, c);
          double drs = dRs_recon.at(x, y, c) + out.weights.re * dRs_re.at(x, y, c);
          double dse = 0.0;
          if (out.weights.enh != 0.0) {
            // C_nor = R * S_enh chains the prior term into both factors.
            dr += out.weights.enh * dCnor.at(x, y, c) * maps.S_enh_map.at(x, y, c);
            dse = out.weights.enh *
                  (dSenh_ratio.at(x, y, c) + dCnor.at(x, y, c) * maps.R_map.at(x, y, c));
          }
          grads->dR.at(x, y, c) = dr;
          grads->dRs.at(x, y, c) = drs;
          grads->dSenh.at(x, y, c) = dse;
        }
      }
  }
  return out;
}

}  // namespace llgs
