#include "llgs/eval_metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "llgs/common.hpp"

namespace llgs {

double psnr(const Image& a, const Image& b, double peak) {
  if (!a.same_shape(b)) throw DataError("psnr: shape mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(peak * peak / mse));
}

namespace {

constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;

// Forward sRGB->XYZ matrix (D65); the inverse is derived numerically so the
// round trip closes to machine precision.
const Eigen::Matrix3d& rgb_to_xyz() {
  static const Eigen::Matrix3d m = [] {
    Eigen::Matrix3d v;
    v << 0.4124564, 0.3575761, 0.1804375,
         0.2126729, 0.7151522, 0.0721750,
         0.0193339, 0.1191920, 0.9503041;
    return v;
  }();
  return m;
}

const Eigen::Matrix3d& xyz_to_rgb() {
  static const Eigen::Matrix3d m = rgb_to_xyz().inverse();
  return m;
}

double srgb_linearize(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double srgb_delinearize(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

double lab_finv(double f) {
  constexpr double d = 6.0 / 29.0;
  return f > d ? f * f * f : 3.0 * d * d * (f - 4.0 / 29.0);
}

}  // namespace

Image srgb_to_lab(const Image& rgb) {
  if (rgb.channels != 3) throw DataError("srgb_to_lab: 3 channels required");
  Image lab(rgb.width, rgb.height, 3);
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x) {
      Eigen::Vector3d lin(srgb_linearize(rgb.at(x, y, 0)), srgb_linearize(rgb.at(x, y, 1)),
                          srgb_linearize(rgb.at(x, y, 2)));
      Eigen::Vector3d xyz = rgb_to_xyz() * lin;
      double fx = lab_f(xyz.x() / kXn), fy = lab_f(xyz.y() / kYn), fz = lab_f(xyz.z() / kZn);
      lab.at(x, y, 0) = 116.0 * fy - 16.0;
      lab.at(x, y, 1) = 500.0 * (fx - fy);
      lab.at(x, y, 2) = 200.0 * (fy - fz);
    }
  return lab;
}

Image lab_to_srgb(const Image& lab) {
  if (lab.channels != 3) throw DataError("lab_to_srgb: 3 channels required");
  Image rgb(lab.width, lab.height, 3);
  for (int y = 0; y < lab.height; ++y)
    for (int x = 0; x < lab.width; ++x) {
      double fy = (lab.at(x, y, 0) + 16.0) / 116.0;
      double fx = fy + lab.at(x, y, 1) / 500.0;
      double fz = fy - lab.at(x, y, 2) / 200.0;
      Eigen::Vector3d xyz(kXn * lab_finv(fx), kYn * lab_finv(fy), kZn * lab_finv(fz));
      Eigen::Vector3d lin = xyz_to_rgb() * xyz;
      for (int c = 0; c < 3; ++c)
        rgb.at(x, y, c) = std::clamp(srgb_delinearize(lin[c]), 0.0, 1.0);
    }
  return rgb;
}

AffineAlign affine_align_luminance(const Image& pred, const Image& ref) {
  if (!pred.same_shape(ref) || pred.channels != 3)
    throw DataError("affine_align_luminance: 3-channel images of equal shape required");
  AffineAlign out;
  Image lab_pred = srgb_to_lab(pred);
  Image lab_ref = srgb_to_lab(ref);

  double n = static_cast<double>(pred.width) * pred.height;
  double mx = 0.0, my = 0.0;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      mx += lab_ref.at(x, y, 0);
      my += lab_pred.at(x, y, 0);
    }
  mx /= n;
  my /= n;
  double cov = 0.0, var = 0.0;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      double dx = lab_ref.at(x, y, 0) - mx;
      cov += dx * (lab_pred.at(x, y, 0) - my);
      var += dx * dx;
    }
  // Accumulation noise on a constant image leaves var at ~1e-27, not 0.
  if (var / n < 1e-9) {
    log_info("affine_align_luminance: constant reference luminance, alignment skipped");
    out.aligned = pred;
    return out;
  }
  out.a = cov / var;
  out.b = my - out.a * mx;
  if (std::abs(out.a) < 1e-6) {
    log_info("affine_align_luminance: degenerate slope, alignment skipped");
    out.a = 1.0;
    out.b = 0.0;
    out.aligned = pred;
    return out;
  }
  Image lab_out = lab_pred;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x)
      lab_out.at(x, y, 0) = (lab_pred.at(x, y, 0) - out.b) / out.a;
  out.aligned = lab_to_srgb(lab_out);
  out.applied = true;
  return out;
}

PairScore evaluate_pair(const Image& pred, const Image& ref, bool align) {
  PairScore score;
  const Image* p = &pred;
  AffineAlign aligned;
  if (align) {
    aligned = affine_align_luminance(pred, ref);
    score.align_a = aligned.a;
    score.align_b = aligned.b;
    score.aligned = aligned.applied;
    p = &aligned.aligned;
  }
  score.psnr = psnr(*p, ref);
  score.ssim = ssim(*p, ref);
  return score;
}

}  // namespace llgs
