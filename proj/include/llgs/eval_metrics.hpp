#pragma once

#include "llgs/image.hpp"
#include "llgs/ssim.hpp"

namespace llgs {

// 10*log10(peak^2/MSE), capped at 99 dB (exact at identical inputs).
double psnr(const Image& a, const Image& b, double peak = 1.0);

// sRGB <-> CIELAB, D65 white point. Channels are (L, a, b).
Image srgb_to_lab(const Image& rgb);
Image lab_to_srgb(const Image& lab);

struct AffineAlign {
  Image aligned;
  double a = 1.0;
  double b = 0.0;
  bool applied = false;  // false: constant reference or near-zero slope
};

// Least-squares luminance fit a*ref + b ~= pred in LAB space; the prediction
// luminance is mapped through (y - b)/a and recombined with its own chroma.
AffineAlign affine_align_luminance(const Image& pred, const Image& ref);

struct PairScore {
  double psnr = 0.0;
  double ssim = 0.0;
  double align_a = 1.0;
  double align_b = 0.0;
  bool aligned = false;
};

PairScore evaluate_pair(const Image& pred, const Image& ref, bool align);

}  // namespace llgs
