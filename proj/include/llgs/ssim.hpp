#pragma once

#include "llgs/image.hpp"

namespace llgs {

// Standard SSIM: 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2,
// valid-window positions, averaged over channels. Images must be at least
// 11x11 and share shape.
double ssim(const Image& a, const Image& b);

// Mean SSIM plus its exact gradient with respect to `a`.
double ssim_with_grad(const Image& a, const Image& b, Image* grad_a);

}  // namespace llgs
