#include "llgs/ssim.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "llgs/common.hpp"

namespace llgs {

namespace {

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin>& window_1d() {
  static const std::array<double, kWin> k = [] {
    std::array<double, kWin> w{};
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - (kWin - 1) / 2.0;
      w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
  }();
  return k;
}

// Valid-mode separable correlation of one channel plane.
std::vector<double> correlate_valid(const std::vector<double>& src, int W, int H, int* vw,
                                    int* vh) {
  const auto& k = window_1d();
  int W2 = W - kWin + 1, H2 = H - kWin + 1;
  std::vector<double> tmp(static_cast<size_t>(W2) * H, 0.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W2; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWin; ++i) s += k[i] * src[static_cast<size_t>(y) * W + x + i];
      tmp[static_cast<size_t>(y) * W2 + x] = s;
    }
  std::vector<double> out(static_cast<size_t>(W2) * H2, 0.0);
  for (int y = 0; y < H2; ++y)
    for (int x = 0; x < W2; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWin; ++i) s += k[i] * tmp[static_cast<size_t>(y + i) * W2 + x];
      out[static_cast<size_t>(y) * W2 + x] = s;
    }
  *vw = W2;
  *vh = H2;
  return out;
}

std::vector<double> extract_channel(const Image& img, int c) {
  std::vector<double> p(static_cast<size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) p[static_cast<size_t>(y) * img.width + x] = img.at(x, y, c);
  return p;
}

double ssim_impl(const Image& a, const Image& b, Image* grad_a) {
  if (!a.same_shape(b)) throw DataError("ssim: shape mismatch");
  if (a.width < kWin || a.height < kWin)
    throw DataError("ssim: images must be at least 11x11");

  const auto& k1 = window_1d();
  if (grad_a) *grad_a = Image(a.width, a.height, a.channels, 0.0);

  double total = 0.0;
  int vw = 0, vh = 0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x = extract_channel(a, c);
    std::vector<double> y = extract_channel(b, c);
    size_t n = x.size();
    std::vector<double> xx(n), yy(n), xy(n);
    for (size_t i = 0; i < n; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    std::vector<double> mx = correlate_valid(x, a.width, a.height, &vw, &vh);
    std::vector<double> my = correlate_valid(y, a.width, a.height, &vw, &vh);
    std::vector<double> mxx = correlate_valid(xx, a.width, a.height, &vw, &vh);
    std::vector<double> myy = correlate_valid(yy, a.width, a.height, &vw, &vh);
    std::vector<double> mxy = correlate_valid(xy, a.width, a.height, &vw, &vh);

    size_t nv = static_cast<size_t>(vw) * vh;
    double scale = 1.0 / (static_cast<double>(nv) * a.channels);
    std::vector<double> f_mu, f_mxx, f_mxy;
    if (grad_a) {
      f_mu.assign(nv, 0.0);
      f_mxx.assign(nv, 0.0);
      f_mxy.assign(nv, 0.0);
    }
    for (size_t p = 0; p < nv; ++p) {
      double ux = mx[p], uy = my[p];
      double sx = mxx[p] - ux * ux;
      double sy = myy[p] - uy * uy;
      double sxy = mxy[p] - ux * uy;
      double A = 2.0 * ux * uy + kC1;
      double B = 2.0 * sxy + kC2;
      double C = ux * ux + uy * uy + kC1;
      double D = sx + sy + kC2;
      double s = (A * B) / (C * D);
      total += s * scale;
      if (grad_a) {
        double sA = B / (C * D);
        double sB = A / (C * D);
        double sC = -A * B / (C * C * D);
        double sD = -A * B / (C * D * D);
        f_mu[p] = scale * (sA * 2.0 * uy + sB * (-2.0 * uy) + sC * 2.0 * ux + sD * (-2.0 * ux));
        f_mxx[p] = scale * sD;
        f_mxy[p] = scale * 2.0 * sB;
      }
    }
    if (grad_a) {
      // Scatter through the window taps: mu, mxx (chain 2x) and mxy (chain y).
      for (int py = 0; py < vh; ++py) {
        for (int px = 0; px < vw; ++px) {
          size_t p = static_cast<size_t>(py) * vw + px;
          double g1 = f_mu[p], g2 = f_mxx[p], g3 = f_mxy[p];
          if (g1 == 0.0 && g2 == 0.0 && g3 == 0.0) continue;
          for (int u = 0; u < kWin; ++u) {
            double ku = k1[u];
            for (int v = 0; v < kWin; ++v) {
              double kw = ku * k1[v];
              size_t q = static_cast<size_t>(py + u) * a.width + (px + v);
              grad_a->data[q * a.channels + c] += kw * (g1 + g2 * 2.0 * x[q] + g3 * y[q]);
            }
          }
        }
      }
    }
  }
  return total;
}

}  // namespace

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

double ssim_with_grad(const Image& a, const Image& b, Image* grad_a) {
  return ssim_impl(a, b, grad_a);
}

}  // namespace llgs
