#include "llgs/image.hpp"

#include <algorithm>
#include <cmath>

#include "llgs/common.hpp"

namespace llgs {

Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double s = 0.0;
      for (int c = 0; c < img.channels; ++c) s += img.at(x, y, c);
      out.at(x, y) = s / img.channels;
    }
  }
  return out;
}

std::vector<double> channel_means(const Image& img) {
  std::vector<double> m(img.channels, 0.0);
  size_t n = static_cast<size_t>(img.width) * img.height;
  if (n == 0) return m;
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < img.channels; ++c) m[c] += img.data[i * img.channels + c];
  for (auto& v : m) v /= static_cast<double>(n);
  return m;
}

void image_minmax(const Image& img, double* mn, double* mx) {
  double lo = 0.0, hi = 0.0;
  if (!img.data.empty()) {
    lo = hi = img.data[0];
    for (double v : img.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (mn) *mn = lo;
  if (mx) *mx = hi;
}

double mean_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DataError("mean_abs_diff: shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

}  // namespace llgs
