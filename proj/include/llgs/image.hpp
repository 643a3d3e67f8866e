#pragma once

#include <string>
#include <vector>

namespace llgs {

// Row-major float image, values nominally in [0,1] for color data but
// unbounded for rendered component maps (illumination, depth).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  size_t index(int x, int y, int c) const {
    return (static_cast<size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  bool empty() const { return data.empty(); }
  size_t size() const { return data.size(); }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Channel mean of a 3-channel image (single channel passes through).
Image to_gray(const Image& img);

// Per-channel mean values.
std::vector<double> channel_means(const Image& img);

void image_minmax(const Image& img, double* mn, double* mx);

// Elementwise |a-b| mean.
double mean_abs_diff(const Image& a, const Image& b);

}  // namespace llgs
