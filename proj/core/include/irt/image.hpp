// Dense row-major image container (double precision) plus binary PPM I/O
// used for debug dumps and golden files. Pixel (0,0) is the top-left
// corner; x grows rightward, y grows downward.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace irt {

class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : width_(width),
        height_(height),
        channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  double& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  double at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double value) { data_.assign(data_.size(), value); }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Writes a 3-channel image as binary PPM (P6), clamping values to [0, 1]
/// and quantizing to 8 bits. Throws std::invalid_argument on shape or I/O
/// failure.
void write_ppm(const std::string& path, const Image& rgb);

/// Reads a binary PPM back into a 3-channel image with values in [0, 1].
Image read_ppm(const std::string& path);

/// Maximum absolute difference over all samples; images must share shapes.
double max_abs_diff(const Image& a, const Image& b);

}  // namespace irt
