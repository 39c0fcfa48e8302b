#include "irt/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace irt {

void write_ppm(const std::string& path, const Image& rgb) {
  if (rgb.channels() != 3 || rgb.width() <= 0 || rgb.height() <= 0) {
    throw std::invalid_argument("write_ppm: expected a non-empty 3-channel image");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::invalid_argument("write_ppm: cannot open " + path);
  }
  out << "P6\n" << rgb.width() << " " << rgb.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(rgb.width()) * 3);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb.at(x, y, c), 0.0, 1.0);
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) {
    throw std::invalid_argument("write_ppm: short write to " + path);
  }
}

namespace {

// Skips whitespace and '#' comment lines between PPM header tokens.
int next_header_int(std::istream& in) {
  int ch = in.peek();
  while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    ch = in.peek();
  }
  int value = -1;
  in >> value;
  return value;
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::invalid_argument("read_ppm: cannot open " + path);
  }
  std::string magic;
  in >> magic;
  if (magic != "P6") {
    throw std::invalid_argument("read_ppm: unsupported magic '" + magic + "'");
  }
  const int width = next_header_int(in);
  const int height = next_header_int(in);
  const int maxval = next_header_int(in);
  if (width <= 0 || height <= 0 || maxval != 255) {
    throw std::invalid_argument("read_ppm: bad header in " + path);
  }
  in.get();  // single whitespace byte after maxval
  Image rgb(width, height, 3);
  std::vector<unsigned char> row(static_cast<std::size_t>(width) * 3);
  for (int y = 0; y < height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (!in) {
      throw std::invalid_argument("read_ppm: truncated pixel data in " + path);
    }
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        rgb.at(x, y, c) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
      }
    }
  }
  return rgb;
}

double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff: image shapes differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

}  // namespace irt
