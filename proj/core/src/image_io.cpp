#include "fader/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fader::data {

namespace {

cv::Mat to_mat8(const Tensor& image) {
  const int h = static_cast<int>(image.dim(0));
  const int w = static_cast<int>(image.dim(1));
  const int c = image.rank() == 3 ? static_cast<int>(image.dim(2)) : 1;
  cv::Mat m(h, w, CV_MAKETYPE(CV_8U, c));
  for (int y = 0; y < h; ++y) {
    uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        const double v = image.rank() == 3 ? image.at(y, x, c == 3 ? 2 - k : k)  // RGB -> BGR
                                           : image.at(y, x);
        const double clamped = std::min(1.0, std::max(0.0, v));
        row[x * c + k] = static_cast<uint8_t>(std::lround(clamped * 255.0));
      }
    }
  }
  return m;
}

Tensor from_mat(const cv::Mat& m) {
  const int c = m.channels();
  Tensor out({m.rows, m.cols, c});
  for (int y = 0; y < m.rows; ++y) {
    const uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < m.cols; ++x)
      for (int k = 0; k < c; ++k)
        out.at(y, x, c == 3 ? 2 - k : k) = static_cast<double>(row[x * c + k]) / 255.0;
  }
  return out;
}

}  // namespace

Tensor load_image(const std::filesystem::path& path, int64_t height, int64_t width) {
  if (!std::filesystem::exists(path)) throw NotFound("image not found: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);  // gray is replicated to 3 channels
  if (m.empty()) throw DecodeError("cannot decode image: " + path.string());
  if (m.rows != height || m.cols != width)
    cv::resize(m, m, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0, cv::INTER_LINEAR);
  return from_mat(m);
}

Tensor load_image_native(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFound("image not found: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw DecodeError("cannot decode image: " + path.string());
  return from_mat(m);
}

Tensor load_mask(const std::filesystem::path& path, int64_t height, int64_t width) {
  if (!std::filesystem::exists(path)) throw NotFound("mask not found: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DecodeError("cannot decode mask: " + path.string());
  if (m.rows != height || m.cols != width)
    cv::resize(m, m, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0, cv::INTER_NEAREST);
  Tensor out({height, width});
  for (int y = 0; y < m.rows; ++y) {
    const uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) out.at(y, x) = row[x] > 127 ? 1.0 : 0.0;
  }
  return out;
}

void save_png(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 && image.rank() != 2) throw ShapeError("save_png: expected rank 2 or 3");
  std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), to_mat8(image))) throw IoError("cannot write: " + path.string());
}

void save_png16(const std::filesystem::path& path, const Tensor& map) {
  if (map.rank() != 2) throw ShapeError("save_png16: expected rank-2 map");
  const int h = static_cast<int>(map.dim(0));
  const int w = static_cast<int>(map.dim(1));
  cv::Mat m(h, w, CV_16UC1);
  for (int y = 0; y < h; ++y) {
    uint16_t* row = m.ptr<uint16_t>(y);
    for (int x = 0; x < w; ++x) {
      const double v = std::min(1.0, std::max(0.0, map.at(y, x)));
      row[x] = static_cast<uint16_t>(std::lround(v * 65535.0));
    }
  }
  std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw IoError("cannot write: " + path.string());
}

Tensor resize_bilinear(const Tensor& image, int64_t height, int64_t width) {
  const int64_t c = image.rank() == 3 ? image.dim(2) : 1;
  cv::Mat m(static_cast<int>(image.dim(0)), static_cast<int>(image.dim(1)),
            CV_MAKETYPE(CV_64F, static_cast<int>(c)));
  std::copy(image.data(), image.data() + image.numel(), reinterpret_cast<double*>(m.data));
  cv::resize(m, m, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0, cv::INTER_LINEAR);
  Tensor out(image.rank() == 3 ? std::vector<int64_t>{height, width, c}
                               : std::vector<int64_t>{height, width});
  std::copy(reinterpret_cast<double*>(m.data), reinterpret_cast<double*>(m.data) + out.numel(),
            out.data());
  return out;
}

Tensor resize_nearest(const Tensor& image, int64_t height, int64_t width) {
  const int64_t c = image.rank() == 3 ? image.dim(2) : 1;
  cv::Mat m(static_cast<int>(image.dim(0)), static_cast<int>(image.dim(1)),
            CV_MAKETYPE(CV_64F, static_cast<int>(c)));
  std::copy(image.data(), image.data() + image.numel(), reinterpret_cast<double*>(m.data));
  cv::resize(m, m, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0, cv::INTER_NEAREST);
  Tensor out(image.rank() == 3 ? std::vector<int64_t>{height, width, c}
                               : std::vector<int64_t>{height, width});
  std::copy(reinterpret_cast<double*>(m.data), reinterpret_cast<double*>(m.data) + out.numel(),
            out.data());
  return out;
}

}  // namespace fader::data
