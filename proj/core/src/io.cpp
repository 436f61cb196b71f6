#include "lfp/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "lfp/errors.hpp"

namespace lfp::io {

namespace fs = std::filesystem;

namespace {

cv::Mat load(const std::string& path, int flags) {
  if (!fs::exists(path)) throw IoError("no such file: " + path);
  cv::Mat m = cv::imread(path, flags);
  if (m.empty()) throw IoError("cannot decode image: " + path);
  if (m.depth() != CV_8U && m.depth() != CV_16U) {
    throw DataError("unsupported bit depth in " + path);
  }
  return m;
}

double unit_scale(const cv::Mat& m) { return m.depth() == CV_16U ? 65535.0 : 255.0; }

double pixel(const cv::Mat& m, int y, int x, int c) {
  if (m.depth() == CV_16U) return m.ptr<std::uint16_t>(y)[x * m.channels() + c];
  return m.ptr<std::uint8_t>(y)[x * m.channels() + c];
}

nn::Tensor rgb_tensor(const std::string& path) {
  cv::Mat m = load(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
  const double k = unit_scale(m);
  nn::Tensor t = nn::Tensor::chw(3, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV stores BGR.
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = pixel(m, y, x, 2 - c) / k;
    }
  }
  return t;
}

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void save(const std::string& path, const cv::Mat& m) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path, m);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path);
}

}  // namespace

Image read_image(const std::string& path) { return Image::from_tensor(rgb_tensor(path)); }

ColorMap read_color(const std::string& path) { return ColorMap::from_tensor(rgb_tensor(path)); }

AlphaMatte read_alpha(const std::string& path) {
  cv::Mat m = load(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  const double k = unit_scale(m);
  AlphaMatte a(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) a(y, x) = pixel(m, y, x, 0) / k;
  }
  return a;
}

Trimap read_trimap(const std::string& path) {
  cv::Mat m = load(path, cv::IMREAD_GRAYSCALE);
  Trimap t(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      const int code = m.ptr<std::uint8_t>(y)[x];
      try {
        t(y, x) = Trimap::from_code(code);
      } catch (const DataError&) {
        throw DataError(path + ": trimap code " + std::to_string(code) + " at (" +
                        std::to_string(x) + ", " + std::to_string(y) +
                        ") is not one of 0, 128, 255");
      }
    }
  }
  return t;
}

void write_rgb(const std::string& path, const nn::Tensor& rgb) {
  cv::Mat m(rgb.height(), rgb.width(), CV_8UC3);
  for (int y = 0; y < m.rows; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < 3; ++c) row[x * 3 + 2 - c] = to_u8(rgb.at(c, y, x));
    }
  }
  save(path, m);
}

void write_image(const std::string& path, const Image& image) { write_rgb(path, image.tensor()); }

void write_color(const std::string& path, const ColorMap& c) { write_rgb(path, c.tensor()); }

void write_alpha(const std::string& path, const AlphaMatte& a, bool sixteen_bit) {
  if (sixteen_bit) {
    cv::Mat m(a.height(), a.width(), CV_16UC1);
    for (int y = 0; y < m.rows; ++y) {
      for (int x = 0; x < m.cols; ++x) {
        m.ptr<std::uint16_t>(y)[x] =
            static_cast<std::uint16_t>(std::lround(std::clamp(a(y, x), 0.0, 1.0) * 65535.0));
      }
    }
    save(path, m);
    return;
  }
  cv::Mat m(a.height(), a.width(), CV_8UC1);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) m.ptr<std::uint8_t>(y)[x] = to_u8(a(y, x));
  }
  save(path, m);
}

void write_trimap(const std::string& path, const Trimap& t) {
  cv::Mat m(t.height(), t.width(), CV_8UC1);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      m.ptr<std::uint8_t>(y)[x] = static_cast<std::uint8_t>(Trimap::to_code(t(y, x)));
    }
  }
  save(path, m);
}

std::vector<std::string> list_images(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace lfp::io
