#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "lfp/analysis.hpp"
#include "lfp/errors.hpp"

namespace lfp::analysis {

void write_distance_plot(const DistanceStats& s, const std::string& path, double marker_px) {
  const int W = 900, H = 560;
  const int left = 80, right = 30, top = 40, bottom = 70;
  const int pw = W - left - right, ph = H - top - bottom;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));

  double xmax = marker_px * 1.2;
  for (const auto& v : s.distances) {
    if (!v.empty() && std::isfinite(v.back())) xmax = std::max(xmax, v.back());
  }
  xmax = std::ceil(xmax / 10.0) * 10.0;
  auto px = [&](double d) { return left + static_cast<int>(std::lround(d / xmax * pw)); };
  auto py = [&](double f) { return top + ph - static_cast<int>(std::lround(f * ph)); };

  const cv::Scalar grid(225, 225, 225), axis(0, 0, 0);
  for (int k = 0; k <= 10; ++k) {
    cv::line(img, {left, py(k / 10.0)}, {left + pw, py(k / 10.0)}, grid, 1);
    cv::putText(img, std::to_string(k * 10) + "%", {10, py(k / 10.0) + 5},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_AA);
  }
  for (int k = 0; k <= 10; ++k) {
    const double d = xmax * k / 10.0;
    cv::line(img, {px(d), top}, {px(d), top + ph}, grid, 1);
    cv::putText(img, std::to_string(static_cast<int>(std::lround(d))), {px(d) - 10, top + ph + 20},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, axis, 1);
  cv::putText(img, "shortest distance to known region (px)", {left + pw / 2 - 150, H - 20},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1, cv::LINE_AA);
  cv::putText(img, "cumulative ratio of unknown pixels", {left, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              axis, 1, cv::LINE_AA);

  // Dashed receptive-field marker.
  for (int y = top; y < top + ph; y += 10) {
    cv::line(img, {px(marker_px), y}, {px(marker_px), std::min(y + 5, top + ph)},
             cv::Scalar(90, 90, 90), 1);
  }
  cv::putText(img, std::to_string(static_cast<int>(marker_px)) + " px",
              {px(marker_px) + 4, top + 15}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_AA);

  const cv::Scalar colors[4] = {{40, 40, 220}, {220, 120, 40}, {40, 160, 40}, {160, 40, 160}};
  for (int c = 0; c < 4; ++c) {
    const auto& v = s.distances[static_cast<std::size_t>(c)];
    if (v.empty()) continue;
    std::vector<cv::Point> pts;
    const int steps = pw;
    for (int i = 0; i <= steps; ++i) {
      const double d = xmax * i / steps;
      pts.emplace_back(px(d), py(s.cdf(c, d)));
    }
    cv::polylines(img, pts, false, colors[c], 2, cv::LINE_AA);
    const int ly = top + ph - 80 + 18 * c;
    cv::line(img, {left + pw - 190, ly}, {left + pw - 160, ly}, colors[c], 2);
    cv::putText(img, curve_name(c), {left + pw - 150, ly + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                axis, 1, cv::LINE_AA);
  }
  if (!cv::imwrite(path, img)) throw IoError("cannot write plot " + path);
}

}  // namespace lfp::analysis
