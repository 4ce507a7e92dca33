#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace btadapt::svg {

struct Series {
  std::string label;
  std::string color;       // e.g. "#1f77b4"
  std::vector<double> x;   // episode
  std::vector<double> y;   // mean
  std::vector<double> dy;  // band half-width (std); may be empty
};

// Self-contained learning-curve figure: one mean polyline plus a translucent
// mean±std band per series, linear axes with round tick steps.
inline std::string learning_curve_plot(const std::string& title,
                                       const std::vector<Series>& series,
                                       const std::string& x_label = "episode",
                                       const std::string& y_label = "mean reward") {
  constexpr double W = 860, H = 520;
  constexpr double L = 70, R = 30, T = 46, B = 54;  // margins
  const double pw = W - L - R, ph = H - T - B;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || (!s.dy.empty() && s.dy.size() != s.y.size()))
      throw std::invalid_argument("svg: series size mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      double lo = s.y[i] - (s.dy.empty() ? 0.0 : s.dy[i]);
      double hi = s.y[i] + (s.dy.empty() ? 0.0 : s.dy[i]);
      if (!any) {
        xmin = xmax = s.x[i];
        ymin = lo;
        ymax = hi;
        any = true;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, lo);
        ymax = std::max(ymax, hi);
      }
    }
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return T + (ymax - y) / (ymax - ymin) * ph; };
  auto tick_step = [](double span) {
    double raw = span / 6.0;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (raw <= m * mag) return m * mag;
    return 10.0 * mag;
  };

  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
     << " font-size=\"16\">" << title << "</text>\n";

  // Axes and ticks.
  os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  const double xs = tick_step(xmax - xmin), ys = tick_step(ymax - ymin);
  for (double t = std::ceil(xmin / xs) * xs; t <= xmax + 1e-9; t += xs) {
    os << "<line x1=\"" << px(t) << "\" y1=\"" << T << "\" x2=\"" << px(t) << "\" y2=\""
       << T + ph << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << px(t) << "\" y=\"" << T + ph + 16
       << "\" text-anchor=\"middle\">" << t << "</text>\n";
  }
  for (double t = std::ceil(ymin / ys) * ys; t <= ymax + 1e-9; t += ys) {
    os << "<line x1=\"" << L << "\" y1=\"" << py(t) << "\" x2=\"" << L + pw << "\" y2=\""
       << py(t) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(t) + 4
       << "\" text-anchor=\"end\">" << t << "</text>\n";
  }
  os << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << T + ph / 2 << ")\">" << y_label << "</text>\n";
  os << "</g>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#333\"/>\n";

  for (const auto& s : series) {
    if (s.x.empty()) continue;
    if (!s.dy.empty()) {
      os << "<polygon fill=\"" << s.color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        os << px(s.x[i]) << ',' << py(s.y[i] + s.dy[i]) << ' ';
      for (std::size_t i = s.x.size(); i-- > 0;)
        os << px(s.x[i]) << ',' << py(s.y[i] - s.dy[i]) << ' ';
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    os << "\"/>\n";
  }

  // Legend.
  double ly = T + 14;
  for (const auto& s : series) {
    os << "<rect x=\"" << L + 12 << "\" y=\"" << ly - 9 << "\" width=\"18\" height=\"4\" fill=\""
       << s.color << "\"/>\n";
    os << "<text x=\"" << L + 36 << "\" y=\"" << ly - 3
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label << "</text>\n";
    ly += 18;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace btadapt::svg
