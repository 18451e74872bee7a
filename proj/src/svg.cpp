#include "xpr/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "xpr/error.hpp"

namespace xpr::svg {

namespace {

constexpr int kWidth = 720, kHeight = 440;
constexpr int kLeft = 64, kRight = 160, kTop = 40, kBottom = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series,
                      const std::string& header_comment) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (!any) {
        xmin = xmax = x;
        ymin = ymax = y;
        any = true;
      } else {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) {
    return kTop + plot_h - (y - ymin) / (ymax - ymin) * plot_h;
  };

  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\">\n";
  if (!header_comment.empty()) {
    out << "<!-- " << escape(header_comment) << " -->\n";
  }
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kLeft << "\" y=\"24\" font-size=\"16\" "
         "font-family=\"sans-serif\">"
      << escape(title) << "</text>\n";

  // Axes with 5 ticks each.
  out << "<g stroke=\"#333\" stroke-width=\"1\" font-size=\"11\" "
         "font-family=\"sans-serif\">\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
      << kLeft + plot_w << "\" y2=\"" << kTop + plot_h << "\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kTop + plot_h << "\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 5.0;
    const double fy = ymin + (ymax - ymin) * i / 5.0;
    out << "<line x1=\"" << num(px(fx)) << "\" y1=\"" << kTop + plot_h
        << "\" x2=\"" << num(px(fx)) << "\" y2=\"" << kTop + plot_h + 4
        << "\"/>\n";
    out << "<text x=\"" << num(px(fx)) << "\" y=\"" << kTop + plot_h + 18
        << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#333\">"
        << num(fx) << "</text>\n";
    out << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << num(py(fy)) << "\" x2=\""
        << kLeft << "\" y2=\"" << num(py(fy)) << "\"/>\n";
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(py(fy) + 4)
        << "\" text-anchor=\"end\" stroke=\"none\" fill=\"#333\">" << num(fy)
        << "</text>\n";
  }
  out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#333\">"
      << escape(x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << kTop + plot_h / 2
      << "\" transform=\"rotate(-90 16 " << kTop + plot_h / 2
      << ")\" text-anchor=\"middle\" stroke=\"none\" fill=\"#333\">"
      << escape(y_label) << "</text>\n";
  out << "</g>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % 8];
    std::string points;
    for (const auto& [x, y] : series[si].points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      points += num(px(x)) + "," + num(py(y)) + " ";
    }
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(si);
    out << "<line x1=\"" << kLeft + plot_w + 12 << "\" y1=\"" << num(ly)
        << "\" x2=\"" << kLeft + plot_w + 36 << "\" y2=\"" << num(ly)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kLeft + plot_w + 42 << "\" y=\"" << num(ly + 4)
        << "\" font-size=\"11\" font-family=\"sans-serif\">"
        << escape(series[si].name) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace xpr::svg
