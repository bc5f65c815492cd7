#include "privshield/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace privshield {

SvgPlot::SvgPlot(std::string title, std::string xlabel, std::string ylabel,
                 int width, int height)
    : title_(std::move(title)),
      xlabel_(std::move(xlabel)),
      ylabel_(std::move(ylabel)),
      width_(width),
      height_(height) {}

void SvgPlot::add_line(std::vector<real> xs, std::vector<real> ys,
                       std::string label, std::string color) {
  check(xs.size() == ys.size(), "plot: x/y size mismatch");
  series_.push_back({true, std::move(xs), std::move(ys), std::move(label),
                     std::move(color)});
}

void SvgPlot::add_scatter(std::vector<real> xs, std::vector<real> ys,
                          std::string label, std::string color) {
  check(xs.size() == ys.size(), "plot: x/y size mismatch");
  series_.push_back({false, std::move(xs), std::move(ys), std::move(label),
                     std::move(color)});
}

namespace {

std::string fmt(real v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void SvgPlot::write(const std::string& path) const {
  real xmin = std::numeric_limits<real>::infinity(), xmax = -xmin;
  real ymin = xmin, ymax = -xmin;
  for (const Series& s : series_)
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      xmin = std::min(xmin, s.xs[i]);
      xmax = std::max(xmax, s.xs[i]);
      ymin = std::min(ymin, s.ys[i]);
      ymax = std::max(ymax, s.ys[i]);
    }
  if (!(xmin < xmax)) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (!(ymin < ymax)) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  // 5% data margin.
  const real xpad = 0.05 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;

  const int ml = 70, mr = 20, mt = 40, mb = 55;  // margins
  const real pw = width_ - ml - mr, ph = height_ - mt - mb;
  auto px = [&](real x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](real y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ofstream out(path);
  check(out.good(), "cannot create plot file " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_
      << "\" height=\"" << height_ << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width_ / 2 << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-size=\"15\">" << title_ << "</text>\n";

  // Axes and ticks.
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
      << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const real tx = xmin + (xmax - xmin) * i / ticks;
    const real ty = ymin + (ymax - ymin) * i / ticks;
    out << "<line x1=\"" << fmt(px(tx)) << "\" y1=\"" << mt + ph << "\" x2=\""
        << fmt(px(tx)) << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fmt(px(tx)) << "\" y=\"" << mt + ph + 20
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(tx) << "</text>\n";
    out << "<line x1=\"" << ml - 5 << "\" y1=\"" << fmt(py(ty)) << "\" x2=\"" << ml
        << "\" y2=\"" << fmt(py(ty)) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << fmt(py(ty) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(ty) << "</text>\n";
  }
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height_ - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel_ << "</text>\n";
  out << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << mt + ph / 2 << ")\">" << ylabel_ << "</text>\n";

  for (const Series& s : series_) {
    if (s.line && s.xs.size() > 1) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color
          << "\" stroke-width=\"2\" points=\"";
      for (std::size_t i = 0; i < s.xs.size(); ++i)
        out << fmt(px(s.xs[i])) << ',' << fmt(py(s.ys[i])) << ' ';
      out << "\"/>\n";
    }
    for (std::size_t i = 0; i < s.xs.size(); ++i)
      out << "<circle cx=\"" << fmt(px(s.xs[i])) << "\" cy=\"" << fmt(py(s.ys[i]))
          << "\" r=\"3.5\" fill=\"" << s.color << "\"/>\n";
  }

  // Legend.
  int ly = mt + 14;
  for (const Series& s : series_) {
    if (s.label.empty()) continue;
    out << "<circle cx=\"" << ml + 14 << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\""
        << s.color << "\"/>\n";
    out << "<text x=\"" << ml + 24 << "\" y=\"" << ly << "\" font-size=\"12\">"
        << s.label << "</text>\n";
    ly += 17;
  }
  out << "</svg>\n";
}

}  // namespace privshield
