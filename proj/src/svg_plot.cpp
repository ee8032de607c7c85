#include "rift/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rift {

namespace {

constexpr double kW = 640, kH = 480;
constexpr double kL = 70, kR = 30, kT = 40, kB = 50;  // margins

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
constexpr int kPaletteSize = 8;

struct Range {
  double lo = 0, hi = 1;
  void expand(double v) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  void pad() {
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
};

std::string esc(const std::string& s) {
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

void open_svg(std::ofstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << esc(title) << "</text>\n";
}

void axes(std::ofstream& out, const Range& rx, const Range& ry, const std::string& xlabel,
          const std::string& ylabel) {
  out << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << kW - kL - kR << "\" height=\""
      << kH - kT - kB << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double fx = i / 4.0;
    double px = kL + fx * (kW - kL - kR);
    double py = kH - kB - fx * (kH - kT - kB);
    std::ostringstream xv, yv;
    xv.precision(3);
    yv.precision(3);
    xv << rx.lo + fx * (rx.hi - rx.lo);
    yv << ry.lo + fx * (ry.hi - ry.lo);
    out << "<text x=\"" << px << "\" y=\"" << kH - kB + 16
        << "\" text-anchor=\"middle\" fill=\"#444\">" << xv.str() << "</text>\n";
    out << "<text x=\"" << kL - 6 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\" fill=\"#444\">" << yv.str() << "</text>\n";
  }
  out << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\">" << esc(xlabel) << "</text>\n";
  out << "<text x=\"16\" y=\"" << (kT + kH - kB) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (kT + kH - kB) / 2 << ")\">"
      << esc(ylabel) << "</text>\n";
}

double sx(double v, const Range& r) { return kL + (v - r.lo) / (r.hi - r.lo) * (kW - kL - kR); }
double sy(double v, const Range& r) {
  return kH - kB - (v - r.lo) / (r.hi - r.lo) * (kH - kT - kB);
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_line_chart: cannot write " + path);
  Range rx, ry;
  rx.lo = ry.lo = 1e300;
  rx.hi = ry.hi = -1e300;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("Series: x/y size mismatch");
    for (double v : s.x) rx.expand(v);
    for (double v : s.y) ry.expand(v);
  }
  rx.pad();
  ry.pad();
  open_svg(out, title);
  axes(out, rx, ry, xlabel, ylabel);
  int k = 0;
  for (const auto& s : series) {
    const char* color = kPalette[k % kPaletteSize];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) out << sx(s.x[i], rx) << "," << sy(s.y[i], ry) << " ";
    out << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      out << "<circle cx=\"" << sx(s.x[i], rx) << "\" cy=\"" << sy(s.y[i], ry)
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << kW - kR - 8 << "\" y=\"" << kT + 16 + 16 * k
        << "\" text-anchor=\"end\" fill=\"" << color << "\">" << esc(s.name) << "</text>\n";
    ++k;
  }
  out << "</svg>\n";
}

void write_scatter_chart(const std::string& path, const std::string& title,
                         const std::vector<double>& x, const std::vector<double>& y,
                         const std::vector<int>& labels) {
  if (x.size() != y.size() || x.size() != labels.size())
    throw std::invalid_argument("write_scatter_chart: size mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_scatter_chart: cannot write " + path);
  Range rx, ry;
  rx.lo = ry.lo = 1e300;
  rx.hi = ry.hi = -1e300;
  for (double v : x) rx.expand(v);
  for (double v : y) ry.expand(v);
  rx.pad();
  ry.pad();
  open_svg(out, title);
  axes(out, rx, ry, "", "");
  for (size_t i = 0; i < x.size(); ++i) {
    int c = labels[i] % kPaletteSize;
    if (c < 0) c += kPaletteSize;
    out << "<circle cx=\"" << sx(x[i], rx) << "\" cy=\"" << sy(y[i], ry)
        << "\" r=\"3\" fill-opacity=\"0.7\" fill=\"" << kPalette[c] << "\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace rift
