#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lbp::svg {

struct Series {
    std::vector<double> x, y;
    std::string color = "#2060c0";
};

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(6);
    ss << v;
    return ss.str();
}

struct Frame {
    double x0, x1, y0, y1;
    double w = 720, h = 440, ml = 60, mr = 15, mt = 15, mb = 40;
    double px(double x) const { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); }
    double py(double y) const { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); }
};

inline void axes(std::ostream& out, const Frame& f, const std::string& xlabel,
                 const std::string& ylabel) {
    out << "<rect x='" << f.ml << "' y='" << f.mt << "' width='" << f.w - f.ml - f.mr
        << "' height='" << f.h - f.mt - f.mb
        << "' fill='none' stroke='#444' stroke-width='1'/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double fx = f.x0 + (f.x1 - f.x0) * i / 5.0;
        const double fy = f.y0 + (f.y1 - f.y0) * i / 5.0;
        out << "<text x='" << f.px(fx) << "' y='" << f.h - f.mb + 18
            << "' font-size='11' text-anchor='middle'>" << fmt(fx) << "</text>\n";
        out << "<text x='" << f.ml - 6 << "' y='" << f.py(fy) + 4
            << "' font-size='11' text-anchor='end'>" << fmt(fy) << "</text>\n";
    }
    out << "<text x='" << (f.ml + f.w - f.mr) / 2 << "' y='" << f.h - 6
        << "' font-size='12' text-anchor='middle'>" << xlabel << "</text>\n";
    out << "<text x='14' y='" << (f.mt + f.h - f.mb) / 2
        << "' font-size='12' text-anchor='middle' transform='rotate(-90 14 "
        << (f.mt + f.h - f.mb) / 2 << ")'>" << ylabel << "</text>\n";
}

} // namespace detail

// Line/step plot of one or more series.
inline void write_lines(const std::string& path, const std::vector<Series>& series,
                        const std::string& xlabel, const std::string& ylabel) {
    if (series.empty()) throw std::invalid_argument("svg: no series");
    detail::Frame f{1e300, -1e300, 1e300, -1e300};
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            f.x0 = std::min(f.x0, s.x[i]);
            f.x1 = std::max(f.x1, s.x[i]);
            f.y0 = std::min(f.y0, s.y[i]);
            f.y1 = std::max(f.y1, s.y[i]);
        }
    if (f.x1 <= f.x0) f.x1 = f.x0 + 1;
    if (f.y1 <= f.y0) f.y1 = f.y0 + 1;
    const double pad = 0.05 * (f.y1 - f.y0);
    f.y0 -= pad;
    f.y1 += pad;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << f.w << "' height='" << f.h
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    detail::axes(out, f, xlabel, ylabel);
    for (const auto& s : series) {
        out << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.2' points='";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            out << f.px(s.x[i]) << "," << f.py(s.y[i]) << " ";
        out << "'/>\n";
    }
    out << "</svg>\n";
}

// Histogram bars (already normalized) with an optional overlay curve.
inline void write_histogram(const std::string& path, const std::vector<double>& centers,
                            const std::vector<double>& freq, const Series& overlay,
                            const std::string& xlabel, const std::string& ylabel) {
    detail::Frame f{1e300, -1e300, 0.0, -1e300};
    for (std::size_t i = 0; i < centers.size(); ++i) {
        f.x0 = std::min(f.x0, centers[i]);
        f.x1 = std::max(f.x1, centers[i]);
        f.y1 = std::max(f.y1, freq[i]);
    }
    for (std::size_t i = 0; i < overlay.x.size(); ++i) f.y1 = std::max(f.y1, overlay.y[i]);
    if (f.x1 <= f.x0) f.x1 = f.x0 + 1;
    f.y1 *= 1.1;
    const double bw = centers.size() > 1 ? (centers[1] - centers[0]) : 1.0;
    f.x0 -= bw;
    f.x1 += bw;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << f.w << "' height='" << f.h
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    detail::axes(out, f, xlabel, ylabel);
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const double x0 = f.px(centers[i] - 0.45 * bw);
        const double x1 = f.px(centers[i] + 0.45 * bw);
        const double y0 = f.py(0.0), y1 = f.py(freq[i]);
        out << "<rect x='" << x0 << "' y='" << y1 << "' width='" << x1 - x0 << "' height='"
            << y0 - y1 << "' fill='#9ec5e8' stroke='#4080c0'/>\n";
    }
    if (!overlay.x.empty()) {
        out << "<polyline fill='none' stroke='" << overlay.color << "' stroke-width='1.6' points='";
        for (std::size_t i = 0; i < overlay.x.size(); ++i)
            out << f.px(overlay.x[i]) << "," << f.py(overlay.y[i]) << " ";
        out << "'/>\n";
    }
    out << "</svg>\n";
}

} // namespace lbp::svg
