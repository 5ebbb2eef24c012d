#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "eegmtl/errors.hpp"

namespace eegmtl {

/// Scatter of true vs predicted gaze positions in mm. Every data point is one
/// element with class="glyph" (circles for truth, crosses for predictions),
/// so a reader can count exactly 2n glyphs; legend swatches use other classes.
inline std::string scatter_svg(const std::vector<std::array<double, 2>>& truth,
                               const std::vector<std::array<double, 2>>& pred) {
    if (truth.size() != pred.size() || truth.empty()) {
        throw ShapeError("scatter needs matching nonempty truth/prediction counts, got " +
                         std::to_string(truth.size()) + " and " + std::to_string(pred.size()));
    }
    double xmax = 1.0, ymax = 1.0;
    for (const auto& v : truth) {
        xmax = std::max(xmax, std::abs(v[0]));
        ymax = std::max(ymax, std::abs(v[1]));
    }
    for (const auto& v : pred) {
        xmax = std::max(xmax, std::abs(v[0]));
        ymax = std::max(ymax, std::abs(v[1]));
    }
    xmax *= 1.1;
    ymax *= 1.1;

    const double width = 720, height = 480, margin = 56;
    const double px = (width - 2 * margin) / (2 * xmax);
    const double py = (height - 2 * margin) / (2 * ymax);
    auto sx = [&](double x) { return margin + (x + xmax) * px; };
    auto sy = [&](double y) { return height - margin - (y + ymax) * py; };

    std::ostringstream os;
    os.precision(6);
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
       << "\" fill=\"white\"/>\n";

    // axes through the origin with mm tick labels at the extremes
    os << "<line x1=\"" << margin << "\" y1=\"" << sy(0) << "\" x2=\"" << width - margin
       << "\" y2=\"" << sy(0) << "\" stroke=\"#999\" stroke-width=\"1\"/>\n";
    os << "<line x1=\"" << sx(0) << "\" y1=\"" << margin << "\" x2=\"" << sx(0) << "\" y2=\""
       << height - margin << "\" stroke=\"#999\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << width - margin << "\" y=\"" << sy(0) - 6
       << "\" font-size=\"11\" text-anchor=\"end\">" << xmax << " mm</text>\n";
    os << "<text x=\"" << sx(0) + 6 << "\" y=\"" << margin + 10 << "\" font-size=\"11\">" << ymax
       << " mm</text>\n";

    for (const auto& v : truth) {
        os << "<circle class=\"glyph\" cx=\"" << sx(v[0]) << "\" cy=\"" << sy(v[1])
           << "\" r=\"3.5\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.4\"/>\n";
    }
    for (const auto& v : pred) {
        const double x = sx(v[0]), y = sy(v[1]), r = 3.2;
        os << "<path class=\"glyph\" d=\"M" << x - r << " " << y - r << " L" << x + r << " "
           << y + r << " M" << x - r << " " << y + r << " L" << x + r << " " << y - r
           << "\" stroke=\"#d62728\" stroke-width=\"1.4\" fill=\"none\"/>\n";
    }

    // legend
    const double lx = width - margin - 150, ly = margin;
    os << "<rect x=\"" << lx - 10 << "\" y=\"" << ly - 14 << "\" width=\"160\" height=\"40\""
       << " fill=\"white\" stroke=\"#ccc\"/>\n";
    os << "<circle class=\"legend-swatch\" cx=\"" << lx << "\" cy=\"" << ly
       << "\" r=\"3.5\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.4\"/>\n";
    os << "<text x=\"" << lx + 10 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">true gaze</text>\n";
    os << "<path class=\"legend-swatch\" d=\"M" << lx - 3.2 << " " << ly + 16 - 3.2 << " L"
       << lx + 3.2 << " " << ly + 16 + 3.2 << " M" << lx - 3.2 << " " << ly + 16 + 3.2 << " L"
       << lx + 3.2 << " " << ly + 16 - 3.2
       << "\" stroke=\"#d62728\" stroke-width=\"1.4\" fill=\"none\"/>\n";
    os << "<text x=\"" << lx + 10 << "\" y=\"" << ly + 20
       << "\" font-size=\"12\">predicted gaze</text>\n";
    os << "</svg>\n";
    return os.str();
}

} // namespace eegmtl
