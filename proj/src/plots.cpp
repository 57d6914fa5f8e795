#include "shapepose/plots.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace shapepose::plots {

namespace {

/// Gaussian KDE with Scott bandwidth, evaluated on a fixed grid.
std::vector<double> kde(const Eigen::VectorXd& samples, const std::vector<double>& grid) {
    const int n = static_cast<int>(samples.size());
    const double mean = samples.mean();
    double var = (samples.array() - mean).square().sum() / std::max(1, n - 1);
    double bw = std::pow(static_cast<double>(n), -0.2) * std::sqrt(var);
    if (bw <= 1e-9) bw = 1e-3;  // degenerate distributions still get a sliver
    std::vector<double> out(grid.size(), 0.0);
    for (size_t g = 0; g < grid.size(); ++g) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double u = (grid[g] - samples[i]) / bw;
            acc += std::exp(-0.5 * u * u);
        }
        out[g] = acc / (n * bw * std::sqrt(2.0 * 3.14159265358979323846));
    }
    return out;
}

struct ViolinShape {
    std::vector<double> grid;     // value axis
    std::vector<double> density;  // width axis
};

ViolinShape violin_shape(const Eigen::VectorXd& samples, double lo, double hi) {
    ViolinShape v;
    const int steps = 41;
    for (int i = 0; i < steps; ++i) v.grid.push_back(lo + (hi - lo) * i / (steps - 1));
    v.density = kde(samples, v.grid);
    return v;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed << v;
    return os.str();
}

void fill_polygon(Image& img, const std::vector<std::array<double, 2>>& poly,
                  float r, float g, float b) {
    // even-odd scanline fill
    double ymin = 1e18, ymax = -1e18;
    for (const auto& p : poly) {
        ymin = std::min(ymin, p[1]);
        ymax = std::max(ymax, p[1]);
    }
    for (int y = std::max(0, static_cast<int>(ymin)); y <= std::min(img.height - 1, static_cast<int>(ymax)); ++y) {
        const double py = y + 0.5;
        std::vector<double> xs;
        for (size_t i = 0; i < poly.size(); ++i) {
            const auto& a = poly[i];
            const auto& bp = poly[(i + 1) % poly.size()];
            if ((a[1] <= py && bp[1] > py) || (bp[1] <= py && a[1] > py))
                xs.push_back(a[0] + (py - a[1]) / (bp[1] - a[1]) * (bp[0] - a[0]));
        }
        std::sort(xs.begin(), xs.end());
        for (size_t i = 0; i + 1 < xs.size(); i += 2)
            for (int x = std::max(0, static_cast<int>(xs[i])); x <= std::min(img.width - 1, static_cast<int>(xs[i + 1])); ++x) {
                img.at(y, x, 0) = r;
                img.at(y, x, 1) = g;
                img.at(y, x, 2) = b;
            }
    }
}

}  // namespace

std::filesystem::path violin_plot(const std::filesystem::path& out_base,
                                  const eval::DisentanglementProfile& profile) {
    const int dims = static_cast<int>(profile.fixed_shape.cols());
    double lo = 1e18, hi = -1e18;
    for (int d = 0; d < dims; ++d) {
        lo = std::min({lo, profile.fixed_shape.col(d).minCoeff(), profile.fixed_pose.col(d).minCoeff()});
        hi = std::max({hi, profile.fixed_shape.col(d).maxCoeff(), profile.fixed_pose.col(d).maxCoeff()});
    }
    const double pad = 0.1 * (hi - lo + 1e-9);
    lo -= pad;
    hi += pad;

    const int col_w = 40, plot_h = 300, margin = 30;
    const int width = margin * 2 + dims * col_w, height = plot_h + margin * 2;
    auto value_to_y = [&](double v) {
        return margin + plot_h * (1.0 - (v - lo) / (hi - lo));
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    Image raster(width, height);
    std::fill(raster.rgb.begin(), raster.rgb.end(), 1.0f);

    struct Series {
        const Eigen::MatrixXd* data;
        const char* color;
        float r, g, b;
        double offset;  // half-violin side
    };
    const Series series[2] = {{&profile.fixed_shape, "#1f77b4", 0.12f, 0.47f, 0.71f, -1.0},
                              {&profile.fixed_pose, "#ff7f0e", 1.0f, 0.50f, 0.05f, +1.0}};

    for (int d = 0; d < dims; ++d) {
        const double cx = margin + col_w * (d + 0.5);
        for (const auto& s : series) {
            const auto shape = violin_shape(s.data->col(d), lo, hi);
            double dmax = 1e-12;
            for (double v : shape.density) dmax = std::max(dmax, v);
            std::vector<std::array<double, 2>> poly;
            for (size_t i = 0; i < shape.grid.size(); ++i)
                poly.push_back({cx + s.offset * (col_w * 0.45) * (shape.density[i] / dmax),
                                value_to_y(shape.grid[i])});
            poly.push_back({cx, value_to_y(shape.grid.back())});
            poly.push_back({cx, value_to_y(shape.grid.front())});

            svg << "<polygon fill=\"" << s.color << "\" fill-opacity=\"0.8\" points=\"";
            for (const auto& p : poly) svg << fmt(p[0]) << "," << fmt(p[1]) << " ";
            svg << "\"/>\n";
            fill_polygon(raster, poly, s.r, s.g, s.b);
        }
        svg << "<text x=\"" << fmt(cx) << "\" y=\"" << height - 8
            << "\" font-size=\"10\" text-anchor=\"middle\">" << d << "</text>\n";
    }
    svg << "</svg>\n";

    const auto svg_path = out_base.string() + ".svg";
    std::ofstream out(svg_path);
    out << svg.str();
    save_png(out_base.string() + ".png", raster);
    return svg_path;
}

Image image_row(const std::vector<Image>& images) {
    if (images.empty()) throw InvalidInput("image_row: no images");
    const int w = images[0].width, h = images[0].height;
    Image row(static_cast<int>(images.size()) * w, h);
    for (size_t i = 0; i < images.size(); ++i)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    row.at(y, static_cast<int>(i) * w + x, c) = images[i].at(y, x, c);
    return row;
}

}  // namespace shapepose::plots
