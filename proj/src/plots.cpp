#include "uvd/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "uvd/common.hpp"

namespace uvd {

namespace {

constexpr int kWidth = 420;
constexpr int kHeight = 280;
constexpr int kMarginLeft = 40;
constexpr int kMarginRight = 14;
constexpr int kMarginTop = 14;
constexpr int kMarginBottom = 30;

struct Rgb {
    uint8_t r, g, b;
};

constexpr Rgb kBackground{255, 255, 255};
constexpr Rgb kAxis{60, 60, 60};
constexpr Rgb kPalette[] = {
    {214, 69, 65}, {31, 119, 180}, {44, 160, 44}, {148, 103, 189}, {255, 127, 14},
};

class Canvas {
  public:
    Canvas() : pix_(size_t(kWidth) * kHeight, kBackground) {}

    void set(int x, int y, Rgb c) {
        if (x < 0 || x >= kWidth || y < 0 || y >= kHeight) return;
        pix_[size_t(y) * kWidth + x] = c;
    }

    void marker(int x, int y, Rgb c) {
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) set(x + dx, y + dy, c);
    }

    void line(int x0, int y0, int x1, int y1, Rgb c) {
        int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void write_ppm(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("plot: cannot open for writing: " + path);
        out << "P6\n" << kWidth << " " << kHeight << "\n255\n";
        out.write(reinterpret_cast<const char*>(pix_.data()),
                  std::streamsize(pix_.size() * sizeof(Rgb)));
        if (!out) throw IoError("plot: write failed: " + path);
    }

  private:
    std::vector<Rgb> pix_;
};

struct Range {
    double lo = 0.0, hi = 1.0;

    static Range of(std::vector<double> values, double pad_frac) {
        Range r{values[0], values[0]};
        for (double v : values) {
            r.lo = std::min(r.lo, v);
            r.hi = std::max(r.hi, v);
        }
        double pad = (r.hi - r.lo) * pad_frac;
        if (pad <= 0.0) pad = std::max(0.05, std::abs(r.hi) * 0.05);
        r.lo -= pad;
        r.hi += pad;
        return r;
    }

    double unit(double v) const { return (v - lo) / (hi - lo); }
};

int x_pixel(double u) {
    return kMarginLeft + int(std::lround(u * (kWidth - kMarginLeft - kMarginRight - 1)));
}

int y_pixel(double u) {
    return kHeight - kMarginBottom - 1 -
           int(std::lround(u * (kHeight - kMarginTop - kMarginBottom - 1)));
}

std::string sanitize(const std::string& name) {
    std::string out;
    for (char c : name)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out.empty() ? std::string("plot") : out;
}

}  // namespace

void render_metric_plot(const std::vector<MetricRecord>& records, const std::string& path) {
    if (records.empty()) throw std::invalid_argument("plot: no records");

    std::map<std::string, std::vector<std::pair<double, double>>> series;
    std::vector<double> xs, ys;
    for (const MetricRecord& r : records) {
        series[r.metric_name].emplace_back(r.sweep_value, r.metric_value);
        xs.push_back(r.sweep_value);
        ys.push_back(r.metric_value);
    }
    Range xr = Range::of(xs, 0.04);
    Range yr = Range::of(ys, 0.08);

    Canvas canvas;
    canvas.line(kMarginLeft, kMarginTop, kMarginLeft, kHeight - kMarginBottom - 1, kAxis);
    canvas.line(kMarginLeft, kHeight - kMarginBottom - 1, kWidth - kMarginRight - 1,
                kHeight - kMarginBottom - 1, kAxis);

    int color_index = 0;
    for (auto& [name, points] : series) {
        std::sort(points.begin(), points.end());
        Rgb c = kPalette[size_t(color_index) % std::size(kPalette)];
        ++color_index;
        int px = 0, py = 0;
        bool first = true;
        for (const auto& [xv, yv] : points) {
            int x = x_pixel(xr.unit(xv));
            int y = y_pixel(yr.unit(yv));
            if (!first) canvas.line(px, py, x, y, c);
            canvas.marker(x, y, c);
            // x-axis tick under each data point
            canvas.line(x, kHeight - kMarginBottom - 1, x, kHeight - kMarginBottom + 3, kAxis);
            px = x;
            py = y;
            first = false;
        }
    }
    canvas.write_ppm(path);
}

std::vector<std::string> emit_plots(const std::vector<MetricRecord>& records,
                                    const std::string& out_dir) {
    if (records.empty()) throw std::invalid_argument("emit_plots: no records");
    std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);

    std::vector<std::string> written;
    std::string csv_path = (dir / "metrics.csv").string();
    write_metric_csv(records, csv_path);
    written.push_back(csv_path);

    std::map<std::string, std::vector<MetricRecord>> by_protocol;
    for (const MetricRecord& r : records) by_protocol[r.protocol].push_back(r);
    for (const auto& [protocol, group] : by_protocol) {
        std::string path = (dir / (sanitize(protocol) + ".ppm")).string();
        render_metric_plot(group, path);
        written.push_back(path);
    }
    return written;
}

}  // namespace uvd
