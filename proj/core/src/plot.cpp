#include "certiflight/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace cfl {

namespace {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> cols;
  int rows = 0;

  const std::vector<double>& col(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return cols[i];
    throw PlotError("plot: CSV is missing column '" + name + "'");
  }
};

Csv read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw PlotError("plot: cannot open CSV: " + path);
  std::string line;
  if (!std::getline(is, line) || line.empty())
    throw PlotError("plot: empty CSV: " + path);
  Csv csv;
  std::istringstream hdr(line);
  std::string field;
  while (std::getline(hdr, field, ',')) csv.header.push_back(field);
  csv.cols.resize(csv.header.size());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    size_t i = 0;
    while (std::getline(row, field, ',')) {
      if (i >= csv.header.size())
        throw PlotError("plot: row wider than header in " + path);
      csv.cols[i++].push_back(std::stod(field));
    }
    if (i != csv.header.size())
      throw PlotError("plot: short row in " + path);
    ++csv.rows;
  }
  if (csv.rows == 0) throw PlotError("plot: CSV has no data rows: " + path);
  return csv;
}

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kSeriesColors[] = {
    {202, 55, 55}, {55, 122, 202}, {55, 165, 85}, {180, 130, 30},
    {130, 60, 180}, {40, 160, 160},
};

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), pix_(3 * w * h, 255) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    const size_t k = 3 * (static_cast<size_t>(y) * w_ + x);
    pix_[k] = c.r;
    pix_[k + 1] = c.g;
    pix_[k + 2] = c.b;
  }

  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
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

  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    line(x0, y0, x1, y0, c);
    line(x1, y0, x1, y1, c);
    line(x1, y1, x0, y1, c);
    line(x0, y1, x0, y0, c);
  }

  void save_ppm(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw PlotError("plot: cannot open output: " + path);
    os << "P6\n" << w_ << ' ' << h_ << "\n255\n";
    os.write(reinterpret_cast<const char*>(pix_.data()),
             static_cast<std::streamsize>(pix_.size()));
    if (!os) throw PlotError("plot: failed writing " + path);
  }

 private:
  int w_, h_;
  std::vector<std::uint8_t> pix_;
};

struct Series {
  std::string name;
  const std::vector<double>* x;
  const std::vector<double>* y;
};

struct Panel {
  std::string title;
  std::vector<Series> series;
};

void draw_panel(Canvas& canvas, const Panel& panel, int px, int py, int pw,
                int ph) {
  const Rgb frame{60, 60, 60};
  canvas.rect(px, py, px + pw - 1, py + ph - 1, frame);
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Series& s : panel.series)
    for (size_t k = 0; k < s.x->size(); ++k) {
      xmin = std::min(xmin, (*s.x)[k]);
      xmax = std::max(xmax, (*s.x)[k]);
      ymin = std::min(ymin, (*s.y)[k]);
      ymax = std::max(ymax, (*s.y)[k]);
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  const int inset = 6;
  auto tx = [&](double v) {
    return px + inset +
           static_cast<int>((v - xmin) / (xmax - xmin) * (pw - 2 * inset - 1));
  };
  auto ty = [&](double v) {
    return py + ph - 1 - inset -
           static_cast<int>((v - ymin) / (ymax - ymin) * (ph - 2 * inset - 1));
  };
  int ci = 0;
  for (const Series& s : panel.series) {
    const Rgb c = kSeriesColors[ci++ % 6];
    for (size_t k = 1; k < s.x->size(); ++k)
      canvas.line(tx((*s.x)[k - 1]), ty((*s.y)[k - 1]), tx((*s.x)[k]),
                  ty((*s.y)[k]), c);
  }
}

void emit(const std::vector<Panel>& panels, int ncols, int nrows,
          const std::string& out_prefix) {
  const int pw = 320, ph = 240, pad = 8;
  Canvas canvas(ncols * (pw + pad) + pad, nrows * (ph + pad) + pad);
  for (size_t i = 0; i < panels.size(); ++i) {
    const int cx = static_cast<int>(i) % ncols;
    const int cy = static_cast<int>(i) / ncols;
    draw_panel(canvas, panels[i], pad + cx * (pw + pad), pad + cy * (ph + pad),
               pw, ph);
  }
  canvas.save_ppm(out_prefix + ".ppm");

  std::ofstream os(out_prefix + ".txt");
  if (!os) throw PlotError("plot: cannot open output: " + out_prefix + ".txt");
  os.precision(9);
  for (size_t i = 0; i < panels.size(); ++i) {
    os << "panel " << i << ' ' << panels[i].title << '\n';
    for (const Series& s : panels[i].series) {
      os << "series " << s.name << ' ' << s.x->size() << '\n';
      for (size_t k = 0; k < s.x->size(); ++k)
        os << (*s.x)[k] << ' ' << (*s.y)[k] << '\n';
    }
  }
  if (!os) throw PlotError("plot: failed writing " + out_prefix + ".txt");
}

}  // namespace

void plot_trajectory_csv(const std::string& csv_path, PlotLayout layout,
                         const std::string& out_prefix) {
  const Csv csv = read_csv(csv_path);
  const auto& t = csv.col("t");

  // Derived series kept alive for the duration of the call.
  std::vector<double> err(csv.rows);
  for (int k = 0; k < csv.rows; ++k) {
    const double dx = csv.col("x")[k] - csv.col("ref_x")[k];
    const double dy = csv.col("y")[k] - csv.col("ref_y")[k];
    const double dz = csv.col("z")[k] - csv.col("ref_z")[k];
    err[k] = std::sqrt(dx * dx + dy * dy + dz * dz);
  }

  std::vector<Panel> panels;
  auto vs_time = [&](const std::string& title,
                     std::initializer_list<std::string> names) {
    Panel p{title, {}};
    for (const std::string& n : names) p.series.push_back({n, &t, &csv.col(n)});
    return p;
  };

  if (layout == PlotLayout::kPosition) {
    panels.push_back(vs_time("x", {"x", "ref_x"}));
    panels.push_back(vs_time("y", {"y", "ref_y"}));
    panels.push_back(vs_time("z", {"z", "ref_z"}));
    panels.push_back(vs_time("velocity", {"vx", "vy", "vz"}));
    panels.push_back(Panel{"position_error", {{"err", &t, &err}}});
    panels.push_back(vs_time("inputs", {"u1", "u2", "u3", "u4"}));
    emit(panels, 3, 2, out_prefix);
  } else {
    Panel path{"xy_path",
               {{"actual", &csv.col("x"), &csv.col("y")},
                {"reference", &csv.col("ref_x"), &csv.col("ref_y")}}};
    panels.push_back(std::move(path));
    panels.push_back(vs_time("z", {"z", "ref_z"}));
    panels.push_back(Panel{"position_error", {{"err", &t, &err}}});
    panels.push_back(vs_time("inputs", {"u1", "u2", "u3", "u4"}));
    emit(panels, 2, 2, out_prefix);
  }
}

}  // namespace cfl
