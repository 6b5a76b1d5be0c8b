#pragma once

#include <vector>

#include "transeq/saddle.hpp"

namespace toys {

using namespace transeq;

inline Block box(const std::string& name, Side side, std::size_t dim, double lo, double hi) {
  Block b;
  b.name = name;
  b.side = side;
  b.set = SetKind::Box;
  b.dim = dim;
  b.lower.assign(dim, lo);
  b.upper.assign(dim, hi);
  return b;
}

inline Block simplex(const std::string& name, Side side, std::size_t dim, double mass, Geometry geo) {
  Block b;
  b.name = name;
  b.side = side;
  b.set = SetKind::Simplex;
  b.geometry = geo;
  b.dim = dim;
  b.mass = mass;
  return b;
}

// min over x in [-1,1], max over y in [-1,1] of x y.
inline SaddleProblem bilinear(double x0 = 0.8, double y0 = -0.5) {
  SaddleProblem p;
  p.blocks = {box("x", Side::Min, 1, -1, 1), box("y", Side::Max, 1, -1, 1)};
  p.gradient = [](const Point& z, Point& g) {
    g[0][0] = z[1][0];
    g[1][0] = z[0][0];
  };
  p.value = [](const Point& z) { return z[0][0] * z[1][0]; };
  p.initial = {{x0}, {y0}};
  return p;
}

// Matrix game min_x max_y x^T M y on probability simplices.
inline SaddleProblem matrix_game(std::vector<std::vector<double>> m, Geometry geo = Geometry::Entropy) {
  const std::size_t rows = m.size(), cols = m[0].size();
  SaddleProblem p;
  p.blocks = {simplex("x", Side::Min, rows, 1.0, geo), simplex("y", Side::Max, cols, 1.0, geo)};
  p.gradient = [m, rows, cols](const Point& z, Point& g) {
    for (std::size_t i = 0; i < rows; ++i) {
      g[0][i] = 0.0;
      for (std::size_t j = 0; j < cols; ++j) g[0][i] += m[i][j] * z[1][j];
    }
    for (std::size_t j = 0; j < cols; ++j) {
      g[1][j] = 0.0;
      for (std::size_t i = 0; i < rows; ++i) g[1][j] += m[i][j] * z[0][i];
    }
  };
  p.value = [m, rows, cols](const Point& z) {
    double v = 0.0;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) v += z[0][i] * m[i][j] * z[1][j];
    return v;
  };
  // Off-centre start so the solver has something to do.
  std::vector<double> x(rows), y(cols);
  for (std::size_t i = 0; i < rows; ++i) x[i] = (i + 1.0);
  for (std::size_t j = 0; j < cols; ++j) y[j] = (cols - j + 0.5);
  double sx = 0, sy = 0;
  for (double v : x) sx += v;
  for (double v : y) sy += v;
  for (double& v : x) v /= sx;
  for (double& v : y) v /= sy;
  p.initial = {x, y};
  return p;
}

}  // namespace toys
