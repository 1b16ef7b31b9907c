#pragma once

// Brute-force reference implementations used to cross-check the library.
// They work from the textbook definitions, point by point, and share no code
// with src/.

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace apn::testing {

struct OracleGeom {
  double ws = 0, hs = 0, s = 1;
  int w = 1, h = 1;
};

struct OracleBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Per-point labels, row-major (j outer, i inner).
struct OracleLabels {
  std::vector<double> px, py;
  std::vector<std::array<double, 4>> dist;  // left, top, right, bottom
  std::vector<int> mask;
  std::vector<int> inside;
  std::vector<double> centerness;
};

OracleLabels oracle_labels(const OracleGeom& g, const OracleBox& box, double area_ratio);

// Random geometry whose lattice stays inside the patch, and a box of
// positive area that may extend past the patch.
struct OracleInstance {
  OracleGeom geom;
  OracleBox box;
  double area_ratio = 2.0;
};
OracleInstance random_instance(std::mt19937_64& rng);

// Intersection area by counting unit cells on integer boxes.
double pixel_count_iou(int ax1, int ay1, int ax2, int ay2, int bx1, int by1, int bx2, int by2);

// Success rate at each t = k/50 by counting frames with IoU > t, and
// precision at each t = 0..50 px by counting CLE < t.
std::vector<double> oracle_success(const std::vector<double>& ious);
std::vector<double> oracle_precision(const std::vector<double>& cles);
// Exact integral over [0, 1] of the success step function.
double oracle_success_integral(const std::vector<double>& ious);

}  // namespace apn::testing
