#include "apn/labels_dump.hpp"

#include <cmath>
#include <cstdio>

#include "apn/error.hpp"

namespace apn {

std::string labels_table(const GridGeometry& geom, const CornerBox& g, double area_ratio) {
  geom.validate();
  if (!(g.width() > 0.0 && g.height() > 0.0) || !std::isfinite(g.area())) {
    throw LabelError("labels-check: ground-truth box must have positive width and height");
  }
  const Tensor x = apn_regression_labels(geom, g);
  const Tensor mask = quality_mask(geom, g, area_ratio);
  std::string out = "i,j,p_i,p_j,x0,x1,x2,x3,W,cls2,cls3\n";
  char line[256];
  for (int j = 0; j < geom.h; ++j) {
    for (int i = 0; i < geom.w; ++i) {
      const auto [px, py] = geom.point(i, j);
      const Vec4 d = edge_distances(px, py, g);
      const int inside = (d[0] > 0.0 && d[1] > 0.0 && d[2] > 0.0 && d[3] > 0.0) ? 1 : 0;
      std::snprintf(line, sizeof(line), "%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%d,%.6f\n", i, j, px, py,
                    x.at(0, 0, j, i), x.at(0, 1, j, i), x.at(0, 2, j, i), x.at(0, 3, j, i),
                    static_cast<int>(mask.at(0, 0, j, i)), inside, centerness(px, py, g));
      out += line;
    }
  }
  return out;
}

}  // namespace apn
