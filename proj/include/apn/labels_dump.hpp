#pragma once

#include <string>

#include "apn/geometry.hpp"

namespace apn {

// CSV table of the anchor-free labels at every grid point, rows ordered
// row-major (j outer, i inner):
//   i,j,p_i,p_j,x0,x1,x2,x3,W,cls2,cls3
// Throws LabelError for a degenerate g and ConfigError for a bad geometry.
std::string labels_table(const GridGeometry& geom, const CornerBox& g, double area_ratio);

}  // namespace apn
