#pragma once

// Reference interpolators on regular grids: component-wise multilinear and
// log-Euclidean (multilinear in matrix-log space, then matrix exp).

#include <vector>

#include "gwpdti/field.hpp"

namespace gwpdti {

enum class HullPolicy {
  strict,       // targets outside the grid's coordinate hull are a domain error
  clamp_fringe  // targets up to one source spacing outside are clamped onto the hull
};

struct InterpolationRequest {
  const TensorGrid* source = nullptr;
  std::vector<Vec3> targets;
  HullPolicy policy = HullPolicy::strict;
};

std::vector<SymTensor3> linear_interpolate(const InterpolationRequest& req);

/// Throws ErrorKind::domain naming the first non-SPD source voxel.
std::vector<SymTensor3> logeuclid_interpolate(const InterpolationRequest& req);

}  // namespace gwpdti
