#pragma once

// Single-threaded reference versions of the OpenMP kernels. Tests require
// the parallel kernels to match these bit-for-bit; the benchmark times both.

#include "mmloc/features.hpp"
#include "mmloc/geoloc.hpp"

namespace mmloc::serial {

double path_coverage(const Anchor& anchor, const Room& room, const std::vector<Vec2>& probes);

Dataset build_dataset(const Scenario& scenario, const AnchorRoster& roster, const DatasetRequest& request);

Dataset label_dataset(const Dataset& ds, const AnchorRoster& roster, const Room& room,
                      const LabelOptions& options = {});

}  // namespace mmloc::serial
