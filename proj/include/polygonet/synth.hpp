#pragma once

// Procedural leaf photographs: a dark, textured leaf on a bright, noisy
// background. Classes differ in aspect, lobing and margin serration.

#include "polygonet/image.hpp"
#include "polygonet/model.hpp"

#include <filesystem>

namespace polygonet {

struct LeafShape {
  double aspect = 0.45;       // half-width / half-length
  int lobes = 0;              // low-frequency outline modulation
  double lobe_depth = 0.0;
  int teeth = 0;              // serrations along the margin
  double tooth_depth = 0.0;   // relative to the local radius
  double tip = 0.3;           // apex sharpening
};

/// Shape family of a class; deterministic in `label`.
LeafShape leaf_class(int label);

/// RGB image of one leaf drawn from the class shape with random rotation,
/// scale and per-sample jitter.
Image synthetic_leaf(const LeafShape& shape, Rng& rng, int width = 1600, int height = 1200);

/// Writes `per_class` PNGs per class under root/<class>/ and returns the count.
std::size_t write_leaf_dataset(const std::filesystem::path& root, int classes, int per_class, std::uint64_t seed,
                               int width = 1600, int height = 1200);

}  // namespace polygonet
