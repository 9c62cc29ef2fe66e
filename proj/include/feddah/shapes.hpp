#pragma once

#include <cstdint>
#include <vector>

#include "feddah/federation.hpp"

namespace feddah {

enum class ShapeFamily { kCircle, kSquare, kTriangle, kRing, kBar };

// One of the 15 synthetic classes: a unique (family, size band) pair with a
// fixed fill intensity as its style.
struct ShapesTaskSpec {
    int class_id = 1;  // 1..15
    ShapeFamily family = ShapeFamily::kCircle;
    int size_band = 0;   // 0..2
    double r_lo = 0.0;   // size range
    double r_hi = 0.0;
    double intensity = 0.0;
};

ShapesTaskSpec shapes_task_spec(int class_id);

struct PlacedShape {
    int class_id = 0;
    ShapeFamily family = ShapeFamily::kCircle;
    double cx = 0.0;
    double cy = 0.0;
    double r = 0.0;
};

// Analytic membership test for a pixel center.
bool shape_contains(const PlacedShape& shape, double px, double py);

struct DatasetConfig {
    int num_clients = 4;
    int images_per_client = 200;
    int height = 32;
    int width = 32;
    int num_classes = 15;
};

// One instance of every class per image, non-overlapping placements, exact
// masks, disjoint per-client image sets, 4:1 train/test split.
Dataset generate_dataset(const DatasetConfig& cfg, uint64_t seed,
                         std::vector<std::vector<std::vector<PlacedShape>>>* placements = nullptr);

}  // namespace feddah
