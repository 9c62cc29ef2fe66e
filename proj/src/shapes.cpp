#include "feddah/shapes.hpp"

#include <cmath>
#include <string>

namespace feddah {

namespace {

// Size bands kept small enough that 15 disjoint shapes reliably fit in a
// 32 x 32 frame.
constexpr double kBandLo[3] = {1.6, 2.1, 2.6};
constexpr double kBandHi[3] = {1.9, 2.4, 2.9};

// Conservative circumscribed radius per family (bar is the widest at 1.25 r).
double bounding_radius(ShapeFamily family, double r) {
    switch (family) {
        case ShapeFamily::kBar: return 1.25 * r;
        default: return r;
    }
}

}  // namespace

ShapesTaskSpec shapes_task_spec(int class_id) {
    if (class_id < 1 || class_id > 15) throw ContractError("class_id must be in 1..15");
    ShapesTaskSpec spec;
    spec.class_id = class_id;
    spec.family = static_cast<ShapeFamily>((class_id - 1) % 5);
    spec.size_band = (class_id - 1) / 5;
    spec.r_lo = kBandLo[spec.size_band];
    spec.r_hi = kBandHi[spec.size_band];
    spec.intensity = 0.15 + 0.8 * static_cast<double>(class_id - 1) / 14.0;
    return spec;
}

bool shape_contains(const PlacedShape& shape, double px, double py) {
    double dx = px - shape.cx;
    double dy = py - shape.cy;
    double r = shape.r;
    switch (shape.family) {
        case ShapeFamily::kCircle:
            return dx * dx + dy * dy <= r * r;
        case ShapeFamily::kSquare: {
            double h = 0.85 * r;
            return std::fabs(dx) <= h && std::fabs(dy) <= h;
        }
        case ShapeFamily::kTriangle: {
            // Upward-pointing isoceles triangle: apex above the center.
            double top = -0.95 * r, bottom = 0.75 * r, halfw = 0.95 * r;
            if (dy < top || dy > bottom) return false;
            double t = (dy - top) / (bottom - top);
            return std::fabs(dx) <= halfw * t;
        }
        case ShapeFamily::kRing: {
            double d2 = dx * dx + dy * dy;
            double inner = 0.5 * r;
            return d2 <= r * r && d2 >= inner * inner;
        }
        case ShapeFamily::kBar:
            return std::fabs(dx) <= 1.25 * r && std::fabs(dy) <= 0.45 * r;
    }
    return false;
}

namespace {

constexpr int kShapeAttempts = 400;
constexpr int kImageAttempts = 80;
constexpr double kGap = 0.6;  // clearance between bounding circles

std::vector<PlacedShape> place_shapes(Rng& rng, int height, int width, int num_classes) {
    // Largest classes placed first; rejection sampling on bounding circles.
    std::vector<int> class_order;
    for (int c = num_classes; c >= 1; --c) class_order.push_back(c);

    for (int image_try = 0; image_try < kImageAttempts; ++image_try) {
        std::vector<PlacedShape> placed;
        bool ok = true;
        for (int class_id : class_order) {
            ShapesTaskSpec spec = shapes_task_spec(class_id);
            bool shape_ok = false;
            for (int attempt = 0; attempt < kShapeAttempts && !shape_ok; ++attempt) {
                double r = rng.uniform(spec.r_lo, spec.r_hi);
                double rb = bounding_radius(spec.family, r);
                double margin = rb + 0.6;
                PlacedShape cand{class_id, spec.family,
                                 rng.uniform(margin, width - margin),
                                 rng.uniform(margin, height - margin), r};
                shape_ok = true;
                for (const PlacedShape& other : placed) {
                    double need = rb + bounding_radius(other.family, other.r) + kGap;
                    double dx = cand.cx - other.cx, dy = cand.cy - other.cy;
                    if (dx * dx + dy * dy < need * need) {
                        shape_ok = false;
                        break;
                    }
                }
                if (shape_ok) placed.push_back(cand);
            }
            if (!shape_ok) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        // Masks must be non-empty at pixel resolution.
        bool rasterizes = true;
        for (const PlacedShape& s : placed) {
            int hits = 0;
            for (int y = 0; y < height && hits == 0; ++y) {
                for (int x = 0; x < width; ++x) {
                    if (shape_contains(s, x + 0.5, y + 0.5)) {
                        hits = 1;
                        break;
                    }
                }
            }
            if (hits == 0) {
                rasterizes = false;
                break;
            }
        }
        if (rasterizes) return placed;
    }
    throw GenerationError("could not place all shape classes without overlap");
}

SegBatch rasterize(const std::vector<PlacedShape>& placed, int height, int width,
                   int num_classes) {
    SegBatch batch;
    batch.images = Array({1, 1, height, width});
    batch.masks = Array({1, num_classes, height, width});
    size_t hw = static_cast<size_t>(height) * width;
    for (const PlacedShape& s : placed) {
        double intensity = shapes_task_spec(s.class_id).intensity;
        double* mask_plane = batch.masks.data.data() + static_cast<size_t>(s.class_id - 1) * hw;
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                if (shape_contains(s, x + 0.5, y + 0.5)) {
                    batch.images.data[static_cast<size_t>(y) * width + x] = intensity;
                    mask_plane[static_cast<size_t>(y) * width + x] = 1.0;
                }
            }
        }
    }
    return batch;
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& cfg, uint64_t seed,
                         std::vector<std::vector<std::vector<PlacedShape>>>* placements) {
    if (cfg.images_per_client < 10) {
        throw ConfigError("images_per_client must be >= 10");
    }
    if (cfg.num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (cfg.height < 16 || cfg.width < 16) throw ConfigError("image size must be >= 16");
    Dataset ds;
    ds.height = cfg.height;
    ds.width = cfg.width;
    ds.num_classes = cfg.num_classes;
    if (placements) placements->assign(cfg.num_clients, {});
    for (int c = 1; c <= cfg.num_clients; ++c) {
        ClientData data;
        int n_test = cfg.images_per_client / 5;  // 4:1 split
        int n_train = cfg.images_per_client - n_test;
        for (int i = 0; i < cfg.images_per_client; ++i) {
            Rng rng(derive_seed(seed, {kSeedData, static_cast<uint64_t>(c),
                                       static_cast<uint64_t>(i)}));
            std::vector<PlacedShape> placed =
                place_shapes(rng, cfg.height, cfg.width, cfg.num_classes);
            SegBatch batch = rasterize(placed, cfg.height, cfg.width, cfg.num_classes);
            if (placements) (*placements)[c - 1].push_back(placed);
            if (i < n_train) {
                data.train.push_back(std::move(batch));
            } else {
                data.test.push_back(std::move(batch));
            }
        }
        ds.clients.push_back(std::move(data));
    }
    return ds;
}

}  // namespace feddah
