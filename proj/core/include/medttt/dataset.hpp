#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medttt/netpbm.hpp"
#include "medttt/tensor.hpp"

namespace medttt {

struct SegmentationSample {
  std::string id;
  Tensor image;  // C x H x W in [0,1]
  Tensor mask;   // H x W binary
};

struct ManifestRow {
  std::string id, image_path, mask_path, split;
};

// CSV manifest "id,image,mask,split" with unique ids. Paths are resolved
// relative to the manifest's directory.
struct DatasetManifest {
  std::string dir;
  std::vector<ManifestRow> rows;

  std::vector<ManifestRow> split(const std::string& name) const;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

// Train/val/test counts by largest-remainder rounding of the given ratios.
std::vector<std::string> assign_splits(std::size_t n, double train_ratio,
                                       double val_ratio);

// Seeded lesion-like grayscale dataset: noisy background, 1-3 bright
// ellipses (optionally striped), exact ellipse-interior masks. Foreground
// fraction kept in [0.02, 0.5] by rejection. Writes images, masks and a
// manifest under out_dir; fully determined by the seed.
DatasetManifest synth_dataset(std::size_t n, std::size_t size,
                              std::uint64_t seed, const std::string& out_dir,
                              double train_ratio = 0.75,
                              double val_ratio = 0.25);

SegmentationSample load_sample(const DatasetManifest& m,
                               const ManifestRow& row);

enum class Augment { kNone, kFlips };

// Seeded per-epoch shuffle; flips mirror image and mask identically.
class BatchStream {
 public:
  BatchStream(const DatasetManifest& manifest, const std::string& split,
              std::size_t batch_size, std::uint64_t seed, Augment augment);

  // Samples of the next batch; empty once the epoch is exhausted.
  std::vector<SegmentationSample> next();
  void start_epoch(std::size_t epoch);
  std::size_t sample_count() const { return rows_.size(); }

 private:
  const DatasetManifest* manifest_;
  std::vector<ManifestRow> rows_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  Augment augment_;
};

}  // namespace medttt
