#pragma once

#include <string>
#include <vector>

#include "ata/config.hpp"
#include "ata/pipeline.hpp"
#include "ata/rng.hpp"
#include "ata/tensor.hpp"

namespace ata::io {

// "PC3D": labeled static point clouds, float32 little-endian payload.
struct StaticSet {
  std::vector<Tensor> clouds;  // each P x 3
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return clouds.size(); }
};

// "PCV4": labeled point cloud clips, float32 little-endian payload.
struct ClipSet {
  std::vector<Tensor> clips;  // each T x P x 3
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return clips.size(); }
  pipeline::ClipDataset dataset() const { return {clips, labels, num_classes}; }
};

void write_static(const std::string& path, const StaticSet& set);
StaticSet read_static(const std::string& path);
void write_clips(const std::string& path, const ClipSet& set);
ClipSet read_clips(const std::string& path);

// Synthetic sources: per-class surface primitives with Gaussian jitter,
// recentered to the centroid and scaled to unit max radius.
StaticSet gen_synth_static(int classes, int per_class, int points, double noise, RngState& rng);

enum class MotionSet { Mixed, RotationDirection };

// Synthetic targets: per-class motion programs (translation, rotation either
// way, oscillation, expansion) over a base primitive. RotationDirection is a
// two-class task whose per-frame point sets are identical across classes, so
// only temporal order separates them.
ClipSet gen_synth_dynamic(int classes, int per_class, int frames, int points, double noise,
                          MotionSet motion_set, RngState& rng);

}  // namespace ata::io
