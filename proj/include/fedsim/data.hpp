#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/numeric.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Flattened grid x grid grayscale images, one per row, pixels in [0, 1].
struct LabeledDataset {
  Matrix images;  // [N x grid*grid]
  std::vector<int> labels;
  int classes = 0;
  int grid = 0;

  int size() const { return static_cast<int>(labels.size()); }
};

struct SyntheticShift {
  double brightness = 0.1;
  double noise_sigma = 0.1;
};

struct SyntheticDataset {
  LabeledDataset data;
  SyntheticShift shift;
};

enum class TriggerKind { BadNet, Blend, Sig };

struct TriggerParams {
  int patch = 2;                  // BadNet: patch side, bottom-right corner
  double blend_alpha = 0.2;       // Blend: x' = (1-a) x + a P
  std::uint64_t blend_seed = 7;   // Blend: seed of the fixed noise pattern P
  double sig_amplitude = 0.15;    // SIG: x' = clip(x + A sin(2 pi f col / g))
  double sig_freq = 6.0;
};

struct PoisonSpec {
  TriggerKind trigger = TriggerKind::BadNet;
  int target_class = 0;
  double ratio = 0.2;  // fraction of each non-target class to poison
  TriggerParams params;
};

enum class PartitionMode { Iid, Dirichlet };

struct Partition {
  std::vector<std::vector<int>> assignment;  // client -> indices into the training set
};

// Procedural stand-in for a real image corpus: per-class Gaussian bump at a
// class-indexed position plus a class-frequency stripe pattern, i.i.d. noise,
// clipped to [0, 1].
LabeledDataset generate_dataset(int classes, int per_class, int grid, double noise_sigma,
                                Rng& rng);

// Same generator with a brightness offset and its own noise level, modeling
// the gap between the real corpus and server-side synthetic data.
SyntheticDataset generate_synthetic(int classes, int per_class, int grid,
                                    const SyntheticShift& shift, Rng& rng);

Partition partition_dataset(const std::vector<int>& labels, int classes, int n_clients,
                            PartitionMode mode, double beta, Rng& rng);

// Returns a triggered copy of one flattened image row.
Vector embed_trigger(const Vector& image, int grid, const PoisonSpec& spec);

// Poisons floor(ratio * count_c) uniformly chosen samples of every class
// c != target: trigger embedded, label switched to the target class. Returns
// the modified dataset and the poisoned indices (sorted).
std::pair<LabeledDataset, std::vector<int>> poison_dataset(const LabeledDataset& dataset,
                                                           const PoisonSpec& spec, Rng& rng);

// Every non-target test sample triggered, original labels kept; target-class
// samples excluded.
LabeledDataset make_asr_testset(const LabeledDataset& clean_test, const PoisonSpec& spec);

// Binary dump: little-endian header (magic, grid, classes, N), raw float64
// pixels, int32 labels; JSON sidecar with generation parameters at
// <path>.json.
void dump_dataset(const std::filesystem::path& path, const LabeledDataset& dataset,
                  const std::string& sidecar_json);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace fedsim
