#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "privshield/tensor.hpp"

namespace privshield {

// One image with its binary attribute vector and identity label.
struct Sample {
  Tensor image;  // [C,H,W], values in [0,1]
  std::vector<std::uint8_t> attributes;
  int identity = 0;
};

struct Dataset {
  int k = 0;  // attributes per sample
  int channels = 0;
  int image_size = 0;
  int n_identities = 0;
  std::vector<Sample> samples;

  void validate() const;  // enforces the Sample invariants
};

struct SynthConfig {
  int n_identities = 0;
  int samples_per_identity = 0;
  int k_attributes = 0;
  int image_size = 32;
  int channels = 3;
  std::uint64_t seed = 0;
};

// Procedurally renders a dataset. Identity controls the base scene (background
// gradient, head ellipse, stripe texture); each attribute bit toggles a bright
// colour patch in its own cell of the bottom cue band, so attributes are
// recoverable from pixels by construction (see attribute_oracle) while
// identity lives in the global geometry. Per-sample variation: +-1px head
// jitter, global illumination scale, Gaussian pixel noise. Deterministic for a
// fixed config.
Dataset generate_synthetic(const SynthConfig& config);

// Direct pixel-rule readout of the cue band; inverse of the renderer's
// attribute encoding. Used both as the module's fidelity oracle and by tests.
std::vector<std::uint8_t> attribute_oracle(const Tensor& image, int k);

// Manifest format: UTF-8 CSV, header `path,identity,attr_0,...,attr_{k-1}`,
// image paths relative to the manifest's directory, images stored as PNG.
Dataset load_manifest(const std::string& manifest_path);
void save_dataset(const Dataset& dataset, const std::string& directory);

enum class SplitRole { Private, Adversary, Test };
const char* split_role_name(SplitRole role);

// View into a shared immutable dataset; splits of one dataset are pairwise
// disjoint by sample index.
class DatasetSplit {
 public:
  DatasetSplit() = default;
  DatasetSplit(SplitRole role, std::shared_ptr<const Dataset> source,
               std::vector<std::size_t> indices);

  SplitRole role() const { return role_; }
  std::size_t size() const { return indices_.size(); }
  const Sample& sample(std::size_t i) const { return source_->samples[indices_[i]]; }
  const std::vector<std::size_t>& indices() const { return indices_; }
  const Dataset& dataset() const { return *source_; }

 private:
  SplitRole role_ = SplitRole::Private;
  std::shared_ptr<const Dataset> source_;
  std::vector<std::size_t> indices_;
};

struct SplitSet {
  DatasetSplit x1;    // private training data
  DatasetSplit x2;    // adversary's data
  DatasetSplit test;  // evaluation data
  bool identity_disjoint = false;  // recorded split mode
};

// Splits by uniform random permutation (default) or identity-disjoint when
// identity_disjoint is set. Fractions must be positive and sum to <= 1.
// In permutation mode each split size is within 1 sample of the request; in
// identity-disjoint mode the granularity is one identity's sample count.
SplitSet split_dataset(std::shared_ptr<const Dataset> dataset,
                       double f1, double f2, double ft, std::uint64_t seed,
                       bool identity_disjoint = false);

// Appends a second dataset's samples to the source and extends the chosen
// splits with the new indices. k and channels must match.
void merge_extra_data(SplitSet& splits, const Dataset& extra, bool also_x1);

struct Batch {
  Tensor images;  // [B,C,H,W]
  Tensor attributes;  // [B,k] of 0/1
  std::vector<int> identities;
};

Batch make_batch(const DatasetSplit& split,
                 const std::vector<std::size_t>& positions);
// Whole split as one batch, in split order.
Batch full_batch(const DatasetSplit& split);

// Endless batch stream; every epoch visits each sample exactly once in an
// order derived from (shuffle_seed, epoch). Single consumer.
class BatchIterator {
 public:
  BatchIterator(const DatasetSplit& split, int batch_size,
                std::uint64_t shuffle_seed);

  Batch next();
  long epoch() const { return epoch_; }
  int batches_per_epoch() const;

 private:
  void reshuffle();

  const DatasetSplit* split_;
  int batch_size_;
  std::uint64_t seed_;
  long epoch_ = -1;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace privshield
