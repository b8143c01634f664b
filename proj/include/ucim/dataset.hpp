#pragma once

#include <cstdint>
#include <vector>

#include "ucim/tensor_file.hpp"

namespace ucim {

struct Dataset {
  std::size_t dim = 16;
  std::size_t n_classes = 4;
  std::vector<double> features;  // [samples][dim]
  std::vector<std::uint32_t> labels;
  std::vector<double> class_means;  // [n_classes][dim]

  std::size_t size() const { return labels.size(); }
  const double* sample(std::size_t i) const { return features.data() + i * dim; }
};

struct DatasetSpec {
  std::uint64_t seed = 1;
  std::size_t n_samples = 1000;
  std::size_t n_classes = 4;
  std::size_t dim = 16;
  // Distance of every class mean from the origin (means are orthonormal
  // directions scaled by this); noise is unit-variance Gaussian.
  double margin = 4.0;
};

// Gaussian blobs, labels cycling 0..n_classes-1, deterministic by seed.
// The means depend only on (seed, n_classes, dim, margin), so train and
// test splits drawn with different `sample_stream` share them.
Dataset gen_dataset(const DatasetSpec& spec, std::uint64_t sample_stream = 0);

// Nearest class mean; returns accuracy on `d`.
double centroid_accuracy(const Dataset& d);

// Dataset as a tensor file: "features" [N, dim] and "labels" [N] (label
// values encoded exactly as FP16 integers).
TensorFile dataset_to_tensors(const Dataset& d);
Dataset dataset_from_tensors(const TensorFile& f, std::size_t n_classes);

}  // namespace ucim
