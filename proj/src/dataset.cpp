#include "ucim/dataset.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ucim/rng.hpp"

namespace ucim {

namespace {

constexpr std::uint64_t kMeanStream = 0xC1A55;

}  // namespace

Dataset gen_dataset(const DatasetSpec& spec, std::uint64_t sample_stream) {
  if (spec.n_classes == 0 || spec.dim == 0) throw std::invalid_argument("gen_dataset: empty shape");
  if (spec.n_classes > spec.dim) throw std::invalid_argument("gen_dataset: need n_classes <= dim for orthogonal means");

  Dataset d;
  d.dim = spec.dim;
  d.n_classes = spec.n_classes;

  // Orthonormal class directions by Gram-Schmidt on Gaussian draws.
  GaussianStream mean_rng(RngStream(spec.seed, kMeanStream));
  d.class_means.assign(spec.n_classes * spec.dim, 0.0);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    double* v = d.class_means.data() + c * spec.dim;
    for (;;) {
      for (std::size_t j = 0; j < spec.dim; ++j) v[j] = mean_rng.next();
      for (std::size_t p = 0; p < c; ++p) {
        const double* u = d.class_means.data() + p * spec.dim;
        double dot = 0.0;
        for (std::size_t j = 0; j < spec.dim; ++j) dot += v[j] * u[j];
        for (std::size_t j = 0; j < spec.dim; ++j) v[j] -= dot * u[j] / (spec.margin * spec.margin);
      }
      double norm = 0.0;
      for (std::size_t j = 0; j < spec.dim; ++j) norm += v[j] * v[j];
      norm = std::sqrt(norm);
      if (norm < 1e-6) continue;
      for (std::size_t j = 0; j < spec.dim; ++j) v[j] *= spec.margin / norm;
      break;
    }
  }

  GaussianStream noise(RngStream(spec.seed, hash_combine(0x5A3B1E, sample_stream)));
  d.features.resize(spec.n_samples * spec.dim);
  d.labels.resize(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const auto label = static_cast<std::uint32_t>(i % spec.n_classes);
    d.labels[i] = label;
    const double* mu = d.class_means.data() + label * spec.dim;
    for (std::size_t j = 0; j < spec.dim; ++j) d.features[i * spec.dim + j] = mu[j] + noise.next();
  }
  return d;
}

double centroid_accuracy(const Dataset& d) {
  if (d.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double* x = d.sample(i);
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t pick = 0;
    for (std::size_t c = 0; c < d.n_classes; ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < d.dim; ++j) {
        const double diff = x[j] - d.class_means[c * d.dim + j];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        pick = static_cast<std::uint32_t>(c);
      }
    }
    if (pick == d.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

TensorFile dataset_to_tensors(const Dataset& d) {
  TensorFile f;
  Tensor x{"features", {static_cast<std::uint32_t>(d.size()), static_cast<std::uint32_t>(d.dim)}, {}};
  x.data.reserve(d.features.size());
  for (double v : d.features) x.data.push_back(from_real(v));
  Tensor y{"labels", {static_cast<std::uint32_t>(d.size())}, {}};
  for (std::uint32_t l : d.labels) y.data.push_back(from_real(static_cast<double>(l)));
  f.tensors = {std::move(x), std::move(y)};
  return f;
}

Dataset dataset_from_tensors(const TensorFile& f, std::size_t n_classes) {
  const Tensor* x = f.find("features");
  const Tensor* y = f.find("labels");
  if (!x || !y || x->dims.size() != 2 || y->dims.size() != 1 || x->dims[0] != y->dims[0]) {
    throw std::invalid_argument("dataset file needs features [N, dim] and labels [N]");
  }
  Dataset d;
  d.dim = x->dims[1];
  d.n_classes = n_classes;
  for (Half h : x->data) d.features.push_back(to_real(h));
  for (Half h : y->data) {
    const double v = to_real(h);
    if (!(v >= 0.0) || v >= static_cast<double>(n_classes) || v != std::floor(v)) {
      throw std::invalid_argument("dataset file: label out of range");
    }
    d.labels.push_back(static_cast<std::uint32_t>(v));
  }
  return d;
}

}  // namespace ucim
