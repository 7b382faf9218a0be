#pragma once

#include <filesystem>
#include <optional>

#include "gplab/matrix.hpp"
#include "gplab/rng.hpp"

namespace gplab {

struct Dataset {
    Matrix features;          // N x d
    std::vector<int> labels;  // N entries in [0, num_classes)
    std::optional<std::vector<int>> clean_labels;  // pre-noise ground truth
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }
    std::vector<std::size_t> class_counts() const;  // histogram of labels
    Vec sample(std::size_t i) const;
};

// Balanced Gaussian mixture: class means on a circle in the first two
// feature dims, radius separation / (2 sin(pi/C)) so the closest pair of
// means is exactly `separation` apart; unit-variance isotropic noise in all
// dims. Samples are laid out class-major, draws are class-, sample-, then
// dim-ordered, so the dataset is deterministic per seed.
Dataset gen_gaussian_mixture(std::size_t num_classes, std::size_t dim,
                             std::size_t n_per_class, double separation, Rng& rng);

// Exponential long-tail profile: keep round(N_max * ratio^(-c / (C-1)))
// samples of class c (class 0 the largest), subsampled without replacement.
// Counts that round to zero are clamped to 1 with a warning on stderr.
Dataset gen_longtail(const Dataset& base, double ratio, Rng& rng);

// Symmetric label noise. With no subset, each sample's label is replaced,
// with probability rate, by a uniform draw over the other C-1 classes. A
// class_subset confines the noise system to those classes: only their
// samples flip, and replacements are drawn uniformly over the other
// listed classes, so classes outside the subset stay entirely clean.
// Pre-noise labels are preserved in clean_labels. The coin is drawn for
// every eligible sample whether or not it fires, so the stream does not
// depend on outcomes.
Dataset inject_symmetric_noise(const Dataset& ds, double rate, Rng& rng,
                               const std::vector<int>& class_subset = {});

// CSV format, bit-exact round trip:
//   # C=<int> d=<int> N=<int> has_clean=<0|1>
//   f_1,...,f_d,label[,clean_label]
// with features printed as the shortest round-trip decimal of the 64-bit
// value ('.' decimal separator).
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace gplab
