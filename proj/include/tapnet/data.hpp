#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tapnet/tensor.hpp"

namespace tapnet {

struct ClassRecord {
    std::string id;
    std::vector<Tensor> samples; // uniform shape across the whole split
};

/// An immutable set of classes with their samples. Train/val/test splits are
/// separate DatasetSplit values with pairwise disjoint class sets.
struct DatasetSplit {
    std::vector<ClassRecord> classes;
    std::string provenance; // "synthetic" or "image-folder"

    std::size_t class_count() const { return classes.size(); }
    const std::vector<std::size_t>& sample_shape() const;
};

/// Gaussian-cluster task: class means drawn uniformly on a sphere of radius
/// `cluster_separation`, samples normal around them with `cluster_std`.
struct SyntheticTaskSpec {
    std::size_t n_classes_pool = 20;
    std::size_t input_dim = 32;
    double cluster_std = 1.0;
    double cluster_separation = 10.0;
    std::size_t samples_per_class = 30;
    std::uint64_t seed = 0;
};

DatasetSplit generate_synthetic(const SyntheticTaskSpec& spec);

/// Partition a split's classes (in order) into disjoint train/val/test splits.
struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

struct DatasetBundle {
    DatasetSplit train;
    DatasetSplit val;
    DatasetSplit test;
};

DatasetBundle split_classes(const DatasetSplit& all, const SplitSizes& sizes);

/// Ingest root/class_name/sample files of grayscale PGM images (P2 or P5).
/// Pixels scale to [0,1]; samples are [1,H,W]; classes and files are taken in
/// lexicographic order so ingestion never depends on directory enumeration.
DatasetSplit load_image_folder(const std::string& root_path);

/// Rotate a square [H,W] plane (or the trailing plane of [C,H,W])
/// counter-clockwise by 90 degrees.
Tensor rotate90(const Tensor& sample);

/// Class-level rotation augmentation: each class becomes four classes holding
/// the 0/90/180/270-degree rotations of every sample.
DatasetSplit augment_rotations(const DatasetSplit& split);

} // namespace tapnet
