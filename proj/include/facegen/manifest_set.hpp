#pragma once

#include <string>
#include <vector>

#include "facegen/dataset.hpp"
#include "facegen/training.hpp"

namespace facegen::dataset {

// Training adapter over a manifest: images preloaded into memory as flat
// [-1,1] columns. Desk-scale manifests fit comfortably; the loader refuses
// nothing but will tell you when it is about to hold multiple gigabytes.
template <class S>
class ManifestTrainingSet : public training::TrainingSet<S> {
 public:
  ManifestTrainingSet(const DatasetManifest& manifest, const std::string& images_dir) {
    const auto [images, tags] = load_active_images(manifest, images_dir);
    if (images.empty()) throw ValidationError("training set: manifest has no active records");
    image_size_ = manifest.image_size;
    data_.resize(3 * image_size_ * image_size_, static_cast<Eigen::Index>(images.size()));
    tags_.resize(tagspace::kTagDim, static_cast<Eigen::Index>(images.size()));
    for (std::size_t i = 0; i < images.size(); ++i) {
      data_.col(static_cast<Eigen::Index>(i)) = img::to_column<S>(images[i]);
      for (int k = 0; k < tagspace::kTagDim; ++k)
        tags_(k, static_cast<Eigen::Index>(i)) = static_cast<S>(tags[i][k]);
    }
  }

  Eigen::Index size() const override { return data_.cols(); }
  int data_dim() const override { return static_cast<int>(data_.rows()); }
  int cond_dim() const override { return tagspace::kTagDim; }

  void fetch(Eigen::Index index, Eigen::Ref<Eigen::Matrix<S, Eigen::Dynamic, 1>> data,
             Eigen::Ref<Eigen::Matrix<S, Eigen::Dynamic, 1>> tags) const override {
    data = data_.col(index);
    tags = tags_.col(index);
  }

 private:
  int image_size_ = 0;
  autodiff::DenseMat<S> data_;
  autodiff::DenseMat<S> tags_;
};

}  // namespace facegen::dataset
