#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spvp/core.hpp"

namespace spvp {

/// Fitted PCA projection. components() is out_dim x in_dim, row-major, rows
/// orthonormal, each row's largest-magnitude entry positive.
class PCAModel {
 public:
  PCAModel() = default;
  PCAModel(std::size_t in_dim, std::size_t out_dim, bool whiten, std::vector<float> mean,
           std::vector<float> components, std::vector<float> eigenvalues);

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  bool whiten() const { return whiten_; }
  const std::vector<float>& mean() const { return mean_; }
  const std::vector<float>& components() const { return components_; }
  std::span<const float> component(std::size_t i) const {
    return {components_.data() + i * in_dim_, in_dim_};
  }
  const std::vector<float>& eigenvalues() const { return eigenvalues_; }

 private:
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
  bool whiten_ = false;
  std::vector<float> mean_;
  std::vector<float> components_;
  std::vector<float> eigenvalues_;
};

/// Fits on the population covariance (1/n). Uses the n x n Gram matrix
/// instead of the in_dim x in_dim covariance when samples are fewer than
/// dimensions.
PCAModel pca_fit(const Matrix& samples, std::size_t out_dim, bool whiten);

std::vector<float> pca_apply(const PCAModel& model, std::span<const float> v, bool normalize = false);
std::vector<double> pca_apply(const PCAModel& model, std::span<const double> v, bool normalize = false);

/// Maps a projected vector back into input space (unwhitened models only).
std::vector<float> pca_reconstruct(const PCAModel& model, std::span<const float> projected);

std::vector<std::uint8_t> encode_pca(const PCAModel& model);
PCAModel decode_pca(std::vector<std::uint8_t> bytes);
void save_pca(const PCAModel& model, const std::filesystem::path& path);
PCAModel load_pca(const std::filesystem::path& path);

}  // namespace spvp
