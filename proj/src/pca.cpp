#include "spvp/pca.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "spvp/binary_io.hpp"

namespace spvp {

namespace {

constexpr char kPcaMagic[] = "PVPC";
constexpr std::uint16_t kPcaVersion = 1;
constexpr double kMinEigenvalue = 1e-10;

using MatrixXdR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v[arg] < 0) v = -v;
}

template <typename T>
std::vector<T> project(const PCAModel& model, std::span<const T> v, bool normalize) {
  if (v.size() != model.in_dim()) {
    throw DimensionError("pca_apply: input dimension " + std::to_string(v.size()) +
                         " vs model input dimension " + std::to_string(model.in_dim()));
  }
  std::vector<double> centered(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) centered[j] = static_cast<double>(v[j]) - model.mean()[j];
  std::vector<double> out(model.out_dim());
  for (std::size_t i = 0; i < model.out_dim(); ++i) {
    const auto row = model.component(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < centered.size(); ++j) acc += row[j] * centered[j];
    if (model.whiten()) {
      acc /= std::sqrt(std::max<double>(model.eigenvalues()[i], kMinEigenvalue));
    }
    out[i] = acc;
  }
  if (normalize) l2_normalize_inplace(std::span<double>(out));
  return std::vector<T>(out.begin(), out.end());
}

}  // namespace

PCAModel::PCAModel(std::size_t in_dim, std::size_t out_dim, bool whiten, std::vector<float> mean,
                   std::vector<float> components, std::vector<float> eigenvalues)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      whiten_(whiten),
      mean_(std::move(mean)),
      components_(std::move(components)),
      eigenvalues_(std::move(eigenvalues)) {
  if (in_dim_ == 0 || out_dim_ == 0 || out_dim_ > in_dim_) {
    throw DataError("pca model: invalid shape in=" + std::to_string(in_dim_) +
                    " out=" + std::to_string(out_dim_));
  }
  if (mean_.size() != in_dim_ || components_.size() != in_dim_ * out_dim_ ||
      eigenvalues_.size() != out_dim_) {
    throw DimensionError("pca model: payload sizes disagree with shape");
  }
  if (!all_finite(mean_) || !all_finite(components_) || !all_finite(eigenvalues_)) {
    throw DataError("pca model: non-finite values");
  }
  for (std::size_t i = 0; i < out_dim_; ++i) {
    if (eigenvalues_[i] < 0.0f || (i > 0 && eigenvalues_[i] > eigenvalues_[i - 1])) {
      throw DataError("pca model: eigenvalues must be non-negative and non-increasing");
    }
  }
}

PCAModel pca_fit(const Matrix& samples, std::size_t out_dim, bool whiten) {
  const std::size_t n = samples.rows();
  const std::size_t dim = samples.cols();
  if (out_dim == 0) throw UsageError("pca_fit: out_dim must be >= 1");
  if (out_dim > dim) {
    throw UsageError("pca_fit: out_dim " + std::to_string(out_dim) + " exceeds input dimension " +
                     std::to_string(dim));
  }
  if (n <= out_dim) {
    throw InsufficientDataError("pca_fit: " + std::to_string(n) + " samples for out_dim " +
                                std::to_string(out_dim));
  }
  if (!all_finite(samples.data())) throw DataError("pca_fit: non-finite sample values");

  MatrixXdR x(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = samples.row(i);
    for (std::size_t j = 0; j < dim; ++j) x(i, j) = row[j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  // Columns of `basis` are unit eigenvectors in input space, descending.
  Eigen::MatrixXd basis(dim, out_dim);
  Eigen::VectorXd values(out_dim);
  if (dim <= n) {
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("pca_fit: eigendecomposition failed");
    for (std::size_t i = 0; i < out_dim; ++i) {
      const Eigen::Index src = static_cast<Eigen::Index>(dim - 1 - i);
      basis.col(i) = solver.eigenvectors().col(src);
      values[i] = solver.eigenvalues()[src];
    }
  } else {
    const Eigen::MatrixXd gram = (x * x.transpose()) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw Error("pca_fit: eigendecomposition failed");
    const double top = std::max(solver.eigenvalues()[n - 1], 0.0);
    for (std::size_t i = 0; i < out_dim; ++i) {
      const Eigen::Index src = static_cast<Eigen::Index>(n - 1 - i);
      const double lambda = solver.eigenvalues()[src];
      if (!(lambda > 1e-12 * std::max(top, 1.0))) {
        throw InsufficientDataError("pca_fit: sample rank is below out_dim " +
                                    std::to_string(out_dim));
      }
      Eigen::VectorXd v = x.transpose() * solver.eigenvectors().col(src);
      basis.col(i) = v / v.norm();
      values[i] = lambda;
    }
  }

  std::vector<float> components(out_dim * dim);
  std::vector<float> eigenvalues(out_dim);
  for (std::size_t i = 0; i < out_dim; ++i) {
    Eigen::VectorXd v = basis.col(i);
    fix_sign(v);
    for (std::size_t j = 0; j < dim; ++j) components[i * dim + j] = static_cast<float>(v[j]);
    eigenvalues[i] = static_cast<float>(std::max(values[i], 0.0));
  }
  // Float rounding can break ties in the wrong direction.
  for (std::size_t i = 1; i < out_dim; ++i) eigenvalues[i] = std::min(eigenvalues[i], eigenvalues[i - 1]);

  std::vector<float> mean_out(dim);
  for (std::size_t j = 0; j < dim; ++j) mean_out[j] = static_cast<float>(mean[j]);
  return PCAModel(dim, out_dim, whiten, std::move(mean_out), std::move(components),
                  std::move(eigenvalues));
}

std::vector<float> pca_apply(const PCAModel& model, std::span<const float> v, bool normalize) {
  return project<float>(model, v, normalize);
}

std::vector<double> pca_apply(const PCAModel& model, std::span<const double> v, bool normalize) {
  return project<double>(model, v, normalize);
}

std::vector<float> pca_reconstruct(const PCAModel& model, std::span<const float> projected) {
  if (model.whiten()) throw UsageError("pca_reconstruct: model is whitened");
  if (projected.size() != model.out_dim()) {
    throw DimensionError("pca_reconstruct: projected dimension mismatch");
  }
  std::vector<double> acc(model.mean().begin(), model.mean().end());
  for (std::size_t i = 0; i < model.out_dim(); ++i) {
    const auto row = model.component(i);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += static_cast<double>(projected[i]) * row[j];
  }
  return std::vector<float>(acc.begin(), acc.end());
}

std::vector<std::uint8_t> encode_pca(const PCAModel& model) {
  io::ByteWriter w(kPcaMagic, kPcaVersion);
  w.u32(static_cast<std::uint32_t>(model.in_dim()));
  w.u32(static_cast<std::uint32_t>(model.out_dim()));
  w.u8(model.whiten() ? 1 : 0);
  w.f32s(model.mean());
  w.f32s(model.components());
  w.f32s(model.eigenvalues());
  return std::move(w).finish();
}

PCAModel decode_pca(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes), kPcaMagic, "pca model");
  if (r.version() != kPcaVersion) {
    throw DataError("pca model: unsupported version " + std::to_string(r.version()));
  }
  const std::uint64_t in_dim = r.u32();
  const std::uint64_t out_dim = r.u32();
  const std::uint8_t whiten = r.u8();
  if (whiten > 1) throw DataError("pca model: invalid whiten flag");
  if ((in_dim + in_dim * out_dim + out_dim) * 4 != r.remaining()) {
    throw DataError("pca model: header dimensions disagree with payload size");
  }
  std::vector<float> mean(in_dim), components(in_dim * out_dim), eigenvalues(out_dim);
  r.f32s(mean);
  r.f32s(components);
  r.f32s(eigenvalues);
  r.expect_end();
  return PCAModel(in_dim, out_dim, whiten == 1, std::move(mean), std::move(components),
                  std::move(eigenvalues));
}

void save_pca(const PCAModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_pca(model));
}

PCAModel load_pca(const std::filesystem::path& path) { return decode_pca(io::read_file(path)); }

}  // namespace spvp
