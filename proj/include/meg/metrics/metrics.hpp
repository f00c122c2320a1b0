#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "meg/geometry.hpp"
#include "meg/nn/mlp.hpp"

namespace meg::metrics {

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

/// Mean of squared differences over every element (rows, columns and channels).
double mse(std::span<const float> generated, std::span<const float> reference);

double psnr_from_mse(double mse_value, double i_max);

/// 10 log10(i_max^2 / MSE); identical inputs give kPsnrInfinity.
double psnr(std::span<const float> generated, std::span<const float> reference, double i_max);

/// Frozen random-weight network standing in for Inception features.
/// Two tanh layers; weights drawn once from `seed` and never trained.
class FeatureExtractor {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0xFEED;

  explicit FeatureExtractor(std::size_t input_size, std::size_t feature_size = 64,
                            std::uint64_t seed = kDefaultSeed, std::size_t hidden_size = 128);

  std::size_t input_size() const noexcept { return net_.in_features(); }
  std::size_t feature_size() const noexcept { return net_.out_features(); }
  std::uint64_t seed() const noexcept { return seed_; }

  std::vector<double> features(std::span<const float> image) const;
  /// One row of features per image.
  Eigen::MatrixXd batch_features(const std::vector<std::vector<float>>& images) const;

 private:
  nn::Mlp<float> net_;
  std::uint64_t seed_;
};

/// Frechet distance between two feature samples (rows are samples):
/// |mu_g - mu_0|^2 + Tr(C_g + C_0 - 2 (C_0^1/2 C_g C_0^1/2)^1/2).
/// Covariances use 1/(n-1); eigenvalues below 1e-10 are treated as zero.
double frechet_distance(const Eigen::MatrixXd& features_g, const Eigen::MatrixXd& features_0);

/// FID-proxy of two image batches through the frozen extractor.
double fid(const std::vector<std::vector<float>>& batch_g, const std::vector<std::vector<float>>& batch_0,
           const FeatureExtractor& extractor);

/// Degenerate one-image form: squared feature-mean distance (covariance terms vanish).
double single_image_fid(std::span<const float> generated, std::span<const float> reference,
                        const FeatureExtractor& extractor);

enum class TransmissionMode { centralized, raw_feature, meg };

std::string to_string(TransmissionMode mode);
TransmissionMode parse_mode(const std::string& s);

/// Symbols sent per image: pixels, raw latents, or the compressed seed.
std::size_t symbol_count(TransmissionMode mode, const ImageGeometry& geometry, double compression_rate);

struct MetricReport {
  double psnr_db = 0.0;
  double fid_score = 0.0;
  double mse = 0.0;
  std::size_t symbols = 0;
  std::string config_hash;
};

inline constexpr int kMetricCsvVersion = 1;
std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& r);
std::string format_double(double v);

}  // namespace meg::metrics
