#include "meg/metrics/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <random>

namespace meg::metrics {

double mse(std::span<const float> generated, std::span<const float> reference) {
  if (generated.size() != reference.size() || generated.empty()) {
    throw DimensionError("mse: image sizes differ (" + std::to_string(generated.size()) + " vs " +
                         std::to_string(reference.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const double d = static_cast<double>(generated[i]) - reference[i];
    s += d * d;
  }
  return s / static_cast<double>(generated.size());
}

double psnr_from_mse(double mse_value, double i_max) {
  if (!(i_max > 0.0)) throw ArgumentError("psnr: i_max must be positive");
  if (mse_value == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(i_max * i_max / mse_value);
}

double psnr(std::span<const float> generated, std::span<const float> reference, double i_max) {
  return psnr_from_mse(mse(generated, reference), i_max);
}

FeatureExtractor::FeatureExtractor(std::size_t input_size, std::size_t feature_size, std::uint64_t seed,
                                   std::size_t hidden_size)
    : net_(input_size, {{hidden_size, nn::Activation::tanh}, {feature_size, nn::Activation::tanh}}, "fid"),
      seed_(seed) {
  std::mt19937_64 rng(seed);
  net_.initialize(rng);
}

std::vector<double> FeatureExtractor::features(std::span<const float> image) const {
  if (image.size() != input_size()) {
    throw DimensionError("feature extractor: expected " + std::to_string(input_size()) + " pixels, got " +
                         std::to_string(image.size()));
  }
  // Pixels are centered on mid-grey so the random projection sees structure, not the DC level.
  nn::Tensor x({image.size()});
  for (std::size_t i = 0; i < image.size(); ++i) x[i] = image[i] - 0.5f;
  nn::Tensor f = net_.apply(x);
  return {f.values().begin(), f.values().end()};
}

Eigen::MatrixXd FeatureExtractor::batch_features(const std::vector<std::vector<float>>& images) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(feature_size()));
  for (std::size_t r = 0; r < images.size(); ++r) {
    auto f = features(images[r]);
    for (std::size_t c = 0; c < f.size(); ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f[c];
  }
  return out;
}

namespace {

constexpr double kEigenFloor = 1e-10;

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean) {
  Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericError("fid: eigendecomposition did not converge");
  return solver;
}

double floor_eigen(double v) { return v < kEigenFloor ? 0.0 : v; }

}  // namespace

double frechet_distance(const Eigen::MatrixXd& features_g, const Eigen::MatrixXd& features_0) {
  if (features_g.rows() < 2 || features_0.rows() < 2) {
    throw ArgumentError("fid: each batch needs at least 2 images");
  }
  if (features_g.cols() != features_0.cols()) throw DimensionError("fid: feature sizes differ");
  const Eigen::VectorXd mu_g = features_g.colwise().mean();
  const Eigen::VectorXd mu_0 = features_0.colwise().mean();
  const Eigen::MatrixXd c_g = covariance(features_g, mu_g);
  const Eigen::MatrixXd c_0 = covariance(features_0, mu_0);

  auto e0 = eig(c_0);
  Eigen::VectorXd root = e0.eigenvalues().unaryExpr([](double v) { return std::sqrt(floor_eigen(v)); });
  const Eigen::MatrixXd sqrt_c0 = e0.eigenvectors() * root.asDiagonal() * e0.eigenvectors().transpose();
  auto em = eig(sqrt_c0 * c_g * sqrt_c0);
  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < em.eigenvalues().size(); ++i) trace_sqrt += std::sqrt(floor_eigen(em.eigenvalues()(i)));

  const double mean_term = (mu_g - mu_0).squaredNorm();
  const double value = mean_term + c_g.trace() + c_0.trace() - 2.0 * trace_sqrt;
  if (!std::isfinite(value)) throw NumericError("fid: non-finite result");
  return value;
}

double fid(const std::vector<std::vector<float>>& batch_g, const std::vector<std::vector<float>>& batch_0,
           const FeatureExtractor& extractor) {
  if (batch_g.size() < 2 || batch_0.size() < 2) throw ArgumentError("fid: each batch needs at least 2 images");
  return frechet_distance(extractor.batch_features(batch_g), extractor.batch_features(batch_0));
}

double single_image_fid(std::span<const float> generated, std::span<const float> reference,
                        const FeatureExtractor& extractor) {
  auto a = extractor.features(generated);
  auto b = extractor.features(reference);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::string to_string(TransmissionMode mode) {
  switch (mode) {
    case TransmissionMode::centralized:
      return "centralized";
    case TransmissionMode::raw_feature:
      return "raw_feature";
    case TransmissionMode::meg:
      return "meg";
  }
  return "unknown";
}

TransmissionMode parse_mode(const std::string& s) {
  if (s == "centralized") return TransmissionMode::centralized;
  if (s == "raw_feature") return TransmissionMode::raw_feature;
  if (s == "meg") return TransmissionMode::meg;
  throw ArgumentError("unknown transmission mode '" + s + "'");
}

std::size_t symbol_count(TransmissionMode mode, const ImageGeometry& geometry, double compression_rate) {
  switch (mode) {
    case TransmissionMode::centralized:
      return geometry.pixel_count();
    case TransmissionMode::raw_feature:
      return geometry.latent_count();
    case TransmissionMode::meg:
      return seed_length(geometry.latent_count(), compression_rate);
  }
  return 0;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string metric_csv_header() { return "psnr_db,fid_proxy,mse,symbols,config_hash"; }

std::string metric_csv_row(const MetricReport& r) {
  return format_double(r.psnr_db) + "," + format_double(r.fid_score) + "," + format_double(r.mse) + "," +
         std::to_string(r.symbols) + "," + r.config_hash;
}

}  // namespace meg::metrics
