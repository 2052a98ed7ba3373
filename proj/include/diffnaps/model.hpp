#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "diffnaps/common.hpp"
#include "diffnaps/dataset.hpp"
#include "diffnaps/rng.hpp"

namespace diffnaps {

/// Trainable state: encoder W_E (h x m, entries in [0,1]), per-neuron bias
/// (entries <= -1) and classifier W_C (K x h, entries in [0,1]).
struct ModelParams {
  Matrix encoder;
  std::vector<double> bias;
  Matrix classifier;

  std::size_t hidden() const noexcept { return encoder.rows(); }
  std::size_t features() const noexcept { return encoder.cols(); }
  std::size_t classes() const noexcept { return classifier.rows(); }

  /// Throws ContractViolation if shapes disagree or any box constraint fails.
  void check_invariants() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

inline constexpr double kDefaultInitLo = 0.0;
inline constexpr double kDefaultInitHi = 0.1;

/// W_E ~ U[init_lo, init_hi], bias = -1, W_C ~ U[0,1] / h.
ModelParams init_params(std::size_t hidden, std::size_t features, std::size_t classes, Rng& rng,
                        double init_lo = kDefaultInitLo, double init_hi = kDefaultInitHi);

/// A {0,1} matrix with row and column incidence lists kept alongside the bits.
class BinaryMatrix {
 public:
  BinaryMatrix() = default;
  BinaryMatrix(std::size_t rows, std::size_t cols);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const noexcept { return bits_[r * cols_ + c]; }

  /// Columns set in row r, increasing.
  std::span<const FeatureIndex> row_support(std::size_t r) const noexcept {
    return row_support_[r];
  }
  /// Rows set in column c, increasing.
  std::span<const std::uint32_t> col_support(std::size_t c) const noexcept {
    return col_support_[c];
  }
  std::size_t count() const noexcept;

  /// Bits must be set in row-major order (r ascending, then c ascending).
  void push(std::size_t r, std::size_t c);

  friend bool operator==(const BinaryMatrix& a, const BinaryMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.bits_ == b.bits_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
  std::vector<std::vector<FeatureIndex>> row_support_;
  std::vector<std::vector<std::uint32_t>> col_support_;
};

/// Independent Bernoulli(W[i,j]) draw per entry. Throws ContractViolation for
/// entries outside [0,1].
BinaryMatrix stochastic_binarize(const Matrix& weights, Rng& rng);

/// Entry is 1 iff W[i,j] > threshold (strict).
BinaryMatrix deterministic_binarize(const Matrix& weights, double threshold);

struct Encoding {
  std::vector<std::uint8_t> hidden;    // z
  std::vector<std::int32_t> pre;       // W_Eb x
};

/// Neuron j fires iff pre_j + ceil(bias_j) >= 1.
Encoding encode(std::span<const FeatureIndex> x, const BinaryMatrix& encoder_bits,
                std::span<const double> bias);

struct Decoding {
  std::vector<FeatureIndex> reconstruction;  // features with x_hat = 1, increasing
  std::vector<std::int32_t> pre;             // decoder pre-activation of those features
};

/// x_hat = round(clamp(W_Eb^T z, 0, 1)); every feature not listed has pre-activation 0.
Decoding decode(std::span<const std::uint8_t> hidden, const BinaryMatrix& encoder_bits);

/// softmax(W_C z).
std::vector<double> classify(std::span<const std::uint8_t> hidden, const Matrix& classifier);

/// Activations of one input row under a fixed encoder sample.
struct RowActivations {
  std::vector<FeatureIndex> input;
  std::vector<std::uint8_t> hidden;
  std::vector<std::int32_t> hidden_pre;
  std::vector<FeatureIndex> reconstruction;
  std::vector<std::int32_t> reconstruction_pre;
  std::vector<double> class_probs;
};

/// One forward pass over a batch. All rows share the same encoder sample,
/// which the decoder reuses transposed.
struct ForwardTrace {
  BinaryMatrix encoder_sample;
  std::vector<RowActivations> rows;
};

RowActivations forward_row(std::span<const FeatureIndex> x, const BinaryMatrix& encoder_bits,
                           const ModelParams& params);

/// Samples W_Eb once and runs every row through it.
ForwardTrace forward(std::span<const std::span<const FeatureIndex>> batch,
                     const ModelParams& params, Rng& rng, unsigned threads = 1);

/// Single-row convenience overload.
ForwardTrace forward(std::span<const FeatureIndex> x, const ModelParams& params, Rng& rng);

/// Same as forward() with a caller-provided encoder sample.
ForwardTrace forward_with(std::span<const std::span<const FeatureIndex>> batch,
                          BinaryMatrix encoder_bits, const ModelParams& params,
                          unsigned threads = 1);

// Checkpoint layout (all integers and floats little-endian):
//   bytes 0..7   magic "DFNPCKPT"
//   bytes 8..11  uint32 format version (1)
//   bytes 12..23 uint32 h, uint32 m, uint32 K
//   then float32 W_E (h*m, row-major), bias (h), W_C (K*h, row-major)
inline constexpr char kCheckpointMagic[8] = {'D', 'F', 'N', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ModelParams& params);
/// Throws FormatError naming the failing field (magic, version, truncated payload).
ModelParams decode_checkpoint(std::string_view bytes);
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace diffnaps
