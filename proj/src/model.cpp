#include "diffnaps/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "diffnaps/io.hpp"
#include "diffnaps/parallel.hpp"

namespace diffnaps {

void ModelParams::check_invariants() const {
  const std::size_t h = hidden();
  if (bias.size() != h || classifier.cols() != h) {
    throw ContractViolation("parameter shapes disagree");
  }
  for (double w : encoder.values()) {
    if (!(w >= 0.0 && w <= 1.0)) throw ContractViolation("encoder weight outside [0,1]");
  }
  for (double w : classifier.values()) {
    if (!(w >= 0.0 && w <= 1.0)) throw ContractViolation("classifier weight outside [0,1]");
  }
  for (double b : bias) {
    if (!(b <= -1.0)) throw ContractViolation("bias above -1");
  }
}

ModelParams init_params(std::size_t hidden, std::size_t features, std::size_t classes, Rng& rng,
                        double init_lo, double init_hi) {
  if (hidden < 1 || features < 2 || classes < 2) {
    throw ContractViolation("init_params requires h >= 1, m >= 2, K >= 2");
  }
  if (!(0.0 <= init_lo && init_lo <= init_hi && init_hi <= 1.0)) {
    throw ContractViolation("init range must satisfy 0 <= lo <= hi <= 1");
  }
  ModelParams p;
  p.encoder = Matrix(hidden, features);
  for (double& w : p.encoder.values()) w = init_lo + (init_hi - init_lo) * uniform01(rng);
  p.bias.assign(hidden, -1.0);
  p.classifier = Matrix(classes, hidden);
  const double scale = 1.0 / static_cast<double>(hidden);
  for (double& w : p.classifier.values()) w = uniform01(rng) * scale;
  return p;
}

BinaryMatrix::BinaryMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), bits_(rows * cols, 0), row_support_(rows), col_support_(cols) {}

std::size_t BinaryMatrix::count() const noexcept {
  std::size_t total = 0;
  for (const auto& r : row_support_) total += r.size();
  return total;
}

void BinaryMatrix::push(std::size_t r, std::size_t c) {
  bits_[r * cols_ + c] = 1;
  row_support_[r].push_back(static_cast<FeatureIndex>(c));
  col_support_[c].push_back(static_cast<std::uint32_t>(r));
}

BinaryMatrix stochastic_binarize(const Matrix& weights, Rng& rng) {
  BinaryMatrix out(weights.rows(), weights.cols());
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    const auto row = weights.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double w = row[j];
      if (!(w >= 0.0 && w <= 1.0)) {
        throw ContractViolation("stochastic_binarize: weight outside [0,1]");
      }
      if (bernoulli(rng, w)) out.push(i, j);
    }
  }
  return out;
}

BinaryMatrix deterministic_binarize(const Matrix& weights, double threshold) {
  BinaryMatrix out(weights.rows(), weights.cols());
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    const auto row = weights.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] > threshold) out.push(i, j);
    }
  }
  return out;
}

Encoding encode(std::span<const FeatureIndex> x, const BinaryMatrix& encoder_bits,
                std::span<const double> bias) {
  const std::size_t h = encoder_bits.rows();
  Encoding e{std::vector<std::uint8_t>(h, 0), std::vector<std::int32_t>(h, 0)};
  for (FeatureIndex j : x) {
    for (std::uint32_t i : encoder_bits.col_support(j)) ++e.pre[i];
  }
  for (std::size_t i = 0; i < h; ++i) {
    const auto threshold = static_cast<std::int64_t>(std::ceil(bias[i]));
    e.hidden[i] = (e.pre[i] + threshold >= 1) ? 1 : 0;
  }
  return e;
}

Decoding decode(std::span<const std::uint8_t> hidden, const BinaryMatrix& encoder_bits) {
  const std::size_t m = encoder_bits.cols();
  thread_local std::vector<std::int32_t> counts;
  thread_local std::vector<FeatureIndex> touched;
  if (counts.size() < m) counts.assign(m, 0);
  touched.clear();
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (!hidden[i]) continue;
    for (FeatureIndex j : encoder_bits.row_support(i)) {
      if (counts[j]++ == 0) touched.push_back(j);
    }
  }
  Decoding d;
  d.reconstruction.reserve(touched.size());
  d.pre.reserve(touched.size());
  if (touched.size() * 16 > m) {
    for (std::size_t j = 0; j < m; ++j) {
      if (counts[j] > 0) {
        d.reconstruction.push_back(static_cast<FeatureIndex>(j));
        d.pre.push_back(counts[j]);
        counts[j] = 0;
      }
    }
  } else {
    std::sort(touched.begin(), touched.end());
    for (FeatureIndex j : touched) {
      d.reconstruction.push_back(j);
      d.pre.push_back(counts[j]);
      counts[j] = 0;
    }
  }
  return d;
}

std::vector<double> classify(std::span<const std::uint8_t> hidden, const Matrix& classifier) {
  const std::size_t k_count = classifier.rows();
  std::vector<double> logits(k_count, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto row = classifier.row(k);
    double s = 0.0;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      if (hidden[i]) s += row[i];
    }
    logits[k] = s;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& v : logits) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : logits) v /= total;
  return logits;
}

RowActivations forward_row(std::span<const FeatureIndex> x, const BinaryMatrix& encoder_bits,
                           const ModelParams& params) {
  RowActivations a;
  a.input.assign(x.begin(), x.end());
  auto enc = encode(x, encoder_bits, params.bias);
  auto dec = decode(enc.hidden, encoder_bits);
  a.class_probs = classify(enc.hidden, params.classifier);
  a.hidden = std::move(enc.hidden);
  a.hidden_pre = std::move(enc.pre);
  a.reconstruction = std::move(dec.reconstruction);
  a.reconstruction_pre = std::move(dec.pre);
  return a;
}

ForwardTrace forward_with(std::span<const std::span<const FeatureIndex>> batch,
                          BinaryMatrix encoder_bits, const ModelParams& params,
                          unsigned threads) {
  ForwardTrace trace;
  trace.encoder_sample = std::move(encoder_bits);
  trace.rows.resize(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t r) {
    trace.rows[r] = forward_row(batch[r], trace.encoder_sample, params);
  });
  return trace;
}

ForwardTrace forward(std::span<const std::span<const FeatureIndex>> batch,
                     const ModelParams& params, Rng& rng, unsigned threads) {
  return forward_with(batch, stochastic_binarize(params.encoder, rng), params, threads);
}

ForwardTrace forward(std::span<const FeatureIndex> x, const ModelParams& params, Rng& rng) {
  for (FeatureIndex j : x) {
    if (j >= params.features()) throw ContractViolation("input feature out of range");
  }
  const std::span<const FeatureIndex> one[] = {x};
  return forward(std::span<const std::span<const FeatureIndex>>(one), params, rng);
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
  }
  return v;
}

void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

double get_f32(std::string_view bytes, std::size_t offset) {
  return static_cast<double>(std::bit_cast<float>(get_u32(bytes, offset)));
}

constexpr std::size_t kHeaderBytes = 24;

}  // namespace

std::string encode_checkpoint(const ModelParams& params) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.hidden()));
  put_u32(out, static_cast<std::uint32_t>(params.features()));
  put_u32(out, static_cast<std::uint32_t>(params.classes()));
  out.reserve(kHeaderBytes + 4 * (params.encoder.size() + params.bias.size() +
                                  params.classifier.size()));
  for (double w : params.encoder.values()) put_f32(out, w);
  for (double b : params.bias) put_f32(out, b);
  for (double w : params.classifier.values()) put_f32(out, w);
  return out;
}

ModelParams decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("checkpoint: truncated header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw FormatError("checkpoint: bad magic (not a model checkpoint)");
  }
  const std::uint32_t version = get_u32(bytes, 8);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::size_t h = get_u32(bytes, 12);
  const std::size_t m = get_u32(bytes, 16);
  const std::size_t k = get_u32(bytes, 20);
  const unsigned __int128 cells = static_cast<unsigned __int128>(h) * m + h +
                                  static_cast<unsigned __int128>(k) * h;
  const unsigned __int128 expected = kHeaderBytes + 4 * cells;
  if (bytes.size() != expected) {
    throw FormatError("checkpoint: payload size " + std::to_string(bytes.size()) +
                      " does not match header h=" + std::to_string(h) + ", m=" +
                      std::to_string(m) + ", K=" + std::to_string(k));
  }
  ModelParams p;
  p.encoder = Matrix(h, m);
  p.bias.resize(h);
  p.classifier = Matrix(k, h);
  std::size_t offset = kHeaderBytes;
  for (double& w : p.encoder.values()) { w = get_f32(bytes, offset); offset += 4; }
  for (double& b : p.bias) { b = get_f32(bytes, offset); offset += 4; }
  for (double& w : p.classifier.values()) { w = get_f32(bytes, offset); offset += 4; }
  try {
    p.check_invariants();
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return p;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace diffnaps
