#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixred/common.hpp"
#include "mixred/families.hpp"
#include "mixred/mixtures.hpp"

namespace mixred {

// Arithmetic coder driven by any finite-alphabet mixture predictor.
//
// Interval arithmetic runs on 62-bit registers; per-symbol predictive
// probabilities are quantized to cumulative frequencies with total 2^32 and
// every symbol keeps at least one frequency unit. Renormalization emits bits
// with the classical pending-bit carry discipline, which gives the textbook
// guarantee: payload <= ceil(-log2 m~(w)) + 2 bits, m~ the quantized model.
//
// Stream layout: 8-byte big-endian symbol count, 8-byte big-endian model
// hash, then payload bytes (MSB-first bits, zero-padded to a byte).

namespace coderdetail {

inline constexpr std::uint64_t kTop = 1ULL << 62;
inline constexpr std::uint64_t kHalf = 1ULL << 61;
inline constexpr std::uint64_t kQuarter = 1ULL << 60;
inline constexpr std::uint64_t kThreeQuarter = 3ULL << 60;
inline constexpr std::uint64_t kFreqTotal = 1ULL << 32;
inline constexpr int kMaxAlphabet = 1 << 16;

class BitWriter {
 public:
  void put(int bit) {
    cur_ = std::uint8_t((cur_ << 1) | (bit & 1));
    if (++fill_ == 8) {
      bytes_.push_back(cur_);
      cur_ = 0;
      fill_ = 0;
    }
    ++bits_;
  }
  std::vector<std::uint8_t> finish() {
    std::vector<std::uint8_t> out = bytes_;
    if (fill_ > 0) out.push_back(std::uint8_t(cur_ << (8 - fill_)));
    return out;
  }
  std::uint64_t bits() const { return bits_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint8_t cur_ = 0;
  int fill_ = 0;
  std::uint64_t bits_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  // reads past the payload return 0; overdraw is tracked so truncated
  // streams are detectable
  int get() {
    if (pos_ >= 8 * bytes_.size()) {
      ++overdraw_;
      return 0;
    }
    int bit = (bytes_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1;
    ++pos_;
    return bit;
  }
  std::uint64_t overdraw() const { return overdraw_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint64_t overdraw_ = 0;
};

}  // namespace coderdetail

// cumulative frequency table over total 2^32 with a floor of 1 unit/symbol
inline std::vector<std::uint64_t> quantize_pmf(std::span<const double> probs) {
  using namespace coderdetail;
  const std::size_t k = probs.size();
  if (k < 2 || k > kMaxAlphabet)
    throw UnsupportedError("coder: alphabet must have 2..65536 symbols");
  std::vector<std::uint64_t> freq(k);
  std::uint64_t assigned = 0;
  std::size_t argmax = 0;
  for (std::size_t i = 0; i < k; ++i) {
    double p = probs[i];
    if (!(p >= 0.0)) throw NumericError("coder: negative predictive probability");
    freq[i] = 1 + std::uint64_t(p * double(kFreqTotal - k));
    assigned += freq[i];
    if (probs[i] > probs[argmax]) argmax = i;
  }
  freq[argmax] += kFreqTotal - assigned;  // leftover to the likeliest symbol
  std::vector<std::uint64_t> cum(k + 1, 0);
  for (std::size_t i = 0; i < k; ++i) cum[i + 1] = cum[i] + freq[i];
  return cum;
}

class ArithmeticEncoder {
 public:
  void encode(std::uint64_t cum_lo, std::uint64_t cum_hi, std::uint64_t total) {
    using namespace coderdetail;
    unsigned __int128 range = (unsigned __int128)(high_ - low_) + 1;
    std::uint64_t new_high = low_ + std::uint64_t(range * cum_hi / total) - 1;
    std::uint64_t new_low = low_ + std::uint64_t(range * cum_lo / total);
    model_bits_ += std::log2(double(range)) -
                   std::log2(double(new_high - new_low) + 1.0);
    low_ = new_low;
    high_ = new_high;
    for (;;) {
      if (high_ < kHalf) {
        emit(0);
      } else if (low_ >= kHalf) {
        emit(1);
        low_ -= kHalf;
        high_ -= kHalf;
      } else if (low_ >= kQuarter && high_ < kThreeQuarter) {
        ++pending_;
        low_ -= kQuarter;
        high_ -= kQuarter;
      } else {
        break;
      }
      low_ <<= 1;
      high_ = (high_ << 1) | 1;
    }
  }

  std::vector<std::uint8_t> finish(std::uint64_t* bits_out) {
    ++pending_;
    if (low_ < coderdetail::kQuarter)
      emit(0);
    else
      emit(1);
    if (bits_out) *bits_out = writer_.bits();
    return writer_.finish();
  }

  // realized -log2 of the quantized model along the coded sequence
  double model_cost_bits() const { return model_bits_; }

 private:
  void emit(int bit) {
    writer_.put(bit);
    for (; pending_ > 0; --pending_) writer_.put(bit ^ 1);
  }

  std::uint64_t low_ = 0;
  std::uint64_t high_ = coderdetail::kTop - 1;
  std::uint64_t pending_ = 0;
  double model_bits_ = 0.0;
  coderdetail::BitWriter writer_;
};

class ArithmeticDecoder {
 public:
  explicit ArithmeticDecoder(std::span<const std::uint8_t> payload)
      : reader_(payload) {
    for (int i = 0; i < 62; ++i) value_ = (value_ << 1) | std::uint64_t(reader_.get());
  }

  std::size_t decode(std::span<const std::uint64_t> cum) {
    using namespace coderdetail;
    const std::uint64_t total = cum.back();
    unsigned __int128 range = (unsigned __int128)(high_ - low_) + 1;
    std::uint64_t scaled =
        std::uint64_t((((unsigned __int128)(value_ - low_) + 1) * total - 1) / range);
    // binary search for the symbol with cum[k] <= scaled < cum[k+1]
    std::size_t lo = 0, hi = cum.size() - 1;
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      if (cum[mid] <= scaled)
        lo = mid;
      else
        hi = mid;
    }
    const std::size_t sym = lo;
    high_ = low_ + std::uint64_t(range * cum[sym + 1] / total) - 1;
    low_ = low_ + std::uint64_t(range * cum[sym] / total);
    for (;;) {
      if (high_ < kHalf) {
        // nothing
      } else if (low_ >= kHalf) {
        low_ -= kHalf;
        high_ -= kHalf;
        value_ -= kHalf;
      } else if (low_ >= kQuarter && high_ < kThreeQuarter) {
        low_ -= kQuarter;
        high_ -= kQuarter;
        value_ -= kQuarter;
      } else {
        break;
      }
      low_ <<= 1;
      high_ = (high_ << 1) | 1;
      value_ = (value_ << 1) | std::uint64_t(reader_.get());
    }
    return sym;
  }

  std::uint64_t overdraw() const { return reader_.overdraw(); }

 private:
  std::uint64_t low_ = 0;
  std::uint64_t high_ = coderdetail::kTop - 1;
  std::uint64_t value_ = 0;
  coderdetail::BitReader reader_;
};

// ---------------------------------------------------------------------------
struct CodedBitstream {
  std::uint64_t n = 0;
  std::uint64_t model_hash = 0;
  std::vector<std::uint8_t> payload;
  std::uint64_t payload_bits = 0;   // bits before byte padding
  double model_cost_bits = 0.0;     // in-memory only, not serialized
};

inline CodedBitstream encode(const PredictorFactory& make_predictor,
                             std::span<const int> sequence,
                             std::uint64_t model_hash = 0) {
  auto pred = make_predictor();
  if (pred->alphabet() > coderdetail::kMaxAlphabet)
    throw UnsupportedError("coder: alphabet larger than 2^16");
  CodedBitstream out;
  out.n = sequence.size();
  out.model_hash = model_hash;
  if (sequence.empty()) return out;
  ArithmeticEncoder enc;
  for (int sym : sequence) {
    if (sym < 0 || sym >= pred->alphabet())
      throw std::domain_error("coder: symbol outside the model alphabet");
    Vec probs = pred->predictive_probs();
    auto cum = quantize_pmf(probs);
    enc.encode(cum[std::size_t(sym)], cum[std::size_t(sym) + 1], cum.back());
    pred->update(sym);
  }
  out.payload = enc.finish(&out.payload_bits);
  out.model_cost_bits = enc.model_cost_bits();
  return out;
}

inline std::vector<int> decode(const PredictorFactory& make_predictor,
                               const CodedBitstream& stream,
                               std::uint64_t expected_hash = 0) {
  if (expected_hash != 0 && stream.model_hash != expected_hash)
    throw DecodeError("coder: model identifier hash mismatch");
  auto pred = make_predictor();
  std::vector<int> out;
  out.reserve(std::size_t(stream.n));
  if (stream.n == 0) return out;
  ArithmeticDecoder dec(stream.payload);
  for (std::uint64_t t = 0; t < stream.n; ++t) {
    Vec probs = pred->predictive_probs();
    auto cum = quantize_pmf(probs);
    std::size_t sym = dec.decode(cum);
    // a well-formed stream never needs more than the 62 preload bits past
    // its payload; larger overdraw means the payload was truncated
    if (dec.overdraw() > 70)
      throw DecodeError("coder: truncated payload at symbol " + std::to_string(t));
    pred->update(int(sym));
    out.push_back(int(sym));
  }
  return out;
}

// ---------------------------------------------------------------------------
// serialization

inline void append_be64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) out.push_back(std::uint8_t(v >> (8 * i)));
}

inline std::uint64_t read_be64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | in[at + std::size_t(i)];
  return v;
}

inline std::vector<std::uint8_t> write_stream(const CodedBitstream& s) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + s.payload.size());
  append_be64(out, s.n);
  append_be64(out, s.model_hash);
  out.insert(out.end(), s.payload.begin(), s.payload.end());
  return out;
}

inline CodedBitstream read_stream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw DecodeError("coder: stream shorter than its header");
  CodedBitstream s;
  s.n = read_be64(bytes, 0);
  s.model_hash = read_be64(bytes, 8);
  s.payload.assign(bytes.begin() + 16, bytes.end());
  s.payload_bits = 8 * s.payload.size();
  return s;
}

// ---------------------------------------------------------------------------
// expected code-length study against the true source
struct CodelengthReport {
  double mean_payload_bits = 0.0;
  double mean_source_bits = 0.0;  // -log2 p^n under the generating theta
  double mean_model_bits = 0.0;   // -log2 m^n of the unquantized mixture
  double mean_overhead_bits = 0.0;
  long long samples = 0;
};

inline CodelengthReport codelength_report(const DiscreteFamily& family,
                                          std::span<const double> theta0,
                                          const PredictorFactory& make_predictor,
                                          long long n, long long samples,
                                          std::uint64_t seed) {
  family.check_theta(theta0);
  Vec theta(theta0.begin(), theta0.end());
  KahanSum payload, source, model;
  const double ln2 = std::log(2.0);
  for (long long r = 0; r < samples; ++r) {
    auto [seq, logp] =
        sample_sequence_with_logp(family, theta, int(n), derive_seed(seed, std::uint64_t(r)));
    auto stream = encode(make_predictor, seq);
    auto pred = make_predictor();
    for (int sym : seq) pred->update(sym);
    payload.add(double(stream.payload_bits));
    source.add(-logp / ln2);
    model.add(-pred->log_marginal() / ln2);
  }
  CodelengthReport rep;
  rep.samples = samples;
  rep.mean_payload_bits = payload.value() / double(samples);
  rep.mean_source_bits = source.value() / double(samples);
  rep.mean_model_bits = model.value() / double(samples);
  rep.mean_overhead_bits = rep.mean_payload_bits - rep.mean_source_bits;
  return rep;
}

}  // namespace mixred
