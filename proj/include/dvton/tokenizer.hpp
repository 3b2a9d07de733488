#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dvton/latent.hpp"
#include "dvton/tensor.hpp"

namespace dvton {

enum class Segment : std::uint8_t {
  kNoise = 0,
  kReference = 1,
  kMaskedSource = 2,
  kPose = 3,
};
inline constexpr int kNumSegments = 4;

std::string to_string(Segment seg);

struct Position {
  int row = 0;
  int col = 0;
  bool operator==(const Position&) const = default;
  auto operator<=>(const Position&) const = default;
};

// N tokens of width d with their patch-grid positions and segment labels.
struct TokenSequence {
  MatF tokens;
  std::vector<Position> positions;
  std::vector<Segment> segments;

  int size() const { return static_cast<int>(tokens.rows()); }
  int dim() const { return static_cast<int>(tokens.cols()); }
  bool consistent() const {
    return positions.size() == static_cast<std::size_t>(tokens.rows()) &&
           segments.size() == static_cast<std::size_t>(tokens.rows());
  }
};

struct PatchConfig {
  int patch = 2;
  int token_dim = 0;
};

// y = x W + b with W stored in x out.
struct LinearMap {
  MatF weight;
  std::optional<MatF> bias;  // 1 x out

  static LinearMap identity(int n);
  int in_dim() const { return static_cast<int>(weight.rows()); }
  int out_dim() const { return static_cast<int>(weight.cols()); }
  MatF apply(const MatF& x) const;
};

// Raw p x p x c patches flattened in (dr, dc, ch) order, one token per patch,
// patch grid enumerated row-major.
TokenSequence extract_patches(const LatentGrid& lat, Segment seg, int patch);

// extract_patches followed by the projection; cfg.token_dim must equal its
// output width.
TokenSequence patchify(const LatentGrid& lat, Segment seg, const PatchConfig& cfg,
                       const LinearMap& proj);

// Concatenation along the sequence axis, in argument order.
TokenSequence concat_sequences(std::span<const TokenSequence> seqs);

// Tokens of one segment, in their original relative order.
TokenSequence strip_to_segment(const TokenSequence& seq, Segment seg);

// Row indices of one segment.
std::vector<int> segment_rows(const TokenSequence& seq, Segment seg);

// Projects each token to p*p*c values and scatters it to its patch. Positions
// must cover a complete patch grid exactly once.
LatentGrid unpatchify(const TokenSequence& seq, const PatchConfig& cfg, const LinearMap& proj_out);

// Same, for tokens already holding raw p*p*c patch values.
LatentGrid scatter_patches(const MatF& patches, std::span<const Position> positions, int patch,
                           int channels);

}  // namespace dvton
