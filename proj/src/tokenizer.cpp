#include "dvton/tokenizer.hpp"

#include <algorithm>

#include "dvton/error.hpp"

namespace dvton {

std::string to_string(Segment seg) {
  switch (seg) {
    case Segment::kNoise: return "noise";
    case Segment::kReference: return "reference";
    case Segment::kMaskedSource: return "masked_source";
    case Segment::kPose: return "pose";
  }
  return "unknown";
}

LinearMap LinearMap::identity(int n) { return LinearMap{MatF::Identity(n, n), std::nullopt}; }

MatF LinearMap::apply(const MatF& x) const {
  require(x.cols() == weight.rows(), ErrorKind::kShapeMismatch,
          "linear map expects width " + std::to_string(weight.rows()) + ", got " +
              std::to_string(x.cols()));
  MatF y = x * weight;
  if (bias) y.rowwise() += bias->row(0);
  return y;
}

TokenSequence extract_patches(const LatentGrid& lat, Segment seg, int patch) {
  require(patch >= 1 && lat.h % patch == 0 && lat.w % patch == 0, ErrorKind::kShapeMismatch,
          "patch size " + std::to_string(patch) + " does not divide latent " +
              std::to_string(lat.h) + "x" + std::to_string(lat.w));
  const int rows = lat.h / patch;
  const int cols = lat.w / patch;
  const int width = patch * patch * lat.c;
  TokenSequence seq;
  seq.tokens.resize(rows * cols, width);
  seq.positions.reserve(rows * cols);
  seq.segments.assign(rows * cols, seg);
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      const int t = pr * cols + pc;
      int k = 0;
      for (int dr = 0; dr < patch; ++dr) {
        const float* src = &lat.data[lat.index(pr * patch + dr, pc * patch, 0)];
        for (int v = 0; v < patch * lat.c; ++v) seq.tokens(t, k++) = src[v];
      }
      seq.positions.push_back({pr, pc});
    }
  }
  return seq;
}

TokenSequence patchify(const LatentGrid& lat, Segment seg, const PatchConfig& cfg,
                       const LinearMap& proj) {
  require(proj.in_dim() == cfg.patch * cfg.patch * lat.c, ErrorKind::kShapeMismatch,
          "patch projection input width does not match p*p*c");
  require(cfg.token_dim == proj.out_dim(), ErrorKind::kShapeMismatch,
          "patch projection output width differs from token_dim");
  TokenSequence seq = extract_patches(lat, seg, cfg.patch);
  seq.tokens = proj.apply(seq.tokens);
  return seq;
}

TokenSequence concat_sequences(std::span<const TokenSequence> seqs) {
  require(!seqs.empty(), ErrorKind::kInvalidArgument, "concat_sequences: nothing to concatenate");
  const int d = seqs.front().dim();
  int total = 0;
  for (const auto& s : seqs) {
    require(s.dim() == d, ErrorKind::kShapeMismatch, "concat_sequences: token width mismatch");
    total += s.size();
  }
  TokenSequence out;
  out.tokens.resize(total, d);
  out.positions.reserve(total);
  out.segments.reserve(total);
  int row = 0;
  for (const auto& s : seqs) {
    out.tokens.middleRows(row, s.size()) = s.tokens;
    out.positions.insert(out.positions.end(), s.positions.begin(), s.positions.end());
    out.segments.insert(out.segments.end(), s.segments.begin(), s.segments.end());
    row += s.size();
  }
  return out;
}

std::vector<int> segment_rows(const TokenSequence& seq, Segment seg) {
  std::vector<int> rows;
  for (int i = 0; i < seq.size(); ++i) {
    if (seq.segments[i] == seg) rows.push_back(i);
  }
  return rows;
}

TokenSequence strip_to_segment(const TokenSequence& seq, Segment seg) {
  const auto rows = segment_rows(seq, seg);
  require(!rows.empty(), ErrorKind::kInvalidArgument,
          "strip_to_segment: no tokens labeled " + to_string(seg));
  TokenSequence out;
  out.tokens.resize(static_cast<Eigen::Index>(rows.size()), seq.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.tokens.row(static_cast<Eigen::Index>(i)) = seq.tokens.row(rows[i]);
    out.positions.push_back(seq.positions[rows[i]]);
    out.segments.push_back(seg);
  }
  return out;
}

LatentGrid scatter_patches(const MatF& patches, std::span<const Position> positions, int patch,
                           int channels) {
  require(static_cast<std::size_t>(patches.rows()) == positions.size(),
          ErrorKind::kShapeMismatch, "unpatchify: token/position count mismatch");
  require(patches.cols() == patch * patch * channels, ErrorKind::kShapeMismatch,
          "unpatchify: token width is not p*p*c");
  require(!positions.empty(), ErrorKind::kInvalidArgument, "unpatchify: empty sequence");
  int rows = 0;
  int cols = 0;
  for (const auto& p : positions) {
    require(p.row >= 0 && p.col >= 0, ErrorKind::kInvalidArgument,
            "unpatchify: negative position");
    rows = std::max(rows, p.row + 1);
    cols = std::max(cols, p.col + 1);
  }
  require(static_cast<std::size_t>(rows) * cols == positions.size(), ErrorKind::kInvalidArgument,
          "unpatchify: positions do not form a complete patch grid");
  std::vector<char> seen(static_cast<std::size_t>(rows) * cols, 0);
  LatentGrid lat(rows * patch, cols * patch, channels);
  for (std::size_t t = 0; t < positions.size(); ++t) {
    const auto [pr, pc] = positions[t];
    char& flag = seen[static_cast<std::size_t>(pr) * cols + pc];
    require(!flag, ErrorKind::kInvalidArgument,
            "unpatchify: duplicate position (" + std::to_string(pr) + "," + std::to_string(pc) +
                ")");
    flag = 1;
    int k = 0;
    for (int dr = 0; dr < patch; ++dr) {
      float* dst = &lat.data[lat.index(pr * patch + dr, pc * patch, 0)];
      for (int v = 0; v < patch * channels; ++v) dst[v] = patches(static_cast<Eigen::Index>(t), k++);
    }
  }
  return lat;
}

LatentGrid unpatchify(const TokenSequence& seq, const PatchConfig& cfg, const LinearMap& proj_out) {
  require(seq.consistent(), ErrorKind::kInvalidArgument, "unpatchify: inconsistent sequence");
  require(!seq.segments.empty() &&
              std::all_of(seq.segments.begin(), seq.segments.end(),
                          [&](Segment s) { return s == seq.segments.front(); }),
          ErrorKind::kInvalidArgument, "unpatchify: sequence must hold a single segment");
  const MatF values = proj_out.apply(seq.tokens);
  const int pp = cfg.patch * cfg.patch;
  require(values.cols() % pp == 0, ErrorKind::kShapeMismatch,
          "unpatchify: projected width not divisible by p*p");
  return scatter_patches(values, seq.positions, cfg.patch, static_cast<int>(values.cols()) / pp);
}

}  // namespace dvton
