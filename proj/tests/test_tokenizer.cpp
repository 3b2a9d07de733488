#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "dvton/error.hpp"
#include "dvton/tokenizer.hpp"
#include "support.hpp"

using namespace dvton;
using dvton::test::random_latent;

namespace {

PatchConfig identity_cfg(int p, int c) { return {p, p * p * c}; }

TokenSequence tokens_of(const LatentGrid& g, Segment seg, int p) {
  return patchify(g, seg, identity_cfg(p, g.c), LinearMap::identity(p * p * g.c));
}

}  // namespace

TEST_CASE("token counts") {
  RandomStream rng(1);
  CHECK(tokens_of(random_latent(rng, 32, 32, 12), Segment::kNoise, 2).size() == 256);
  CHECK(tokens_of(random_latent(rng, 4, 4, 3), Segment::kNoise, 4).size() == 1);
}

TEST_CASE("identity projection keeps the declared patch order") {
  RandomStream rng(2);
  const int p = 2;
  const LatentGrid g = random_latent(rng, 4, 6, 3);
  const TokenSequence seq = tokens_of(g, Segment::kReference, p);
  REQUIRE(seq.size() == 6);
  for (int gr = 0; gr < 2; ++gr) {
    for (int gc = 0; gc < 3; ++gc) {
      const int tok = gr * 3 + gc;
      CHECK(seq.positions[tok] == Position{gr, gc});
      CHECK(seq.segments[tok] == Segment::kReference);
      int k = 0;
      for (int dr = 0; dr < p; ++dr) {
        for (int dc = 0; dc < p; ++dc) {
          for (int ch = 0; ch < 3; ++ch, ++k) CHECK(seq.tokens(tok, k) == g.at(gr * p + dr, gc * p + dc, ch));
        }
      }
    }
  }
}

TEST_CASE("concat and strip") {
  RandomStream rng(3);
  std::vector<TokenSequence> parts;
  const Segment segs[] = {Segment::kNoise, Segment::kReference, Segment::kMaskedSource, Segment::kPose};
  for (Segment s : segs) parts.push_back(tokens_of(random_latent(rng, 32, 32, 12), s, 2));

  const TokenSequence three = concat_sequences(std::span(parts.data(), 3));
  CHECK(three.size() == 768);
  for (int i = 0; i < 768; ++i) CHECK(three.segments[i] == segs[i / 256]);
  CHECK(concat_sequences(parts).size() == 1024);

  const TokenSequence one = concat_sequences(std::span(parts.data(), 1));
  CHECK(one.tokens == parts[0].tokens);

  for (int k = 0; k < 4; ++k) {
    const TokenSequence back = strip_to_segment(concat_sequences(parts), segs[k]);
    CHECK(back.tokens == parts[k].tokens);
    CHECK(back.positions == parts[k].positions);
  }
  const TokenSequence noise = strip_to_segment(three, Segment::kNoise);
  CHECK(noise.tokens == three.tokens.topRows(256));
  CHECK(strip_to_segment(parts[0], Segment::kNoise).tokens == parts[0].tokens);

  const std::set<Position> grid(noise.positions.begin(), noise.positions.end());
  CHECK(grid.size() == 256);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) CHECK(grid.count(Position{r, c}) == 1);
  }
}

TEST_CASE("concat rejects width mismatch") {
  RandomStream rng(4);
  std::vector<TokenSequence> parts{tokens_of(random_latent(rng, 4, 4, 3), Segment::kNoise, 2),
                                   tokens_of(random_latent(rng, 4, 4, 2), Segment::kReference, 2)};
  CHECK_THROWS_AS(concat_sequences(parts), Error);
}

TEST_CASE("unpatchify inverts patchify over a sweep") {
  RandomStream rng(5);
  for (int p : {1, 2, 4}) {
    for (int gh : {1, 2, 3}) {
      for (int gw : {1, 3, 4}) {
        for (int c : {1, 5, 12}) {
          const LatentGrid g = random_latent(rng, gh * p, gw * p, c);
          const TokenSequence seq = tokens_of(g, Segment::kNoise, p);
          CHECK(unpatchify(seq, identity_cfg(p, c), LinearMap::identity(p * p * c)) == g);
        }
      }
    }
  }
}

TEST_CASE("unpatchify with an invertible projection pair") {
  RandomStream rng(6);
  const int p = 2;
  const int c = 3;
  const int n = p * p * c;
  MatF w(n, n);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.normal());
  w += 4.0f * MatF::Identity(n, n);
  LinearMap in{w, std::nullopt};
  LinearMap out{w.inverse(), std::nullopt};
  const LatentGrid g = random_latent(rng, 6, 4, c);
  const TokenSequence seq = patchify(g, Segment::kNoise, {p, n}, in);
  const LatentGrid back = unpatchify(seq, {p, n}, out);
  for (std::size_t i = 0; i < g.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(g.data[i]).epsilon(1e-4));
}

TEST_CASE("scatter is independent of token order") {
  RandomStream rng(7);
  const LatentGrid g = random_latent(rng, 8, 10, 4);
  const TokenSequence seq = tokens_of(g, Segment::kNoise, 2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> perm(seq.size());
    for (int i = 0; i < seq.size(); ++i) perm[i] = i;
    for (int i = seq.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    TokenSequence shuffled = seq;
    for (int i = 0; i < seq.size(); ++i) {
      shuffled.tokens.row(i) = seq.tokens.row(perm[i]);
      shuffled.positions[i] = seq.positions[perm[i]];
    }
    CHECK(unpatchify(shuffled, identity_cfg(2, 4), LinearMap::identity(16)) == g);
  }
}

TEST_CASE("scatter rejects incomplete or duplicated grids") {
  RandomStream rng(8);
  const TokenSequence seq = tokens_of(random_latent(rng, 4, 4, 2), Segment::kNoise, 2);
  std::vector<Position> dup = seq.positions;
  dup[1] = dup[0];
  CHECK_THROWS_AS(scatter_patches(seq.tokens, dup, 2, 2), Error);
  CHECK_THROWS_AS(scatter_patches(seq.tokens.topRows(3), std::span(seq.positions.data(), 3), 2, 2), Error);
  CHECK_THROWS_AS(extract_patches(LatentGrid(5, 4, 2), Segment::kNoise, 2), Error);
}

TEST_CASE("unpatchify needs a single segment") {
  RandomStream rng(9);
  std::vector<TokenSequence> parts{tokens_of(random_latent(rng, 2, 2, 1), Segment::kNoise, 2),
                                   tokens_of(random_latent(rng, 2, 2, 1), Segment::kReference, 2)};
  CHECK_THROWS_AS(unpatchify(concat_sequences(parts), identity_cfg(2, 1), LinearMap::identity(4)), Error);
}
