// Tissue segmentation pipeline tests: end-to-end mask quality against the
// generator's ground truth, sigma scaling, overlay rendering, the patch
// grid, and the handcrafted per-patch descriptor.

#include <doctest.h>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "pathomil/errors.hpp"
#include "pathomil/image.hpp"
#include "pathomil/patches.hpp"
#include "pathomil/rng.hpp"
#include "pathomil/segment.hpp"
#include "pathomil/synthetic.hpp"

using namespace pathomil;

namespace {

// Projects a level-0 truth mask onto a coarser level: a level pixel is
// "tissue" when at least half of its source block is painted, "background"
// when none of it is. Pixels in between (block partially painted) count as
// neither so halo pixels on the true boundary are not scored.
struct ProjectedTruth {
  std::vector<uint8_t> tissue;      // 1 where block coverage >= 0.5
  std::vector<uint8_t> background;  // 1 where block coverage == 0
  size_t width = 0, height = 0;
};

ProjectedTruth project_truth(const BinaryMask& truth, size_t level_w,
                             size_t level_h) {
  ProjectedTruth out;
  out.width = level_w;
  out.height = level_h;
  out.tissue.assign(level_w * level_h, 0);
  out.background.assign(level_w * level_h, 0);
  const size_t fx = (truth.width + level_w - 1) / level_w;
  const size_t fy = (truth.height + level_h - 1) / level_h;
  for (size_t y = 0; y < level_h; ++y) {
    for (size_t x = 0; x < level_w; ++x) {
      size_t painted = 0, total = 0;
      for (size_t yy = y * fy; yy < std::min((y + 1) * fy, truth.height); ++yy) {
        for (size_t xx = x * fx; xx < std::min((x + 1) * fx, truth.width); ++xx) {
          ++total;
          painted += truth.at(xx, yy);
        }
      }
      if (total == 0) continue;
      if (painted * 2 >= total) out.tissue[y * level_w + x] = 1;
      if (painted == 0) out.background[y * level_w + x] = 1;
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// segment_tissue

TEST_CASE("segmenting a constant canvas is degenerate and empty") {
  const RasterImage white(256, 256, 3, 245);
  const ImagePyramid pyr = build_pyramid(white, 16);
  SegmentationConfig cfg;
  cfg.target_downsample = 4.0;
  const SegmentResult r = segment_tissue(pyr, cfg);
  CHECK(r.degenerate);
  CHECK(r.mask.area() == 0);
  CHECK(r.level == 2);
  CHECK(r.mask.level == 2);
}

TEST_CASE("segmentation sigma scales with level width and clamps") {
  RngStream rng(81);
  RasterImage img(128, 64, 3);
  for (uint8_t& v : img.data) v = static_cast<uint8_t>(rng.bounded(256));
  const ImagePyramid pyr = build_pyramid(img, 16);
  SegmentationConfig cfg;

  cfg.target_downsample = 1.0;  // level 0, width 128: 2*128/1024 = 0.25 -> 0.5
  CHECK(segment_tissue(pyr, cfg).sigma_used == doctest::Approx(0.5));

  SlideSpec spec;
  spec.width = 2048;
  spec.height = 64;
  spec.all_tissue = true;
  const SyntheticSlide wide = make_synthetic_slide(spec);
  const ImagePyramid wide_pyr = build_pyramid(wide.image, 16);
  cfg.target_downsample = 1.0;  // width 2048: 2*2048/1024 = 4.0 (at the cap)
  CHECK(segment_tissue(wide_pyr, cfg).sigma_used == doctest::Approx(4.0));
  cfg.target_downsample = 2.0;  // width 1024: exactly 2.0
  CHECK(segment_tissue(wide_pyr, cfg).sigma_used == doctest::Approx(2.0));
}

TEST_CASE("all-tissue slide is recovered nearly completely") {
  SlideSpec spec;
  spec.width = 2048;
  spec.height = 2048;
  spec.all_tissue = true;
  spec.seed = 7;
  const SyntheticSlide slide = make_synthetic_slide(spec);
  CHECK(slide.tissue_truth.area() == size_t{2048} * 2048);

  const ImagePyramid pyr = build_pyramid(slide.image, 16);
  SegmentationConfig cfg;
  cfg.target_downsample = 8.0;
  const SegmentResult r = segment_tissue(pyr, cfg);
  REQUIRE(!r.degenerate);
  CHECK(r.mask.width == 256);
  const double coverage =
      static_cast<double>(r.mask.area()) / (r.mask.width * r.mask.height);
  CHECK(coverage >= 0.98);
}

TEST_CASE("blob slide mask matches the generator truth") {
  SlideSpec spec;
  spec.width = 2048;
  spec.height = 2048;
  spec.n_blobs = 2;
  spec.min_radius = 350.0;
  spec.max_radius = 500.0;
  spec.seed = 11;
  const SyntheticSlide slide = make_synthetic_slide(spec);
  REQUIRE(slide.tissue_truth.area() > 0);

  const ImagePyramid pyr = build_pyramid(slide.image, 16);
  SegmentationConfig cfg;
  cfg.target_downsample = 8.0;
  const SegmentResult r = segment_tissue(pyr, cfg);
  REQUIRE(!r.degenerate);
  REQUIRE(r.mask.width == 256);

  const ProjectedTruth truth = project_truth(slide.tissue_truth, 256, 256);
  size_t tissue_px = 0, tissue_hit = 0, bg_px = 0, bg_hit = 0;
  for (size_t y = 0; y < 256; ++y) {
    for (size_t x = 0; x < 256; ++x) {
      if (truth.tissue[y * 256 + x]) {
        ++tissue_px;
        tissue_hit += r.mask.at(x, y);
      }
      if (truth.background[y * 256 + x]) {
        ++bg_px;
        bg_hit += r.mask.at(x, y);
      }
    }
  }
  REQUIRE(tissue_px > 0);
  REQUIRE(bg_px > 0);
  CHECK(static_cast<double>(tissue_hit) / tissue_px >= 0.95);
  CHECK(static_cast<double>(bg_hit) / bg_px <= 0.05);
}

TEST_CASE("min-area filtering inside segmentation marks the mask") {
  SlideSpec spec;
  spec.width = 512;
  spec.height = 512;
  spec.n_blobs = 1;
  spec.min_radius = 120.0;
  spec.max_radius = 150.0;
  spec.seed = 3;
  const SyntheticSlide slide = make_synthetic_slide(spec);
  const ImagePyramid pyr = build_pyramid(slide.image, 16);
  SegmentationConfig cfg;
  cfg.target_downsample = 4.0;
  cfg.min_component_area_px = 10;
  const SegmentResult r = segment_tissue(pyr, cfg);
  CHECK(r.mask.min_area_applied);
}

// ---------------------------------------------------------------------------
// overlay

TEST_CASE("mask overlay blends only masked pixels") {
  RasterImage img(2, 1, 3);
  for (size_t c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 100;
    img.at(1, 0, c) = 100;
  }
  BinaryMask mask(2, 1, 0);
  mask.set(0, 0, 1);

  const std::array<uint8_t, 3> green{0, 200, 0};
  const RasterImage zero = render_mask_overlay(img, mask, green, 0.0);
  CHECK(zero.data == img.data);

  const RasterImage full = render_mask_overlay(img, mask, green, 1.0);
  CHECK(full.at(0, 0, 0) == 0);
  CHECK(full.at(0, 0, 1) == 200);
  CHECK(full.at(0, 0, 2) == 0);
  CHECK(full.at(1, 0, 1) == 100);  // unmasked passthrough

  const RasterImage half = render_mask_overlay(img, mask, green, 0.5);
  CHECK(half.at(0, 0, 0) == 50);   // 0.5*100 + 0.5*0
  CHECK(half.at(0, 0, 1) == 150);  // 0.5*100 + 0.5*200
  CHECK(half.at(0, 0, 2) == 50);
  CHECK(half.at(1, 0, 0) == 100);

  BinaryMask wrong(3, 1, 0);
  CHECK_THROWS_AS((void)render_mask_overlay(img, wrong, green, 0.5),
                  ContractError);
}

// ---------------------------------------------------------------------------
// patch grid

TEST_CASE("patch grid keeps cells meeting the coverage threshold") {
  // Mask at level 2 (downsample 4): level-0 patches of 256 map to 64x64
  // mask blocks.
  BinaryMask mask(256, 128, 2);
  auto fill = [&](size_t x0, size_t y0, size_t w, size_t h) {
    for (size_t y = y0; y < y0 + h; ++y)
      for (size_t x = x0; x < x0 + w; ++x) mask.set(x, y, 1);
  };
  fill(0, 0, 64, 64);     // cell (0,0): coverage 1.0
  fill(64, 0, 32, 64);    // cell (256,0): coverage exactly 0.5
  fill(128, 0, 31, 64);   // cell (512,0): coverage just below 0.5
  const PatchGrid grid = extract_patch_grid(mask, 1024, 512, 256, 0.5);
  REQUIRE(grid.coords.size() == 2);
  CHECK(grid.coords[0] == std::make_pair(uint32_t{0}, uint32_t{0}));
  CHECK(grid.coords[1] == std::make_pair(uint32_t{256}, uint32_t{0}));
  CHECK(grid.patch_size == 256);
  CHECK(grid.coverage_threshold == 0.5);
}

TEST_CASE("patch grid excludes partial cells at the slide edge") {
  BinaryMask mask(1000, 600, 0);
  for (uint8_t& b : mask.bits) b = 1;
  const PatchGrid grid = extract_patch_grid(mask, 1000, 600, 256, 0.5);
  // x in {0, 256, 512} (768 + 256 > 1000), y in {0, 256} (512 + 256 > 600).
  REQUIRE(grid.coords.size() == 6);
  const std::vector<std::pair<uint32_t, uint32_t>> want{
      {0, 0}, {256, 0}, {512, 0}, {0, 256}, {256, 256}, {512, 256}};
  for (size_t i = 0; i < 6; ++i) CHECK(grid.coords[i] == want[i]);
  CHECK(patch_grid_to_text(grid) ==
        "0 0\n256 0\n512 0\n0 256\n256 256\n512 256\n");
}

TEST_CASE("empty mask gives an empty grid") {
  BinaryMask mask(64, 64, 2);
  const PatchGrid grid = extract_patch_grid(mask, 256, 256, 128, 0.5);
  CHECK(grid.coords.empty());
}

// ---------------------------------------------------------------------------
// handcrafted features

TEST_CASE("constant patch yields one-bin histograms and zero spreads") {
  RasterImage slide(64, 64, 3);
  for (size_t y = 0; y < 64; ++y) {
    for (size_t x = 0; x < 64; ++x) {
      slide.at(x, y, 0) = 200;
      slide.at(x, y, 1) = 100;
      slide.at(x, y, 2) = 50;
    }
  }
  BinaryMask mask(64, 64, 0);
  for (uint8_t& b : mask.bits) b = 1;
  const PatchGrid grid = extract_patch_grid(mask, 64, 64, 64, 0.5);
  REQUIRE(grid.coords.size() == 1);

  const DenseMatrix f = handcrafted_patch_features(slide, mask, grid);
  REQUIRE(f.rows == 1);
  REQUIRE(f.cols == kHandcraftedFeatureDim);
  REQUIRE(f.cols == 30);

  // Hue = 20 degrees -> bin 0; S = round(255*150/200) = 191 -> bin 5;
  // V = 200 -> bin 6.
  CHECK(f.at(0, 0) == doctest::Approx(1.0));
  for (size_t j = 1; j < 8; ++j) CHECK(f.at(0, j) == doctest::Approx(0.0));
  CHECK(f.at(0, 8 + 5) == doctest::Approx(1.0));
  CHECK(f.at(0, 16 + 6) == doctest::Approx(1.0));
  CHECK(f.at(0, 24) == doctest::Approx(191.0 / 255).epsilon(1e-12));
  CHECK(f.at(0, 25) == doctest::Approx(0.0));
  CHECK(f.at(0, 26) == doctest::Approx(200.0 / 255).epsilon(1e-12));
  CHECK(f.at(0, 27) == doctest::Approx(0.0));
  CHECK(f.at(0, 28) == doctest::Approx(0.0));  // constant -> zero gradient
  CHECK(f.at(0, 29) == doctest::Approx(1.0));  // full tissue footprint
}

TEST_CASE("histogram groups are distributions and features stay in [0,1]") {
  RngStream rng(82);
  RasterImage slide(96, 96, 3);
  for (uint8_t& v : slide.data) v = static_cast<uint8_t>(rng.bounded(256));
  BinaryMask mask(96, 96, 0);
  for (uint8_t& b : mask.bits) b = 1;
  const PatchGrid grid = extract_patch_grid(mask, 96, 96, 32, 0.5);
  REQUIRE(grid.coords.size() == 9);
  const DenseMatrix f = handcrafted_patch_features(slide, mask, grid);
  REQUIRE(f.rows == 9);
  for (size_t i = 0; i < f.rows; ++i) {
    for (size_t group = 0; group < 3; ++group) {
      double sum = 0.0;
      for (size_t j = 0; j < 8; ++j) sum += f.at(i, group * 8 + j);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
    for (size_t j = 0; j < 30; ++j) {
      CHECK(f.at(i, j) >= 0.0);
      CHECK(f.at(i, j) <= 1.0);
    }
  }
}

TEST_CASE("distinct patch colors produce well-separated descriptors") {
  RasterImage slide(128, 64, 3);
  for (size_t y = 0; y < 64; ++y) {
    for (size_t x = 0; x < 128; ++x) {
      const bool left = x < 64;
      slide.at(x, y, 0) = left ? 220 : 40;   // pinkish vs dark blue
      slide.at(x, y, 1) = left ? 120 : 60;
      slide.at(x, y, 2) = left ? 160 : 200;
    }
  }
  BinaryMask mask(128, 64, 0);
  for (uint8_t& b : mask.bits) b = 1;
  const PatchGrid grid = extract_patch_grid(mask, 128, 64, 64, 0.5);
  REQUIRE(grid.coords.size() == 2);
  const DenseMatrix f = handcrafted_patch_features(slide, mask, grid);
  double dist2 = 0.0;
  for (size_t j = 0; j < f.cols; ++j) {
    const double d = f.at(0, j) - f.at(1, j);
    dist2 += d * d;
  }
  CHECK(std::sqrt(dist2) > 0.5);
}

TEST_CASE("tissue fraction column reflects partial mask coverage") {
  RasterImage slide(32, 32, 3, 150);
  BinaryMask mask(32, 32, 0);
  // Paint 75% of the single 32x32 cell.
  for (size_t y = 0; y < 24; ++y)
    for (size_t x = 0; x < 32; ++x) mask.set(x, y, 1);
  const PatchGrid grid = extract_patch_grid(mask, 32, 32, 32, 0.5);
  REQUIRE(grid.coords.size() == 1);
  const DenseMatrix f = handcrafted_patch_features(slide, mask, grid);
  CHECK(f.at(0, 29) == doctest::Approx(0.75).epsilon(1e-12));
}
