#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "siamapn/bbox.hpp"
#include "siamapn/config.hpp"
#include "siamapn/image.hpp"

namespace siamapn {

struct SyntheticSequence {
  std::vector<Image> frames;
  std::vector<BBox> gt;
  std::uint64_t seed = 0;
  SequenceSpec spec;
};

/// Ground truth of frame t under `spec` (no randomness involved).
BBox scripted_box(const SequenceSpec& spec, std::size_t t);

/// Textured rectangle over a static noise background, optionally crossed by a
/// vertical occluder bar. Bit-identical for equal (seed, spec).
SyntheticSequence gen_sequence(std::uint64_t seed, const SequenceSpec& spec);

/// Directory layout: 000001.png, 000002.png, ... plus groundtruth.txt.
void write_sequence(const std::filesystem::path& dir, const SyntheticSequence& seq);

struct LoadedSequence {
  std::vector<Image> frames;
  std::vector<BBox> gt;  // may be empty when groundtruth.txt is absent
};
LoadedSequence read_sequence(const std::filesystem::path& dir);

/// One `x,y,w,h` line per box (top-left form), written with round-trip precision.
void write_boxes(const std::filesystem::path& path, const std::vector<BBox>& boxes);
/// Accepts comma, tab or space separators; blank lines are skipped.
std::vector<BBox> read_boxes(const std::filesystem::path& path);

}  // namespace siamapn
