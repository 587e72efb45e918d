#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "siamapn/bbox.hpp"
#include "siamapn/config.hpp"
#include "siamapn/image.hpp"
#include "siamapn/model.hpp"

namespace siamapn {

/// Square frame region fed to the network.
struct CropRegion {
  double cx = 0.0;
  double cy = 0.0;
  double side = 0.0;
};

/// Context-padded square around `box`: side = sqrt((w + p)(h + p)),
/// p = context_amount * (w + h).
CropRegion template_region(const BBox& box, double context_amount);
/// Template region scaled by search_size / template_size.
CropRegion search_region(const BBox& box, double context_amount, std::size_t template_size,
                         std::size_t search_size);

/// Search-patch pixel coordinates to frame coordinates for a crop of
/// `crop_size` pixels taken from `region`.
BBox patch_to_frame(const BBox& in_patch, const CropRegion& region, std::size_t crop_size);

/// Hanning outer product over an h x w map, peak 1 at the center.
std::vector<double> cosine_window(std::size_t h, std::size_t w);

/// Per-cell scores and decoded boxes (search-patch pixels) for one sample.
struct SearchProposal {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> score;
  std::vector<BBox> boxes;
};

/// softmax(cls1)_pos * softmax(cls2)_in * sigmoid(cls3) and the decoded
/// anchor + regression box of every cell of sample 0.
SearchProposal make_proposal(const ForwardResult& out);

struct TrackState {
  FeaturePair template_features;
  BBox last_box;
  TrackerConfig cfg;
  std::size_t frame_width = 0;
  std::size_t frame_height = 0;
  bool initialized = false;
};

struct Selection {
  std::size_t cell = 0;
  double score = 0.0;  // blended score of the chosen cell
  BBox box;            // frame coordinates, before smoothing
};

/// Penalizes scale/ratio change against state.last_box, blends with the cosine
/// window and picks the best cell.
Selection select_cell(const SearchProposal& proposal, const TrackState& state,
                      const CropRegion& region, std::size_t search_size);

struct TrackResult {
  BBox box;
  double score = 0.0;
};

/// Single-target tracker over a shared read-only model.
class Tracker {
 public:
  Tracker(const SiamApnPP& model, TrackerConfig cfg);

  /// Throws std::invalid_argument for a zero-area box or one outside the frame.
  void init(const Image& frame, const BBox& box);
  TrackResult track(const Image& frame);

  /// Size smoothing and frame clamping applied to a selection.
  TrackResult commit(const Selection& sel);

  const TrackState& state() const { return state_; }

 private:
  const SiamApnPP& model_;
  TrackState state_;
};

/// Runs init on frame 0 with `first` and tracks the rest; frame 0 reports
/// `first` unchanged.
std::vector<BBox> track_sequence(const SiamApnPP& model, const TrackerConfig& cfg,
                                 const std::vector<Image>& frames, const BBox& first);

}  // namespace siamapn
