#include "siamapn/sequence.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "siamapn/format.hpp"
#include "siamapn/nn.hpp"

namespace siamapn {

namespace {

constexpr std::size_t kTextureCells = 4;
constexpr std::uint8_t kOccluderGray = 40;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.png", index + 1);
  return buf;
}

}  // namespace

BBox scripted_box(const SequenceSpec& spec, std::size_t t) {
  const double td = static_cast<double>(t);
  const double s = std::pow(spec.scale_rate, td);
  return BBox{spec.initial.cx + spec.vx * td, spec.initial.cy + spec.vy * td, spec.initial.w * s,
              spec.initial.h * s};
}

SyntheticSequence gen_sequence(std::uint64_t seed, const SequenceSpec& spec) {
  spec.validate();
  Rng rng(seed);

  Image background(spec.width, spec.height);
  for (std::uint8_t& p : background.pixels) {
    p = to_byte(128.0 + rng.uniform(-spec.noise_amplitude, spec.noise_amplitude));
  }
  // Saturated colors on a coarse grid; texture coordinates follow the box so
  // the pattern scales with the target.
  std::array<std::array<std::uint8_t, 3>, kTextureCells * kTextureCells> texture{};
  for (auto& cell : texture) {
    for (std::uint8_t& c : cell) c = rng.uniform() < 0.5 ? 30 : 225;
  }

  SyntheticSequence seq;
  seq.seed = seed;
  seq.spec = spec;
  seq.frames.reserve(spec.frames);
  seq.gt.reserve(spec.frames);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const BBox box = scripted_box(spec, t);
    Image frame = background;
    const auto y_lo = static_cast<std::size_t>(std::max(0.0, std::floor(box.y0())));
    const auto y_hi = std::min(spec.height, static_cast<std::size_t>(std::ceil(box.y1())));
    const auto x_lo = static_cast<std::size_t>(std::max(0.0, std::floor(box.x0())));
    const auto x_hi = std::min(spec.width, static_cast<std::size_t>(std::ceil(box.x1())));
    for (std::size_t y = y_lo; y < y_hi; ++y) {
      const double v = (static_cast<double>(y) + 0.5 - box.y0()) / box.h;
      if (v < 0.0 || v >= 1.0) continue;
      const auto ty = static_cast<std::size_t>(v * kTextureCells);
      for (std::size_t x = x_lo; x < x_hi; ++x) {
        const double u = (static_cast<double>(x) + 0.5 - box.x0()) / box.w;
        if (u < 0.0 || u >= 1.0) continue;
        const auto tx = static_cast<std::size_t>(u * kTextureCells);
        for (std::size_t c = 0; c < 3; ++c) frame.at(x, y, c) = texture[ty * kTextureCells + tx][c];
      }
    }
    const OccluderSpec& occ = spec.occluder;
    if (occ.enabled && t >= occ.first_frame && t <= occ.last_frame) {
      const double left = occ.center_x - 0.5 * occ.width;
      for (std::size_t x = 0; x < spec.width; ++x) {
        const double xc = static_cast<double>(x) + 0.5;
        if (xc < left || xc >= left + occ.width) continue;
        for (std::size_t y = 0; y < spec.height; ++y) {
          for (std::size_t c = 0; c < 3; ++c) frame.at(x, y, c) = kOccluderGray;
        }
      }
    }
    seq.frames.push_back(std::move(frame));
    seq.gt.push_back(box);
  }
  return seq;
}

void write_boxes(const std::filesystem::path& path, const std::vector<BBox>& boxes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const BBox& b : boxes) {
    const auto v = b.to_xywh();
    out << format_double(v[0]) << ',' << format_double(v[1]) << ',' << format_double(v[2]) << ','
        << format_double(v[3]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<BBox> read_boxes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<BBox> boxes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::replace_if(line.begin(), line.end(), [](char c) { return c == ',' || c == '\t'; }, ' ');
    std::istringstream fields(line);
    std::array<double, 4> v{};
    std::size_t got = 0;
    while (got < 4 && fields >> v[got]) ++got;
    if (got == 0 && fields.eof()) continue;
    if (got != 4) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected x,y,w,h");
    }
    boxes.push_back(BBox::from_xywh(v[0], v[1], v[2], v[3]));
  }
  return boxes;
}

void write_sequence(const std::filesystem::path& dir, const SyntheticSequence& seq) {
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < seq.frames.size(); ++t) write_png(dir / frame_name(t), seq.frames[t]);
  write_boxes(dir / "groundtruth.txt", seq.gt);
}

LoadedSequence read_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("not a sequence directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no PNG frames in " + dir.string());
  LoadedSequence seq;
  seq.frames.reserve(files.size());
  for (const auto& f : files) seq.frames.push_back(read_png(f));
  const auto gt_path = dir / "groundtruth.txt";
  if (std::filesystem::exists(gt_path)) seq.gt = read_boxes(gt_path);
  return seq;
}

}  // namespace siamapn
