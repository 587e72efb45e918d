#include "siamapn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

#include "siamapn/aan.hpp"
#include "siamapn/apn.hpp"
#include "siamapn/heads.hpp"
#include "siamapn/ops.hpp"
#include "siamapn/tape.hpp"

namespace siamapn {

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data_mut()) v = rng.uniform(lo, hi);
  return t;
}

/// Entries spaced at least 0.05 apart so max-type ops have no near-ties.
Tensor distinct_tensor(const Shape& shape, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  Tensor t(shape);
  std::span<double> d = t.data_mut();
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = 0.1 * static_cast<double>(perm[i]) - 0.05 * static_cast<double>(n) +
           rng.uniform(0.0, 0.05);
  }
  return t;
}

/// Uniform values with |x| >= margin.
Tensor off_kink_tensor(const Shape& shape, Rng& rng, double margin = 0.05) {
  Tensor t = random_tensor(shape, rng);
  for (double& v : t.data_mut()) v = v < 0.0 ? v - margin : v + margin;
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

double projected(const Tensor& out, const std::vector<double>& r) {
  double s = 0.0;
  const std::span<const double> d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * r[i];
  return s;
}

void push_conv(std::vector<Tensor>& v, const Conv& c) {
  v.push_back(c.weight);
  v.push_back(c.bias);
}

void push_ffn(std::vector<Tensor>& v, const Ffn& f) {
  push_conv(v, f.fc1);
  push_conv(v, f.fc2);
}

using Check = double (*)(Rng&, const GradcheckOptions&);

double check_conv2d(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t k = pick(rng, 1, 3), stride = pick(rng, 1, 2), pad = pick(rng, 0, 1);
  const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  const std::size_t h = pick(rng, k, 6), w = pick(rng, k, 6);
  Tensor x = random_tensor({n, cin, h, w}, rng);
  Tensor wt = random_tensor({cout, cin, k, k}, rng);
  Tensor b = random_tensor({cout}, rng);
  return check_gradients([=] { return conv2d(x, wt, b, stride, pad); }, {x, wt, b}, rng, opt);
}

double check_maxpool(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t k = pick(rng, 2, 3), s = pick(rng, 1, 2);
  Tensor x = distinct_tensor({pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, k, 6), pick(rng, k, 6)},
                             rng);
  return check_gradients([=] { return maxpool2d(x, k, s); }, {x}, rng, opt);
}

double check_dwxcorr(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3);
  const std::size_t th = pick(rng, 1, 3), tw = pick(rng, 1, 3);
  Tensor s = random_tensor({n, c, th + pick(rng, 0, 3), tw + pick(rng, 0, 3)}, rng);
  Tensor t = random_tensor({n, c, th, tw}, rng);
  return check_gradients([=] { return dwxcorr(s, t); }, {s, t}, rng, opt);
}

double check_matmul(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
  if (rng.below(2) == 0) {
    Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    return check_gradients([=] { return matmul(a, b); }, {a, b}, rng, opt);
  }
  const std::size_t batch = pick(rng, 1, 3);
  Tensor a = random_tensor({batch, m, k}, rng), b = random_tensor({batch, k, n}, rng);
  return check_gradients([=] { return matmul(a, b); }, {a, b}, rng, opt);
}

double check_transpose(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = random_tensor({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
  return check_gradients([=] { return transpose_last2(x); }, {x}, rng, opt);
}

double check_softmax(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = random_tensor({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 5)}, rng, -3.0, 3.0);
  return check_gradients([=] { return softmax_lastaxis(x); }, {x}, rng, opt);
}

Shape random_map_shape(Rng& rng) {
  return {pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)};
}

double check_gap(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = random_tensor(random_map_shape(rng), rng);
  return check_gradients([=] { return gap(x); }, {x}, rng, opt);
}

double check_gmp(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = distinct_tensor(random_map_shape(rng), rng);
  return check_gradients([=] { return gmp(x); }, {x}, rng, opt);
}

double check_add(Rng& rng, const GradcheckOptions& opt) {
  const Shape s = random_map_shape(rng);
  Tensor a = random_tensor(s, rng), b = random_tensor(s, rng);
  return check_gradients([=] { return add(a, b); }, {a, b}, rng, opt);
}

double check_sub(Rng& rng, const GradcheckOptions& opt) {
  const Shape s = random_map_shape(rng);
  Tensor a = random_tensor(s, rng), b = random_tensor(s, rng);
  return check_gradients([=] { return sub(a, b); }, {a, b}, rng, opt);
}

double check_mul(Rng& rng, const GradcheckOptions& opt) {
  const Shape s = random_map_shape(rng);
  Tensor a = random_tensor(s, rng), b = random_tensor(s, rng);
  return check_gradients([=] { return mul(a, b); }, {a, b}, rng, opt);
}

double check_scale(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = random_tensor(random_map_shape(rng), rng), s = random_tensor({1}, rng);
  return check_gradients([=] { return scale(x, s); }, {x, s}, rng, opt);
}

double check_scale_by(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = random_tensor(random_map_shape(rng), rng);
  const double c = rng.uniform(-2.0, 2.0);
  return check_gradients([=] { return scale_by(x, c); }, {x}, rng, opt);
}

double check_sigmoid(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = random_tensor(random_map_shape(rng), rng, -4.0, 4.0);
  return check_gradients([=] { return sigmoid(x); }, {x}, rng, opt);
}

double check_relu(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = off_kink_tensor(random_map_shape(rng), rng);
  return check_gradients([=] { return relu(x); }, {x}, rng, opt);
}

double check_exp(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = random_tensor(random_map_shape(rng), rng, -2.0, 2.0);
  return check_gradients([=] { return exp(x); }, {x}, rng, opt);
}

double check_concat(Rng& rng, const GradcheckOptions& opt) {
  Shape s = random_map_shape(rng);
  Tensor a = random_tensor(s, rng);
  s[1] = pick(rng, 1, 3);
  Tensor b = random_tensor(s, rng);
  return check_gradients([=] { return concat_channels(a, b); }, {a, b}, rng, opt);
}

double check_slice(Rng& rng, const GradcheckOptions& opt) {
  Shape s = random_map_shape(rng);
  s[1] = pick(rng, 2, 4);
  Tensor x = random_tensor(s, rng);
  const std::size_t begin = pick(rng, 0, s[1] - 1), end = pick(rng, begin + 1, s[1]);
  return check_gradients([=] { return slice_channels(x, begin, end); }, {x}, rng, opt);
}

double check_mul_channelwise(Rng& rng, const GradcheckOptions& opt) {
  const Shape s = random_map_shape(rng);
  Tensor x = random_tensor(s, rng), w = random_tensor({s[0], s[1], 1, 1}, rng);
  return check_gradients([=] { return mul_channelwise(x, w); }, {x, w}, rng, opt);
}

double check_reshape(Rng& rng, const GradcheckOptions& opt) {
  const Shape s = random_map_shape(rng);
  Tensor x = random_tensor(s, rng);
  const Shape to{s[0], s[1] * s[2] * s[3]};
  return check_gradients([=] { return reshape(x, to); }, {x}, rng, opt);
}

double check_sum(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = random_tensor(random_map_shape(rng), rng);
  return check_gradients([=] { return sum(x); }, {x}, rng, opt);
}

double check_mean(Rng& rng, const GradcheckOptions& opt) {
  Tensor x = random_tensor(random_map_shape(rng), rng);
  return check_gradients([=] { return mean(x); }, {x}, rng, opt);
}

double check_decode_anchors(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t m = pick(rng, 1, 4);
  AnchorGeometry g;
  g.stride = 8;
  g.search_size = 8 * m + 64;
  g.base = 16.0;
  Tensor raw = random_tensor({pick(rng, 1, 2), 4, m, m}, rng, -0.5, 0.5);
  return check_gradients([=] { return decode_anchors(raw, g).boxes; }, {raw}, rng, opt);
}

Tensor random_boxes(const Shape& s, Rng& rng) {
  Tensor t(s);
  const std::size_t hw = s[2] * s[3];
  std::span<double> d = t.data_mut();
  for (std::size_t n = 0; n < s[0]; ++n) {
    for (std::size_t i = 0; i < hw; ++i) {
      double* cell = d.data() + n * 4 * hw + i;
      cell[0] = rng.uniform(20.0, 40.0);
      cell[hw] = rng.uniform(20.0, 40.0);
      cell[2 * hw] = rng.uniform(8.0, 24.0);
      cell[3 * hw] = rng.uniform(8.0, 24.0);
    }
  }
  return t;
}

double check_decode_boxes(Rng& rng, const GradcheckOptions& opt) {
  const Shape s{pick(rng, 1, 2), 4, pick(rng, 1, 3), pick(rng, 1, 3)};
  Tensor anchors = random_boxes(s, rng);
  Tensor reg = random_tensor(s, rng, -0.5, 0.5);
  return check_gradients([=] { return decode_boxes(anchors, reg); }, {anchors, reg}, rng, opt);
}

std::vector<int> random_targets(std::size_t n, Rng& rng, bool with_ignore) {
  std::vector<int> t(n);
  for (int& v : t) v = static_cast<int>(rng.below(with_ignore ? 3 : 2)) - (with_ignore ? 1 : 0);
  t[0] = 1;  // at least one contributing cell
  return t;
}

double check_softmax_ce(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t n = pick(rng, 1, 2), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
  Tensor logits = random_tensor({n, 2, h, w}, rng, -2.0, 2.0);
  const std::vector<int> t = random_targets(n * h * w, rng, true);
  return check_gradients([=] { return softmax_cross_entropy(logits, t); }, {logits}, rng, opt);
}

double check_bce(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t n = pick(rng, 1, 2), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
  Tensor logits = random_tensor({n, 1, h, w}, rng, -2.0, 2.0);
  std::vector<double> t(n * h * w);
  for (double& v : t) v = rng.uniform();
  return check_gradients([=] { return bce_with_logits(logits, t); }, {logits}, rng, opt);
}

/// Random labels whose positives carry targets overlapping the given boxes.
LabelAssignment random_labels(const Tensor& boxes, Rng& rng) {
  LabelAssignment lab;
  lab.n = boxes.dim(0);
  lab.h = boxes.dim(2);
  lab.w = boxes.dim(3);
  const std::size_t hw = lab.h * lab.w, cells = lab.cells();
  lab.cls1.resize(cells);
  lab.cls2.resize(cells);
  lab.cls3.resize(cells);
  lab.reg_target.resize(cells);
  lab.degenerate.assign(lab.n, false);
  const double* b = boxes.data().data();
  for (std::size_t i = 0; i < cells; ++i) {
    lab.cls1[i] = static_cast<AnchorLabel>(static_cast<int>(rng.below(3)) - 1);
    lab.cls2[i] = static_cast<std::uint8_t>(rng.below(2));
    lab.cls3[i] = rng.uniform();
    const std::size_t s = i / hw, c = i % hw;
    const double* cell = b + s * 4 * hw + c;
    lab.reg_target[i] = BBox{cell[0] + rng.uniform(-3.0, 3.0), cell[hw] + rng.uniform(-3.0, 3.0),
                             cell[2 * hw] * rng.uniform(0.7, 1.3),
                             cell[3 * hw] * rng.uniform(0.7, 1.3)};
  }
  lab.cls1[0] = AnchorLabel::positive;
  return lab;
}

double check_iou_loss(Rng& rng, const GradcheckOptions& opt) {
  Tensor boxes = random_boxes({pick(rng, 1, 2), 4, pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
  const LabelAssignment lab = random_labels(boxes, rng);
  const double alpha = rng.uniform(1.1, 2.0);
  return check_gradients([=] { return iou_loss(boxes, lab, alpha); }, {boxes}, rng, opt);
}

void randomize_gammas(std::initializer_list<Tensor> gammas, Rng& rng) {
  for (Tensor g : gammas) g.data_mut()[0] = rng.uniform(0.5, 1.5);
}

double check_fuse(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t c = pick(rng, 1, 3);
  ParameterSet ps;
  ApnDf apn(ps, ApnConfig{c, pick(rng, 1, 2), 16.0}, 2, 2);
  apn.init(rng);
  randomize_gammas({apn.gamma1(), apn.gamma2()}, rng);
  const Shape s{pick(rng, 1, 2), c, pick(rng, 1, 3), pick(rng, 1, 3)};
  Tensor r4 = random_tensor(s, rng), r5 = random_tensor(s, rng);
  std::vector<Tensor> inputs{r4, r5, apn.gamma1(), apn.gamma2()};
  push_ffn(inputs, apn.fusion_ffn());
  push_conv(inputs, apn.fusion_cat());
  return check_gradients([&apn, r4, r5] { return apn.fuse(r4, r5); }, inputs, rng, opt);
}

double check_spatial(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t c = pick(rng, 1, 3);
  ParameterSet ps;
  Aan aan(ps, AanConfig{pick(rng, 1, 2)}, c, 2);
  aan.init(rng);
  randomize_gammas({aan.gamma3()}, rng);
  Tensor r5p = random_tensor({pick(rng, 1, 2), c, pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
  std::vector<Tensor> inputs{r5p, aan.gamma3()};
  push_conv(inputs, aan.query());
  push_conv(inputs, aan.key());
  push_conv(inputs, aan.value());
  return check_gradients([&aan, r5p] { return aan.spatial_attention(r5p); }, inputs, rng, opt);
}

double check_channel(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t c = pick(rng, 1, 3);
  ParameterSet ps;
  Aan aan(ps, AanConfig{pick(rng, 1, 2)}, c, 2);
  aan.init(rng);
  randomize_gammas({aan.gamma4()}, rng);
  Tensor rs = distinct_tensor({pick(rng, 1, 2), c, pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
  std::vector<Tensor> inputs{rs, aan.gamma4()};
  push_ffn(inputs, aan.channel_ffn());
  return check_gradients([&aan, rs] { return aan.channel_attention(rs); }, inputs, rng, opt);
}

double check_cross(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t c = pick(rng, 1, 3);
  ParameterSet ps;
  Aan aan(ps, AanConfig{pick(rng, 1, 2)}, c, 2);
  aan.init(rng);
  randomize_gammas({aan.gamma5(), aan.gamma6()}, rng);
  const Shape s{pick(rng, 1, 2), c, pick(rng, 1, 3), pick(rng, 1, 3)};
  Tensor rc = random_tensor(s, rng), ra = random_tensor(s, rng);
  std::vector<Tensor> inputs{rc, ra, aan.gamma5(), aan.gamma6()};
  push_ffn(inputs, aan.cross_ffn());
  push_conv(inputs, aan.cross_cat());
  return check_gradients([&aan, rc, ra] { return aan.cross_aan(rc, ra); }, inputs, rng, opt);
}

double check_total_loss(Rng& rng, const GradcheckOptions& opt) {
  const std::size_t n = pick(rng, 1, 2), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
  HeadOutputs heads;
  heads.cls1 = random_tensor({n, 2, h, w}, rng, -2.0, 2.0);
  heads.cls2 = random_tensor({n, 2, h, w}, rng, -2.0, 2.0);
  heads.cls3 = random_tensor({n, 1, h, w}, rng, -2.0, 2.0);
  heads.reg = random_tensor({n, 4, h, w}, rng, -0.3, 0.3);
  Tensor anchors = random_boxes({n, 4, h, w}, rng);
  const LabelAssignment lab = random_labels(decode_boxes(anchors, heads.reg), rng);
  LossWeights lw;
  lw.w1 = rng.uniform(0.5, 2.0);
  lw.w2 = rng.uniform(0.5, 2.0);
  lw.w3 = rng.uniform(0.5, 2.0);
  lw.alpha = rng.uniform(1.1, 2.0);
  return check_gradients([=] { return total_loss(heads, anchors, lab, lw).total; },
                         {heads.cls1, heads.cls2, heads.cls3, heads.reg, anchors}, rng, opt);
}

const std::vector<std::pair<const char*, Check>>& registry() {
  static const std::vector<std::pair<const char*, Check>> checks{
      {"conv2d", check_conv2d},
      {"maxpool2d", check_maxpool},
      {"dwxcorr", check_dwxcorr},
      {"matmul", check_matmul},
      {"transpose_last2", check_transpose},
      {"softmax_lastaxis", check_softmax},
      {"gap", check_gap},
      {"gmp", check_gmp},
      {"add", check_add},
      {"sub", check_sub},
      {"mul", check_mul},
      {"scale", check_scale},
      {"scale_by", check_scale_by},
      {"sigmoid", check_sigmoid},
      {"relu", check_relu},
      {"exp", check_exp},
      {"concat_channels", check_concat},
      {"slice_channels", check_slice},
      {"mul_channelwise", check_mul_channelwise},
      {"reshape", check_reshape},
      {"sum", check_sum},
      {"mean", check_mean},
      {"decode_anchors", check_decode_anchors},
      {"decode_boxes", check_decode_boxes},
      {"softmax_cross_entropy", check_softmax_ce},
      {"bce_with_logits", check_bce},
      {"iou_loss", check_iou_loss},
      {"apn_fuse", check_fuse},
      {"spatial_attention", check_spatial},
      {"channel_attention", check_channel},
      {"cross_aan", check_cross},
      {"total_loss", check_total_loss},
  };
  return checks;
}

}  // namespace

double check_gradients(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                       Rng& rng, const GradcheckOptions& opt) {
  std::vector<bool> saved(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    saved[i] = inputs[i].requires_grad();
    Tensor t = inputs[i];
    t.set_requires_grad(true);
    t.zero_grad();
  }

  std::vector<double> r;
  std::vector<std::vector<double>> analytic(inputs.size());
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor out = f();
    r.resize(out.numel());
    for (double& v : r) v = rng.uniform(-1.0, 1.0);
    const Tensor loss = sum(mul(out, Tensor(out.shape(), r)));
    tape.backward(loss);
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t n = inputs[i].numel();
    analytic[i].assign(n, 0.0);
    if (inputs[i].has_grad()) {
      const auto g = inputs[i].grad();
      std::copy(g.begin(), g.end(), analytic[i].begin());
    }
  }

  double worst = 0.0;
  {
    NoGradScope no_grad;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor t = inputs[i];
      for (std::size_t k = 0; k < t.numel(); ++k) {
        const double x0 = t.data()[k];
        t.data_mut()[k] = x0 + opt.step;
        const double lp = projected(f(), r);
        t.data_mut()[k] = x0 - opt.step;
        const double lm = projected(f(), r);
        t.data_mut()[k] = x0;
        const double numeric = (lp - lm) / (2.0 * opt.step);
        const double a = analytic[i][k];
        const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor t = inputs[i];
    t.zero_grad();
    t.set_requires_grad(saved[i]);
  }
  return worst;
}

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.emplace_back(name);
  return names;
}

std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& opt, std::ostream* log) {
  std::vector<GradcheckResult> results;
  Rng rng(opt.seed);
  for (const auto& [name, fn] : registry()) {
    GradcheckResult res;
    res.name = name;
    for (std::size_t c = 0; c < opt.cases; ++c) {
      res.max_rel_error = std::max(res.max_rel_error, fn(rng, opt));
      ++res.cases;
    }
    res.passed = res.max_rel_error < opt.tolerance;
    if (log) {
      char line[128];
      std::snprintf(line, sizeof line, "%-22s cases=%zu max_rel_err=%.3e %s", name, res.cases,
                    res.max_rel_error, res.passed ? "ok" : "FAIL");
      *log << line << '\n';
    }
    results.push_back(res);
  }
  return results;
}

}  // namespace siamapn
