#include "hseg/interaction.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "hseg/error.hpp"

namespace hseg::interaction {

namespace {

constexpr double kDefaultTargets[] = {0.90, 0.95};

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  const std::size_t n = f.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (std::size_t q = 1; q < n; ++q) {
    double s = 0.0;
    while (true) {
      const double p = static_cast<double>(v[k]), qq = static_cast<double>(q);
      s = ((f[q] + qq * qq) - (f[v[k]] + p * p)) / (2.0 * qq - 2.0 * p);
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

void check_binary_pair(const Tensor& gt, const Tensor& pred) {
  if (gt.rank() != 2 || gt.shape() != pred.shape()) {
    throw DimensionError("simulate_click: gt " + shape_string(gt.shape()) + " vs prediction " +
                         shape_string(pred.shape()));
  }
}

}  // namespace

std::vector<float> distance_to_boundary(const std::vector<std::uint8_t>& region, std::size_t h,
                                        std::size_t w) {
  // Pad by one outside pixel on each side so the image border counts as boundary.
  const std::size_t ph = h + 2, pw = w + 2;
  constexpr double kBig = 1e20;
  std::vector<double> grid(ph * pw, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      grid[(y + 1) * pw + x + 1] = region[y * w + x] ? kBig : 0.0;

  const std::size_t n = std::max(ph, pw);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<std::size_t> v(n);
  f.resize(ph);
  d.resize(ph);
  for (std::size_t x = 0; x < pw; ++x) {
    for (std::size_t y = 0; y < ph; ++y) f[y] = grid[y * pw + x];
    edt_1d(f, d, v, z);
    for (std::size_t y = 0; y < ph; ++y) grid[y * pw + x] = d[y];
  }
  f.resize(pw);
  d.resize(pw);
  for (std::size_t y = 0; y < ph; ++y) {
    for (std::size_t x = 0; x < pw; ++x) f[x] = grid[y * pw + x];
    edt_1d(f, d, v, z);
    for (std::size_t x = 0; x < pw; ++x) grid[y * pw + x] = d[x];
  }

  std::vector<float> out(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      out[y * w + x] = static_cast<float>(std::sqrt(grid[(y + 1) * pw + x + 1]));
  return out;
}

std::optional<prompt::Click> simulate_click(const Tensor& gt, const Tensor& pred) {
  check_binary_pair(gt, pred);
  const std::size_t h = gt.dim(0), w = gt.dim(1), n = h * w;
  std::vector<std::uint8_t> err(n);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    err[i] = (gt[i] != 0.0f) != (pred[i] != 0.0f);
    any = any || err[i];
  }
  if (!any) return std::nullopt;

  // Label 4-connected components; keep the largest (first in raster order on ties).
  std::vector<std::int32_t> label(n, -1);
  std::vector<std::size_t> stack;
  std::int32_t best_label = -1;
  std::size_t best_size = 0;
  std::int32_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!err[i] || label[i] >= 0) continue;
    std::size_t size = 0;
    label[i] = next;
    stack.push_back(i);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const std::size_t y = p / w, x = p % w;
      const std::size_t nb[4] = {y > 0 ? p - w : n, y + 1 < h ? p + w : n, x > 0 ? p - 1 : n,
                                 x + 1 < w ? p + 1 : n};
      for (std::size_t q : nb) {
        if (q < n && err[q] && label[q] < 0) {
          label[q] = next;
          stack.push_back(q);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best_label = next;
    }
    ++next;
  }

  std::vector<std::uint8_t> region(n);
  for (std::size_t i = 0; i < n; ++i) region[i] = label[i] == best_label;
  const std::vector<float> dist = distance_to_boundary(region, h, w);
  std::size_t best = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (region[i] && (best == n || dist[i] > dist[best])) best = i;
  }
  const prompt::ClickLabel lbl =
      gt[best] != 0.0f ? prompt::ClickLabel::Positive : prompt::ClickLabel::Negative;
  return prompt::Click{best / w, best % w, lbl};
}

double mask_iou(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("mask_iou: shape mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0.0f, y = b[i] != 0.0f;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

DecoderBackend::DecoderBackend(const DecoderWeights& w, const DecoderConfig& cfg,
                               StepOptions opts)
    : weights_(w), cfg_(cfg), opts_(opts) {}

void DecoderBackend::reset(const Tensor& image) {
  session_ = start_session(image, weights_, cfg_);
  last_ = {};
}

Tensor DecoderBackend::step(std::span<const prompt::Click> new_clicks) {
  last_ = decoder_step(session_, new_clicks, weights_, cfg_, opts_);
  return last_.mask;
}

InteractionReport run_interaction(const Tensor& gt, const Tensor& image,
                                  SegmentationBackend& backend, std::size_t max_clicks,
                                  std::span<const double> targets) {
  const auto start = std::chrono::steady_clock::now();
  if (targets.empty()) targets = kDefaultTargets;
  if (gt.rank() != 2) throw DimensionError("run_interaction: gt must be H x W");

  InteractionReport rep;
  for (double t : targets) rep.noc.push_back({t, max_clicks});
  if (max_clicks == 0) return rep;

  backend.reset(image);
  Tensor pred(gt.shape());
  for (std::size_t k = 1; k <= max_clicks; ++k) {
    const auto click = simulate_click(gt, pred);
    if (!click) {
      rep.converged = true;
      const double last = rep.ious.empty() ? mask_iou(pred, gt) : rep.ious.back();
      rep.ious.resize(max_clicks, last);
      break;
    }
    rep.clicks.push_back(*click);
    pred = backend.step({&*click, 1});
    rep.timings.push_back(backend.last_timing());
    rep.ious.push_back(mask_iou(pred, gt));
  }

  for (NocResult& r : rep.noc) {
    for (std::size_t i = 0; i < rep.ious.size(); ++i) {
      if (rep.ious[i] >= r.target) {
        r.clicks = i + 1;
        break;
      }
    }
  }
  rep.iou_at_5 = rep.ious.size() >= 5 ? rep.ious[4] : rep.ious.back();
  rep.total_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace hseg::interaction
