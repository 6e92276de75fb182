#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hseg/config.hpp"
#include "hseg/pipeline.hpp"
#include "hseg/prompt.hpp"
#include "hseg/tensor.hpp"
#include "hseg/weights.hpp"

/// Click simulation and the NoC evaluation loop.
namespace hseg::interaction {

/// Next corrective click: inside the largest 4-connected component of
/// gt XOR pred, at the pixel farthest from the component boundary (pixels
/// outside the image count as boundary). Ties go to the smallest (y, x).
/// Labelled with the gt value there. Empty when pred == gt.
std::optional<prompt::Click> simulate_click(const Tensor& gt, const Tensor& pred);

/// Euclidean distance from each pixel of `region` (nonzero) to the nearest
/// pixel outside it, with the image surrounded by outside pixels. 0 outside.
std::vector<float> distance_to_boundary(const std::vector<std::uint8_t>& region, std::size_t h,
                                        std::size_t w);

/// Intersection over union of two binary masks; two empty masks give 1.
double mask_iou(const Tensor& a, const Tensor& b);

/// Anything that turns clicks into a mask.
class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual void reset(const Tensor& image) = 0;
  virtual Tensor step(std::span<const prompt::Click> new_clicks) = 0;
  virtual StepTiming last_timing() const { return {}; }
};

/// The decoder behind the backend interface.
class DecoderBackend : public SegmentationBackend {
 public:
  DecoderBackend(const DecoderWeights& w, const DecoderConfig& cfg, StepOptions opts = {});

  void reset(const Tensor& image) override;
  Tensor step(std::span<const prompt::Click> new_clicks) override;
  StepTiming last_timing() const override { return last_.timing; }

  const Session& session() const noexcept { return session_; }
  const StepResult& last_result() const noexcept { return last_; }

 private:
  const DecoderWeights& weights_;
  DecoderConfig cfg_;
  StepOptions opts_;
  Session session_;
  StepResult last_;
};

struct NocResult {
  double target = 0.0;
  std::size_t clicks = 0;  // max_clicks when never reached
};

struct InteractionReport {
  std::vector<double> ious;  // one per click; padded with the last IoU on convergence
  std::vector<prompt::Click> clicks;
  std::vector<NocResult> noc;
  double iou_at_5 = 0.0;
  bool converged = false;
  std::vector<StepTiming> timings;
  double total_ms = 0.0;
};

/// Simulated session of up to `max_clicks` clicks against `gt`.
InteractionReport run_interaction(const Tensor& gt, const Tensor& image,
                                  SegmentationBackend& backend, std::size_t max_clicks = 20,
                                  std::span<const double> targets = {});

}  // namespace hseg::interaction
