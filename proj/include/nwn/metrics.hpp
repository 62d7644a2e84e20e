// Detection scoring: confusion counts, MCC / precision / recall, threshold
// sweeps, and the hardware time/energy projection.
#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "nwn/dataio.hpp"
#include "nwn/pipeline.hpp"

namespace nwn::metrics {

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConfusionMatrix {
  long long tp = 0;
  long long tn = 0;
  long long fp = 0;
  long long fn = 0;

  long long total() const { return tp + tn + fp + fn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Cellwise comparison; 1 = event in both spans.
ConfusionMatrix confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels);
ConfusionMatrix confusion(const pipeline::EventMap& predicted, const dataio::LabelMask& labels);

/// A ratio that may be undefined (0/0). value is NaN when !defined.
struct Score {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;
};

/// Matthews correlation; 0 when any factor of the denominator is 0.
double mcc(const ConfusionMatrix& c);
Score precision(const ConfusionMatrix& c);
Score recall(const ConfusionMatrix& c);

struct SweepResult {
  std::vector<double> thresholds;
  std::vector<double> mcc;
  std::vector<Score> precision;
  std::vector<Score> recall;
  std::vector<ConfusionMatrix> counts;
  std::size_t argmax_index = 0;
  double argmax_mcc_threshold = 0.0;
  double max_mcc() const { return mcc[argmax_index]; }
};

/// Scores each threshold with strict ">" classification. The grid must be
/// non-empty and ascending; ties in MCC resolve to the smaller threshold.
SweepResult sweep(std::span<const double> distances, std::span<const std::uint8_t> labels,
                  std::span<const double> grid);

/// q-th percentile (0..100) with linear interpolation between order
/// statistics.
double percentile(std::span<const double> values, double q);
/// `count` evenly spaced thresholds from 0 to the given percentile of the
/// distances.
std::vector<double> default_grid(std::span<const double> distances, int count = 200, double upper_percentile = 99.9);

nlohmann::json confusion_to_json(const ConfusionMatrix& c);
/// Confusion counts plus mcc, precision and recall (null when undefined).
nlohmann::json scores_to_json(const ConfusionMatrix& c);
nlohmann::json sweep_to_json(const SweepResult& s);
/// threshold,tp,fp,tn,fn,mcc,precision,recall; undefined ratios are empty.
std::string sweep_to_csv(const SweepResult& s);

struct HardwareProjection {
  double simulated_seconds_per_tile = 1.4333e-3;
  long long tiles_per_granule = 90;
  double device_power = 25e-6;  // W

  void validate() const;
};

struct HardwareEstimate {
  double seconds = 0.0;
  double joules = 0.0;
};

/// time = seconds per tile x tiles, energy = time x power.
HardwareEstimate project_hardware(const HardwareProjection& p);
nlohmann::json projection_to_json(const HardwareProjection& p, const HardwareEstimate& e);

}  // namespace nwn::metrics
