#include "nwn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace nwn::metrics {

using nlohmann::json;

ConfusionMatrix confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels) {
  if (predicted.size() != labels.size())
    throw MetricsError("prediction and label counts differ: " + std::to_string(predicted.size()) + " vs " +
                       std::to_string(labels.size()));
  ConfusionMatrix c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool l = labels[i] != 0;
    if (p && l) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (l) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

ConfusionMatrix confusion(const pipeline::EventMap& predicted, const dataio::LabelMask& labels) {
  if (predicted.rows != labels.rows || predicted.cols != labels.cols)
    throw MetricsError("event map is " + std::to_string(predicted.rows) + "x" + std::to_string(predicted.cols) +
                       ", labels are " + std::to_string(labels.rows) + "x" + std::to_string(labels.cols));
  return confusion(predicted.predicted, labels.grid);
}

double mcc(const ConfusionMatrix& c) {
  using W = long double;
  const W tp = c.tp, tn = c.tn, fp = c.fp, fn = c.fn;
  const W denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0) return 0.0;
  return static_cast<double>((tp * tn - fp * fn) / std::sqrt(denom));
}

Score precision(const ConfusionMatrix& c) {
  if (c.tp + c.fp == 0) return {};
  return {static_cast<double>(static_cast<long double>(c.tp) / static_cast<long double>(c.tp + c.fp)), true};
}

Score recall(const ConfusionMatrix& c) {
  if (c.tp + c.fn == 0) return {};
  return {static_cast<double>(static_cast<long double>(c.tp) / static_cast<long double>(c.tp + c.fn)), true};
}

SweepResult sweep(std::span<const double> distances, std::span<const std::uint8_t> labels,
                  std::span<const double> grid) {
  if (grid.empty()) throw MetricsError("threshold grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end())) throw MetricsError("threshold grid must be ascending");
  if (distances.size() != labels.size())
    throw MetricsError("distance and label counts differ: " + std::to_string(distances.size()) + " vs " +
                       std::to_string(labels.size()));

  // Sorted distances per class turn each threshold into two binary searches.
  std::vector<double> pos;
  std::vector<double> neg;
  for (std::size_t i = 0; i < distances.size(); ++i) (labels[i] ? pos : neg).push_back(distances[i]);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  auto above = [](const std::vector<double>& v, double t) {
    return static_cast<long long>(v.end() - std::upper_bound(v.begin(), v.end(), t));
  };

  SweepResult s;
  s.thresholds.assign(grid.begin(), grid.end());
  for (double t : grid) {
    ConfusionMatrix c;
    c.tp = above(pos, t);
    c.fn = static_cast<long long>(pos.size()) - c.tp;
    c.fp = above(neg, t);
    c.tn = static_cast<long long>(neg.size()) - c.fp;
    s.counts.push_back(c);
    s.mcc.push_back(mcc(c));
    s.precision.push_back(precision(c));
    s.recall.push_back(recall(c));
  }
  for (std::size_t i = 1; i < s.mcc.size(); ++i) {
    if (s.mcc[i] > s.mcc[s.argmax_index]) s.argmax_index = i;
  }
  s.argmax_mcc_threshold = s.thresholds[s.argmax_index];
  return s;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw MetricsError("percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw MetricsError("percentile must lie in [0, 100]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<double> default_grid(std::span<const double> distances, int count, double upper_percentile) {
  if (count < 1) throw MetricsError("grid needs at least one threshold");
  const double top = percentile(distances, upper_percentile);
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) grid[static_cast<std::size_t>(i)] = count == 1 ? 0.0 : top * i / (count - 1);
  return grid;
}

namespace {
json score_json(const Score& s) { return s.defined ? json(s.value) : json(nullptr); }
}  // namespace

json confusion_to_json(const ConfusionMatrix& c) {
  return {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
}

json scores_to_json(const ConfusionMatrix& c) {
  const Score p = precision(c);
  const Score r = recall(c);
  return {{"confusion", confusion_to_json(c)},
          {"mcc", mcc(c)},
          {"precision", score_json(p)},
          {"precision_defined", p.defined},
          {"recall", score_json(r)},
          {"recall_defined", r.defined}};
}

json sweep_to_json(const SweepResult& s) {
  json precision = json::array();
  json recall = json::array();
  json tp = json::array(), fp = json::array(), tn = json::array(), fn = json::array();
  for (std::size_t i = 0; i < s.thresholds.size(); ++i) {
    precision.push_back(score_json(s.precision[i]));
    recall.push_back(score_json(s.recall[i]));
    tp.push_back(s.counts[i].tp);
    fp.push_back(s.counts[i].fp);
    tn.push_back(s.counts[i].tn);
    fn.push_back(s.counts[i].fn);
  }
  return {{"thresholds", s.thresholds},
          {"mcc", s.mcc},
          {"precision", precision},
          {"recall", recall},
          {"tp", tp},
          {"fp", fp},
          {"tn", tn},
          {"fn", fn},
          {"argmax_index", s.argmax_index},
          {"argmax_mcc_threshold", s.argmax_mcc_threshold},
          {"max_mcc", s.max_mcc()}};
}

std::string sweep_to_csv(const SweepResult& s) {
  std::ostringstream os;
  os.precision(17);
  os << "threshold,tp,fp,tn,fn,mcc,precision,recall\n";
  for (std::size_t i = 0; i < s.thresholds.size(); ++i) {
    const auto& c = s.counts[i];
    os << s.thresholds[i] << ',' << c.tp << ',' << c.fp << ',' << c.tn << ',' << c.fn << ',' << s.mcc[i] << ',';
    if (s.precision[i].defined) os << s.precision[i].value;
    os << ',';
    if (s.recall[i].defined) os << s.recall[i].value;
    os << '\n';
  }
  return os.str();
}

void HardwareProjection::validate() const {
  if (!(simulated_seconds_per_tile > 0.0)) throw MetricsError("simulated_seconds_per_tile must be positive");
  if (tiles_per_granule < 0) throw MetricsError("tiles_per_granule must be non-negative");
  if (!(device_power > 0.0)) throw MetricsError("device_power must be positive");
}

HardwareEstimate project_hardware(const HardwareProjection& p) {
  p.validate();
  const double seconds = p.simulated_seconds_per_tile * static_cast<double>(p.tiles_per_granule);
  return {seconds, seconds * p.device_power};
}

json projection_to_json(const HardwareProjection& p, const HardwareEstimate& e) {
  return {{"simulated_seconds_per_tile", p.simulated_seconds_per_tile},
          {"tiles_per_granule", p.tiles_per_granule},
          {"device_power_w", p.device_power},
          {"seconds_per_granule", e.seconds},
          {"joules_per_granule", e.joules}};
}

}  // namespace nwn::metrics
