#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cstest {

// One current status observation: inspection time t and indicator delta = 1{X <= t}.
struct Observation {
  double t = 0.0;
  int delta = 0;
};

enum class SampleLabel { first, second, combined };

// Observations sorted by time. Ties are kept; estimators merge them.
class CurrentStatusSample {
 public:
  CurrentStatusSample() = default;

  explicit CurrentStatusSample(std::vector<Observation> obs,
                               SampleLabel label = SampleLabel::first)
      : obs_(std::move(obs)), label_(label) {
    for (const auto& o : obs_) {
      if (!std::isfinite(o.t)) {
        throw std::invalid_argument("observation time is not finite");
      }
      if (o.delta != 0 && o.delta != 1) {
        throw std::invalid_argument("delta must be 0 or 1");
      }
    }
    std::stable_sort(obs_.begin(), obs_.end(),
                     [](const Observation& a, const Observation& b) { return a.t < b.t; });
  }

  CurrentStatusSample(std::span<const double> times, std::span<const int> deltas,
                      SampleLabel label = SampleLabel::first)
      : CurrentStatusSample(zip(times, deltas), label) {}

  std::span<const Observation> observations() const { return obs_; }
  const Observation& operator[](std::size_t i) const { return obs_[i]; }
  std::size_t size() const { return obs_.size(); }
  bool empty() const { return obs_.empty(); }
  SampleLabel label() const { return label_; }

  std::vector<double> times() const {
    std::vector<double> out(obs_.size());
    std::transform(obs_.begin(), obs_.end(), out.begin(), [](const Observation& o) { return o.t; });
    return out;
  }

  std::vector<int> deltas() const {
    std::vector<int> out(obs_.size());
    std::transform(obs_.begin(), obs_.end(), out.begin(), [](const Observation& o) { return o.delta; });
    return out;
  }

  std::size_t event_count() const {
    std::size_t c = 0;
    for (const auto& o : obs_) c += static_cast<std::size_t>(o.delta);
    return c;
  }

  // Same times, new indicators (in the stored sorted order).
  CurrentStatusSample with_deltas(std::span<const int> deltas) const {
    if (deltas.size() != obs_.size()) {
      throw std::invalid_argument("with_deltas: size mismatch");
    }
    CurrentStatusSample out;
    out.label_ = label_;
    out.obs_ = obs_;
    for (std::size_t i = 0; i < obs_.size(); ++i) {
      if (deltas[i] != 0 && deltas[i] != 1) throw std::invalid_argument("delta must be 0 or 1");
      out.obs_[i].delta = deltas[i];
    }
    return out;
  }

  void require_within(double M) const {
    for (const auto& o : obs_) {
      if (o.t < 0.0 || o.t > M) {
        throw std::out_of_range("observation time " + std::to_string(o.t) +
                                " outside [0, " + std::to_string(M) + "]");
      }
    }
  }

  static CurrentStatusSample pooled(const CurrentStatusSample& a, const CurrentStatusSample& b) {
    std::vector<Observation> all;
    all.reserve(a.size() + b.size());
    all.insert(all.end(), a.obs_.begin(), a.obs_.end());
    all.insert(all.end(), b.obs_.begin(), b.obs_.end());
    return CurrentStatusSample(std::move(all), SampleLabel::combined);
  }

 private:
  static std::vector<Observation> zip(std::span<const double> times, std::span<const int> deltas) {
    if (times.size() != deltas.size()) {
      throw std::invalid_argument("times and deltas differ in length");
    }
    std::vector<Observation> obs(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) obs[i] = {times[i], deltas[i]};
    return obs;
  }

  std::vector<Observation> obs_;
  SampleLabel label_ = SampleLabel::first;
};

}  // namespace cstest
