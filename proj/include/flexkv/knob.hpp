#pragma once

#include <functional>
#include <optional>

namespace flexkv {

// Offload ratio is tracked in integer steps of 1/steps_total so that clamping
// and equality are exact.
struct KnobState {
  int steps_total = 10;  // 1 / delta
  int i = 0;             // current ratio = i / steps_total
  int s = 1;             // direction, +1 or -1

  double ratio() const { return static_cast<double>(i) / steps_total; }
};

// One hill-climbing round. Drive it by asking next() for the ratio to sample
// and feeding the measured throughput back through observe(). A probe whose
// step would leave [0, 1] is not sampled and counts as underperforming.
class KnobRound {
 public:
  explicit KnobRound(KnobState& st);

  // Ratio index to sample next, or nullopt once the round has converged.
  std::optional<int> next();
  void observe(double throughput);

  bool done() const { return phase_ == Phase::Done; }
  int samples() const { return samples_; }
  int best() const { return i_best_; }
  double best_throughput() const { return t_best_; }

 private:
  enum class Phase { Initial, First, Loop, Done };
  bool in_range(int i) const { return i >= 0 && i <= st_.steps_total; }
  void finish();

  KnobState& st_;
  Phase phase_ = Phase::Initial;
  int pending_ = -1;
  int i_best_ = 0;
  double t_best_ = 0;
  int under_ = 0;
  int samples_ = 0;
};

struct KnobResult {
  int i_best = 0;
  double t_best = 0;
  int samples = 0;
};

// Runs a full round synchronously against a sampler of ratio -> throughput.
KnobResult knob_round(KnobState& st, const std::function<double(double)>& sample);

// Round budget: ceil(1/delta) + 2 samples.
inline int knob_sample_bound(const KnobState& st) { return st.steps_total + 2; }

// Write-fraction change that restarts the knob.
inline constexpr double kWorkloadShiftThreshold = 0.10;
bool detect_workload_shift(double write_fraction_now, double write_fraction_last);

}  // namespace flexkv
