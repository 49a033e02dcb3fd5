#include "flexkv/knob.hpp"

#include <cmath>

namespace flexkv {

KnobRound::KnobRound(KnobState& st) : st_(st) {
  if (st_.s != 1 && st_.s != -1) st_.s = 1;
}

std::optional<int> KnobRound::next() {
  switch (phase_) {
    case Phase::Initial:
      pending_ = st_.i;
      return pending_;
    case Phase::First: {
      int cand = st_.i + st_.s;
      if (in_range(cand)) {
        pending_ = cand;
        return pending_;
      }
      // Clamped first probe: treated as worse than the start.
      st_.s = -st_.s;
      phase_ = Phase::Loop;
      return next();
    }
    case Phase::Loop:
      while (under_ < 2) {
        int cand = st_.i + st_.s;
        if (in_range(cand)) {
          pending_ = cand;
          return pending_;
        }
        ++under_;
      }
      finish();
      return std::nullopt;
    case Phase::Done:
      return std::nullopt;
  }
  return std::nullopt;
}

void KnobRound::observe(double t) {
  if (pending_ < 0) return;
  ++samples_;
  int at = pending_;
  pending_ = -1;
  switch (phase_) {
    case Phase::Initial:
      i_best_ = at;
      t_best_ = t;
      under_ = 0;
      phase_ = Phase::First;
      break;
    case Phase::First:
      if (t < t_best_) {
        st_.s = -st_.s;
      } else {
        // Not flipped: this probe is also the first step of the climb.
        st_.i = at;
        if (t <= t_best_) {
          ++under_;
        } else {
          i_best_ = at;
          t_best_ = t;
          under_ = 0;
        }
      }
      phase_ = Phase::Loop;
      break;
    case Phase::Loop:
      st_.i = at;
      if (t <= t_best_) {
        ++under_;
      } else {
        i_best_ = at;
        t_best_ = t;
        under_ = 0;
      }
      break;
    case Phase::Done:
      break;
  }
  if (phase_ == Phase::Loop && under_ >= 2) finish();
}

void KnobRound::finish() {
  st_.i = i_best_;
  phase_ = Phase::Done;
}

KnobResult knob_round(KnobState& st, const std::function<double(double)>& sample) {
  KnobRound round(st);
  while (auto i = round.next()) round.observe(sample(static_cast<double>(*i) / st.steps_total));
  return {round.best(), round.best_throughput(), round.samples()};
}

bool detect_workload_shift(double now, double last) {
  return std::fabs(now - last) >= kWorkloadShiftThreshold - 1e-9;
}

}  // namespace flexkv
