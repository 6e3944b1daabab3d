#include "hoplock/encryptor.hpp"

#include <algorithm>
#include <cmath>

namespace hoplock {

void HopGeneratorSpec::validate() const {
  if (freq_set.empty()) throw ConfigError("generator freq_set is empty");
  for (double f : freq_set)
    if (!(f > 0)) throw ConfigError("generator frequencies must be positive");
  if (!(dwell_min > 0) || !(dwell_max >= dwell_min))
    throw ConfigError("generator dwell range must satisfy 0 < min <= max");
}

void HopSchedule::validate() const {
  for (const auto& e : entries) {
    if (!(e.freq_hz > 0)) throw ConfigError("hop frequency must be positive");
    if (!(e.dwell_s > 0)) throw ConfigError("hop dwell must be positive");
  }
  if (generator) generator->validate();
}

double HopSchedule::max_freq() const {
  double f = 0.0;
  for (const auto& e : entries) f = std::max(f, e.freq_hz);
  if (generator)
    for (double g : generator->freq_set) f = std::max(f, g);
  return f;
}

HopSequencer::HopSequencer(const HopSchedule& schedule, std::uint64_t seed)
    : schedule_(schedule), rng_(seed) {}

double HopSequencer::uniform01() {
  // Fixed 53-bit mapping; independent of distribution implementations.
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

std::optional<HopEntry> HopSequencer::next() {
  if (index_ < schedule_.entries.size()) {
    HopEntry e = schedule_.entries[index_++];
    prev_freq_ = e.freq_hz;
    return e;
  }
  if (!schedule_.generator) return std::nullopt;
  const auto& gen = *schedule_.generator;
  std::vector<double> pool;
  pool.reserve(gen.freq_set.size());
  for (double f : gen.freq_set)
    if (f != prev_freq_) pool.push_back(f);
  if (pool.empty()) pool = gen.freq_set;  // single-frequency set: allow repeat
  const std::size_t idx = std::min<std::size_t>(
      pool.size() - 1, static_cast<std::size_t>(uniform01() * pool.size()));
  HopEntry e;
  e.freq_hz = pool[idx];
  e.dwell_s = gen.dwell_min + uniform01() * (gen.dwell_max - gen.dwell_min);
  prev_freq_ = e.freq_hz;
  return e;
}

void DefenseConfig::validate() const {
  if (!enabled) return;
  if (!(mismatch_threshold > 0) || !(mismatch_threshold < 1))
    throw ConfigError("defense mismatch_threshold must be in (0, 1)");
  if (reaction_delay < 0)
    throw ConfigError("defense reaction_delay must be non-negative");
}

void DefenseMonitor::reset() {
  window_.clear();
  head_ = 0;
  sum_tx_ = sum_auth_ = 0.0;
  mismatch_since_ = -1.0;
}

bool DefenseMonitor::update(double t, double dt, double p_tx, double p_auth,
                            double active_freq) {
  if (!config_.enabled || active_freq <= 0) return false;
  window_.push_back({t, p_tx * dt, p_auth * dt});
  sum_tx_ += p_tx * dt;
  sum_auth_ += p_auth * dt;
  const double span = 1.0 / active_freq;
  while (head_ < window_.size() && window_[head_].t < t - span) {
    sum_tx_ -= window_[head_].p_tx;
    sum_auth_ -= window_[head_].p_auth;
    ++head_;
  }
  if (head_ > 4096 && head_ * 2 > window_.size()) {
    window_.erase(window_.begin(), window_.begin() + head_);
    head_ = 0;
  }
  if (sum_tx_ <= 0) {
    mismatch_since_ = -1.0;
    return false;
  }
  const double mismatch = (sum_tx_ - sum_auth_) / sum_tx_;
  if (mismatch > config_.mismatch_threshold) {
    if (mismatch_since_ < 0) mismatch_since_ = t;
    if (t - mismatch_since_ >= config_.reaction_delay) {
      mismatch_since_ = -1.0;
      return true;
    }
  } else {
    mismatch_since_ = -1.0;
  }
  return false;
}

}  // namespace hoplock
