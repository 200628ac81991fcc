#pragma once

// Categorical distributions over finite labeled spaces.

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "puma/error.hpp"

namespace puma {

inline constexpr double kProbTolerance = 1e-9;

/// Ordered set of distinct labels. Index order is the order of construction.
class LabelSpace {
 public:
  explicit LabelSpace(std::vector<std::string> labels, bool ordinal = false);

  static std::shared_ptr<const LabelSpace> make(std::vector<std::string> labels,
                                                bool ordinal = false);

  std::size_t size() const noexcept { return labels_.size(); }
  bool ordinal() const noexcept { return ordinal_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }

  bool contains(const std::string& label) const { return index_.count(label) != 0; }
  /// Throws UnknownLabel.
  std::size_t index(const std::string& label) const;

  bool operator==(const LabelSpace& other) const { return labels_ == other.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
  bool ordinal_;
};

using SpacePtr = std::shared_ptr<const LabelSpace>;

bool same_space(const SpacePtr& a, const SpacePtr& b);

/// Probability vector over a LabelSpace. Always valid once constructed.
class Categorical {
 public:
  /// Validates non-negativity and unit sum within kProbTolerance.
  Categorical(SpacePtr space, std::vector<double> probs);

  static Categorical uniform(SpacePtr space);
  static Categorical point_mass(SpacePtr space, std::size_t index);
  static Categorical point_mass(SpacePtr space, const std::string& label);

  const SpacePtr& space() const noexcept { return space_; }
  std::size_t size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }
  double at(const std::string& label) const { return probs_[space_->index(label)]; }

  /// Smallest index among the maximal entries.
  std::size_t argmax() const;
  const std::string& argmax_label() const { return space_->label(argmax()); }

  bool approx_equal(const Categorical& other, double tol = kProbTolerance) const;

 private:
  SpacePtr space_;
  std::vector<double> probs_;
};

/// weights / sum(weights). Throws AllZero, DimensionMismatch.
Categorical normalize(std::span<const double> weights, SpacePtr space);
inline Categorical normalize(std::initializer_list<double> weights, SpacePtr space) {
  return normalize(std::span<const double>(weights.begin(), weights.size()), std::move(space));
}

/// Shannon entropy in nats, 0 log 0 = 0.
double entropy(const Categorical& d);

/// KL(q || p) in nats. Throws SupportViolation when q is not absolutely
/// continuous with respect to p.
double kl_divergence(const Categorical& q, const Categorical& p);

/// (1 - w) a + w b. Throws WeightOutOfRange, DimensionMismatch.
Categorical mix(const Categorical& a, const Categorical& b, double w);

}  // namespace puma
