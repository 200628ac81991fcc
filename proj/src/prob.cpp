#include "puma/prob.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace puma {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::WeightOutOfRange: return "WeightOutOfRange";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::UnknownAction: return "UnknownAction";
    case ErrorCode::ZeroEvidence: return "ZeroEvidence";
    case ErrorCode::InvalidWeights: return "InvalidWeights";
    case ErrorCode::EmptyActionSet: return "EmptyActionSet";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::TemplateMissing: return "TemplateMissing";
    case ErrorCode::PlaceholderUnresolved: return "PlaceholderUnresolved";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::EmptyTriggerSet: return "EmptyTriggerSet";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NoGoldLabels: return "NoGoldLabels";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

LabelSpace::LabelSpace(std::vector<std::string> labels, bool ordinal)
    : labels_(std::move(labels)), ordinal_(ordinal) {
  if (labels_.empty()) throw Error(ErrorCode::InvalidConfig, "label space must be non-empty");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second)
      throw Error(ErrorCode::InvalidConfig, "duplicate label '" + labels_[i] + "'");
  }
}

std::shared_ptr<const LabelSpace> LabelSpace::make(std::vector<std::string> labels, bool ordinal) {
  return std::make_shared<const LabelSpace>(std::move(labels), ordinal);
}

std::size_t LabelSpace::index(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) throw Error(ErrorCode::UnknownLabel, "'" + label + "'");
  return it->second;
}

bool same_space(const SpacePtr& a, const SpacePtr& b) {
  return a == b || (a && b && *a == *b);
}

Categorical::Categorical(SpacePtr space, std::vector<double> probs)
    : space_(std::move(space)), probs_(std::move(probs)) {
  if (!space_) throw Error(ErrorCode::InvalidDistribution, "null label space");
  if (probs_.size() != space_->size())
    throw Error(ErrorCode::DimensionMismatch,
                "got " + std::to_string(probs_.size()) + " probabilities for " +
                    std::to_string(space_->size()) + " labels");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw Error(ErrorCode::InvalidDistribution, "negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbTolerance)
    throw Error(ErrorCode::InvalidDistribution, "probabilities sum to " + std::to_string(sum));
}

Categorical Categorical::uniform(SpacePtr space) {
  const std::size_t n = space->size();
  return Categorical(std::move(space), std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Categorical Categorical::point_mass(SpacePtr space, std::size_t index) {
  std::vector<double> p(space->size(), 0.0);
  p.at(index) = 1.0;
  return Categorical(std::move(space), std::move(p));
}

Categorical Categorical::point_mass(SpacePtr space, const std::string& label) {
  const std::size_t i = space->index(label);
  return point_mass(std::move(space), i);
}

std::size_t Categorical::argmax() const {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

bool Categorical::approx_equal(const Categorical& other, double tol) const {
  if (!same_space(space_, other.space_)) return false;
  for (std::size_t i = 0; i < probs_.size(); ++i)
    if (std::abs(probs_[i] - other.probs_[i]) > tol) return false;
  return true;
}

Categorical normalize(std::span<const double> weights, SpacePtr space) {
  if (weights.size() != space->size())
    throw Error(ErrorCode::DimensionMismatch, "weights length does not match label space");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw Error(ErrorCode::InvalidDistribution, "weights must be finite and non-negative");
    sum += w;
  }
  if (sum <= 0.0) throw Error(ErrorCode::AllZero, "every weight is zero");
  std::vector<double> p(weights.size());
  std::transform(weights.begin(), weights.end(), p.begin(), [sum](double w) { return w / sum; });
  return Categorical(std::move(space), std::move(p));
}

double entropy(const Categorical& d) {
  double h = 0.0;
  for (double p : d.probs())
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double kl_divergence(const Categorical& q, const Categorical& p) {
  if (!same_space(q.space(), p.space()))
    throw Error(ErrorCode::DimensionMismatch, "KL over different label spaces");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] == 0.0) continue;
    if (p[i] == 0.0)
      throw Error(ErrorCode::SupportViolation,
                  "q has mass on '" + q.space()->label(i) + "' where p is zero");
    kl += q[i] * std::log(q[i] / p[i]);
  }
  // Rounding can leave a tiny negative value at q == p.
  return std::max(kl, 0.0);
}

Categorical mix(const Categorical& a, const Categorical& b, double w) {
  if (!(w >= 0.0 && w <= 1.0))
    throw Error(ErrorCode::WeightOutOfRange, "mixing weight " + std::to_string(w));
  if (!same_space(a.space(), b.space()))
    throw Error(ErrorCode::DimensionMismatch, "mix over different label spaces");
  if (w == 0.0) return a;
  if (w == 1.0) return b;
  std::vector<double> p(a.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = (1.0 - w) * a[i] + w * b[i];
  return Categorical(a.space(), std::move(p));
}

}  // namespace puma
