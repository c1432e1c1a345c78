#pragma once

#include <algorithm>
#include <concepts>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vibhead/error.hpp"
#include "vibhead/model.hpp"
#include "vibhead/training.hpp"

namespace vibhead {

/// Anything that maps an input to labeled probabilities.
template <typename C, typename Input>
concept ProbabilisticClassifier = requires(const C& c, const Input& x) {
  { c.labels() } -> std::convertible_to<const std::vector<UserId>&>;
  { c.predict(x) } -> std::same_as<ProbabilityVector>;
};

struct Thresholds {
  double alpha = 0.9;  // step one: v*_0 >= alpha
  double beta = 0.8;   // step two: v*_j >= beta for every consulted member

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0))
      fail(ErrorCode::InvalidArgument, "thresholds must lie in (0, 1)");
  }
};

enum class Stage { StepOne, StepTwo };
enum class Outcome { Accept, Reject };

constexpr std::string_view to_string(Stage s) { return s == Stage::StepOne ? "step_one" : "step_two"; }
constexpr std::string_view to_string(Outcome o) { return o == Outcome::Accept ? "accept" : "reject"; }

struct StepOneResult {
  UserId candidate = 0;     // i*_0
  double confidence = 0.0;  // v*_0
  bool passed = false;
};

/// What one leave-one-out member F_j said about the sample.
struct MemberEvidence {
  UserId member = 0;             // j
  UserId predicted = 0;          // i*_j
  double confidence = 0.0;       // v*_j
  double candidate_prob = 0.0;   // v_{j, i*_0}
  bool agrees = false;
};

struct StepTwoResult {
  bool passed = false;
  std::vector<MemberEvidence> evidence;
};

struct AuthDecision {
  Outcome outcome = Outcome::Reject;
  Stage stage = Stage::StepOne;
  UserId candidate = 0;
  double confidence = 0.0;
  std::vector<MemberEvidence> evidence;

  bool accepted() const { return outcome == Outcome::Accept; }
  /// Accepted user id, or kImpostor when rejected.
  UserId accepted_user() const { return accepted() ? candidate : kImpostor; }
};

/// The N+1 classifiers: F_0 over all registered users and, for every user i,
/// F_i trained without user i.
template <typename Model>
class AuthenticationEnsemble {
 public:
  AuthenticationEnsemble() = default;

  AuthenticationEnsemble(Model global, std::map<UserId, Model> leave_one_out, Thresholds thresholds = {})
      : global_(std::move(global)), members_(std::move(leave_one_out)), thresholds_(thresholds) {
    thresholds_.validate();
    users_ = global_.labels();
    std::sort(users_.begin(), users_.end());
    if (users_.size() < 3) fail(ErrorCode::TooFewUsers, "ensemble needs at least 3 registered users");
    if (members_.size() != users_.size()) fail(ErrorCode::InvalidArgument, "need one leave-one-out model per user");
    for (UserId i : users_) {
      auto it = members_.find(i);
      if (it == members_.end()) fail(ErrorCode::InvalidArgument, "missing leave-one-out model for user " + std::to_string(i));
      std::vector<UserId> expected;
      for (UserId u : users_)
        if (u != i) expected.push_back(u);
      std::vector<UserId> got = it->second.labels();
      std::sort(got.begin(), got.end());
      if (got != expected)
        fail(ErrorCode::InvalidArgument, "model for user " + std::to_string(i) + " must cover every user except " + std::to_string(i));
    }
  }

  const Model& global() const { return global_; }
  const Model& member(UserId i) const {
    auto it = members_.find(i);
    if (it == members_.end()) fail(ErrorCode::UnknownCandidate, "no leave-one-out model for user " + std::to_string(i));
    return it->second;
  }
  const std::map<UserId, Model>& members() const { return members_; }
  const std::vector<UserId>& users() const { return users_; }
  const Thresholds& thresholds() const { return thresholds_; }
  void set_thresholds(Thresholds t) {
    t.validate();
    thresholds_ = t;
  }
  bool has_user(UserId id) const { return std::binary_search(users_.begin(), users_.end(), id); }

 private:
  Model global_;
  std::map<UserId, Model> members_;
  std::vector<UserId> users_;
  Thresholds thresholds_;
};

template <typename Model, typename Input>
  requires ProbabilisticClassifier<Model, Input>
StepOneResult step_one(const AuthenticationEnsemble<Model>& ens, const Input& x) {
  const ProbabilityVector v = ens.global().predict(x);
  StepOneResult r;
  r.candidate = v.argmax();
  r.confidence = v.max();
  r.passed = r.confidence >= ens.thresholds().alpha;
  return r;
}

/// Every F_j with j != candidate must predict the candidate with confidence
/// >= beta. Stops at the first disagreement unless `exhaustive`.
template <typename Model, typename Input>
  requires ProbabilisticClassifier<Model, Input>
StepTwoResult step_two(const AuthenticationEnsemble<Model>& ens, const Input& x, UserId candidate,
                       bool exhaustive = false) {
  if (!ens.has_user(candidate)) fail(ErrorCode::UnknownCandidate, "candidate " + std::to_string(candidate) + " is not registered");
  StepTwoResult r;
  r.passed = true;
  for (const auto& [j, model] : ens.members()) {
    if (j == candidate) continue;
    const ProbabilityVector v = model.predict(x);
    MemberEvidence e;
    e.member = j;
    e.predicted = v.argmax();
    e.confidence = v.max();
    e.candidate_prob = v.prob_of(candidate);
    e.agrees = e.predicted == candidate && e.confidence >= ens.thresholds().beta;
    r.evidence.push_back(e);
    if (!e.agrees) {
      r.passed = false;
      if (!exhaustive) break;
    }
  }
  return r;
}

template <typename Model, typename Input>
  requires ProbabilisticClassifier<Model, Input>
AuthDecision authenticate(const AuthenticationEnsemble<Model>& ens, const Input& x, bool exhaustive = false) {
  const StepOneResult one = step_one(ens, x);
  AuthDecision d;
  d.candidate = one.candidate;
  d.confidence = one.confidence;
  if (!one.passed) return d;
  StepTwoResult two = step_two(ens, x, one.candidate, exhaustive);
  d.stage = Stage::StepTwo;
  d.evidence = std::move(two.evidence);
  d.outcome = two.passed ? Outcome::Accept : Outcome::Reject;
  return d;
}

/// Trains F_0 on every user and F_i on all users but i. Member k (0 for F_0,
/// then users in ascending order) uses seed + k.
inline AuthenticationEnsemble<ClassifierModel> build_ensemble(const std::map<UserId, std::vector<FeaturePair>>& per_user,
                                                              const TrainConfig& cfg, Thresholds thresholds = {},
                                                              const Architecture& arch = {}) {
  thresholds.validate();
  if (per_user.size() < 3) fail(ErrorCode::TooFewUsers, "need at least 3 registered users, got " + std::to_string(per_user.size()));
  for (const auto& [id, xs] : per_user)
    if (xs.empty()) fail(ErrorCode::EmptyClass, "user " + std::to_string(id) + " has no samples");

  auto train_on = [&](UserId excluded, std::uint64_t member_index) {
    std::vector<FeaturePair> data;
    std::vector<UserId> labels;
    for (const auto& [id, xs] : per_user) {
      if (id == excluded) continue;
      labels.push_back(id);
      for (const auto& x : xs) {
        data.push_back(x);
        data.back().user = id;
      }
    }
    TrainConfig member_cfg = cfg;
    member_cfg.seed = cfg.seed + member_index;
    return train_classifier(data, member_cfg, arch, labels).model;
  };

  ClassifierModel global = train_on(kImpostor, 0);
  std::map<UserId, ClassifierModel> members;
  std::uint64_t k = 1;
  for (const auto& [id, xs] : per_user) members.emplace(id, train_on(id, k++));
  return AuthenticationEnsemble<ClassifierModel>(std::move(global), std::move(members), thresholds);
}

/// Structured text record of a decision.
inline void write_decision(std::ostream& os, const AuthDecision& d) {
  os << "outcome: " << to_string(d.outcome) << '\n';
  os << "stage: " << to_string(d.stage) << '\n';
  os << "candidate: " << d.candidate << '\n';
  os << "confidence: " << format_number(d.confidence) << '\n';
  os << "members_consulted: " << d.evidence.size() << '\n';
  for (const auto& e : d.evidence)
    os << "member: j=" << e.member << " predicted=" << e.predicted << " confidence=" << format_number(e.confidence)
       << " candidate_prob=" << format_number(e.candidate_prob) << " agrees=" << (e.agrees ? "yes" : "no") << '\n';
}

inline std::string decision_to_string(const AuthDecision& d) {
  std::ostringstream os;
  write_decision(os, d);
  return os.str();
}

}  // namespace vibhead
