#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vibhead/auth.hpp"
#include "vibhead/error.hpp"
#include "vibhead/training.hpp"

namespace vibhead {

struct LabeledDecision {
  UserId truth = kImpostor;  // kImpostor for impostor attempts
  std::optional<Gesture> gesture;
  AuthDecision decision;
};

struct Rates {
  std::size_t legitimate = 0, impostor = 0;
  std::size_t correct_accepts = 0;      // legitimate accepted as themselves
  std::size_t false_rejects = 0;        // legitimate rejected or accepted as someone else
  std::size_t false_accepts = 0;        // impostor accepted
  std::size_t correct_classifications = 0;  // legitimate with F_0 argmax == truth

  std::optional<double> accuracy() const { return ratio(correct_accepts, legitimate); }
  std::optional<double> frr() const { return ratio(false_rejects, legitimate); }
  std::optional<double> far() const { return ratio(false_accepts, impostor); }
  std::optional<double> classification_accuracy() const { return ratio(correct_classifications, legitimate); }

  void add(const LabeledDecision& d) {
    if (d.truth == kImpostor) {
      ++impostor;
      if (d.decision.accepted()) ++false_accepts;
      return;
    }
    ++legitimate;
    if (d.decision.candidate == d.truth) ++correct_classifications;
    if (d.decision.accepted() && d.decision.candidate == d.truth)
      ++correct_accepts;
    else
      ++false_rejects;
  }

 private:
  static std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  }
};

struct EvalParameters {
  double clip_ms = 1000.0;
  double alpha = 0.9, beta = 0.8;
  std::size_t users = 0;
};

struct EvalReport {
  EvalParameters params;
  std::vector<UserId> users;
  /// Rows: true user, columns: F_0 candidate (users order).
  std::vector<std::vector<std::size_t>> classification_confusion;
  /// Index 0 = illegitimate, then users order. Rows: truth, columns: accepted identity.
  std::vector<std::vector<std::size_t>> auth_confusion;
  Rates overall;
  std::map<Gesture, Rates> per_gesture;
};

/// Accuracy, FAR and FRR over a set of attempts. Rates with an empty
/// denominator are reported as undefined.
inline EvalReport compute_metrics(std::span<const LabeledDecision> decisions, std::vector<UserId> users,
                                  EvalParameters params = {}) {
  if (decisions.empty()) fail(ErrorCode::EmptyInput, "no decisions to evaluate");
  std::sort(users.begin(), users.end());
  auto index_of = [&](UserId id) -> std::optional<std::size_t> {
    auto it = std::lower_bound(users.begin(), users.end(), id);
    if (it == users.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - users.begin());
  };
  const std::size_t n = users.size();
  EvalReport r;
  params.users = n;
  r.params = params;
  r.users = users;
  r.classification_confusion.assign(n, std::vector<std::size_t>(n, 0));
  r.auth_confusion.assign(n + 1, std::vector<std::size_t>(n + 1, 0));
  for (const auto& d : decisions) {
    std::size_t row = 0;
    if (d.truth != kImpostor) {
      const auto ti = index_of(d.truth);
      if (!ti) fail(ErrorCode::InvalidArgument, "decision for unregistered user " + std::to_string(d.truth));
      row = *ti + 1;
      if (const auto ci = index_of(d.decision.candidate)) ++r.classification_confusion[*ti][*ci];
    }
    std::size_t col = 0;
    if (d.decision.accepted()) {
      const auto ai = index_of(d.decision.candidate);
      if (!ai) fail(ErrorCode::InvalidArgument, "accepted unregistered user " + std::to_string(d.decision.candidate));
      col = *ai + 1;
    }
    ++r.auth_confusion[row][col];
    r.overall.add(d);
    if (d.gesture) r.per_gesture[*d.gesture].add(d);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Experiment protocol: stratified split of the registered users' samples,
// N+1 ensemble on the training part, decisions on the held-out legitimate
// samples plus every impostor sample.

struct ExperimentConfig {
  TrainConfig train;
  Thresholds thresholds;
  Architecture architecture;
  double train_fraction = 0.6;
  std::uint64_t split_seed = 7;
};

struct ExperimentResult {
  EvalReport report;
  std::vector<LabeledDecision> decisions;
};

/// Registered users are the `n_users` smallest ids present among `samples`;
/// samples of other users are ignored, impostor samples are test-only.
inline std::vector<UserId> registered_users(std::span<const FeaturePair> samples, std::size_t n_users) {
  std::vector<UserId> ids;
  for (const auto& s : samples)
    if (s.user && *s.user != kImpostor) ids.push_back(*s.user);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (n_users < 3 || n_users > ids.size())
    fail(ErrorCode::InsufficientUsers, "requested " + std::to_string(n_users) + " users, corpus has " + std::to_string(ids.size()));
  ids.resize(n_users);
  return ids;
}

/// Registered-user samples split per (user, gesture) stratum; every impostor
/// sample is held out for testing.
struct Partition {
  std::vector<UserId> users;
  std::map<UserId, std::vector<FeaturePair>> train;
  std::vector<FeaturePair> test;
  std::vector<FeaturePair> impostors;
};

inline Partition partition_samples(std::span<const FeaturePair> samples, std::vector<UserId> users,
                                   double train_fraction, std::uint64_t split_seed) {
  std::sort(users.begin(), users.end());
  Partition p;
  p.users = users;
  std::vector<FeaturePair> legit;
  for (const auto& s : samples) {
    if (!s.user) continue;
    if (*s.user == kImpostor)
      p.impostors.push_back(s);
    else if (std::binary_search(users.begin(), users.end(), *s.user))
      legit.push_back(s);
  }
  const auto split = split_dataset(strata_of(legit), train_fraction, split_seed);
  for (std::size_t i : split.train) p.train[*legit[i].user].push_back(legit[i]);
  for (std::size_t i : split.test) p.test.push_back(legit[i]);
  return p;
}

/// Authenticates every held-out sample of `p` against `ensemble`.
template <typename Model>
ExperimentResult evaluate_partition(const AuthenticationEnsemble<Model>& ensemble, const Partition& p, double clip_ms) {
  ExperimentResult out;
  for (const auto& x : p.test) out.decisions.push_back({*x.user, x.gesture, authenticate(ensemble, x)});
  for (const auto& x : p.impostors) out.decisions.push_back({kImpostor, x.gesture, authenticate(ensemble, x)});
  const auto& t = ensemble.thresholds();
  out.report = compute_metrics(out.decisions, p.users, {clip_ms, t.alpha, t.beta, p.users.size()});
  return out;
}

inline ExperimentResult run_experiment(std::span<const FeaturePair> samples, std::size_t n_users,
                                       const ExperimentConfig& cfg) {
  const auto p = partition_samples(samples, registered_users(samples, n_users), cfg.train_fraction, cfg.split_seed);
  const auto ensemble = build_ensemble(p.train, cfg.train, cfg.thresholds, cfg.architecture);
  const double clip_ms = samples.empty() ? 0.0 : samples.front().primitive.duration_ms;
  return evaluate_partition(ensemble, p, clip_ms);
}

/// One report per (T, N) cell, T-major. `features_for` maps a clip length to
/// the labeled feature set for that length.
inline std::vector<EvalReport> sweep(std::span<const double> clip_lengths_ms, std::span<const std::size_t> user_counts,
                                     const std::function<std::vector<FeaturePair>(double)>& features_for,
                                     const ExperimentConfig& cfg,
                                     const std::function<void(const EvalReport&)>& on_report = {}) {
  std::vector<EvalReport> reports;
  for (double t : clip_lengths_ms) {
    const auto samples = features_for(t);
    for (std::size_t n : user_counts) {
      reports.push_back(run_experiment(samples, n, cfg).report);
      reports.back().params.clip_ms = t;
      if (on_report) on_report(reports.back());
    }
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline std::string rate_text(const std::optional<double>& v) { return v ? format_number(*v) : "undefined"; }

inline void write_rates(std::ostream& os, const std::string& prefix, const Rates& r) {
  os << prefix << "legitimate_attempts: " << r.legitimate << '\n';
  os << prefix << "impostor_attempts: " << r.impostor << '\n';
  os << prefix << "classification_accuracy: " << rate_text(r.classification_accuracy()) << '\n';
  os << prefix << "accuracy: " << rate_text(r.accuracy()) << '\n';
  os << prefix << "far: " << rate_text(r.far()) << '\n';
  os << prefix << "frr: " << rate_text(r.frr()) << '\n';
}

}  // namespace detail

inline void write_report(std::ostream& os, const EvalReport& r) {
  os << "clip_ms: " << format_number(r.params.clip_ms) << '\n';
  os << "users: " << r.params.users << '\n';
  os << "alpha: " << format_number(r.params.alpha) << '\n';
  os << "beta: " << format_number(r.params.beta) << '\n';
  os << "user_ids:";
  for (UserId u : r.users) os << ' ' << u;
  os << '\n';
  detail::write_rates(os, "", r.overall);
  os << "classification_confusion:\n";
  for (const auto& row : r.classification_confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? " " : "  ") << row[j];
    os << '\n';
  }
  os << "auth_confusion:\n";
  for (const auto& row : r.auth_confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? " " : "  ") << row[j];
    os << '\n';
  }
  for (const auto& [g, rates] : r.per_gesture) {
    os << "gesture: " << to_string(g) << '\n';
    detail::write_rates(os, "  ", rates);
  }
}

inline void write_summary_header(std::ostream& os) { os << "T_ms,N,gesture,accuracy,FAR,FRR\n"; }

/// Flat rows: one "all" row then one per gesture.
inline void write_summary_rows(std::ostream& os, const EvalReport& r) {
  auto row = [&](std::string_view gesture, const Rates& rates) {
    os << format_number(r.params.clip_ms) << ',' << r.params.users << ',' << gesture << ','
       << detail::rate_text(rates.accuracy()) << ',' << detail::rate_text(rates.far()) << ','
       << detail::rate_text(rates.frr()) << '\n';
  };
  row("all", r.overall);
  for (const auto& [g, rates] : r.per_gesture) row(to_string(g), rates);
}

}  // namespace vibhead
