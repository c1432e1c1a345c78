#include <gtest/gtest.h>

#include <map>
#include <vector>

#include "auth_oracle.hpp"
#include "support.hpp"
#include "vibhead/auth.hpp"
#include "vibhead/error.hpp"

using namespace vibhead;
using vibhead::testing::StubClassifier;

namespace {

std::vector<UserId> others(const std::vector<UserId>& users, UserId skip) {
  std::vector<UserId> out;
  for (UserId u : users)
    if (u != skip) out.push_back(u);
  return out;
}

// Three users; probe 0 is set per test.
struct Three {
  std::vector<UserId> users{1, 2, 3};
  StubClassifier f0{users};
  std::map<UserId, StubClassifier> members;

  Three() {
    for (UserId u : users) members.emplace(u, StubClassifier(others(users, u)));
  }
  AuthenticationEnsemble<StubClassifier> ensemble(Thresholds t = {}) const { return {f0, members, t}; }
};

void expect_code(ErrorCode code, const auto& fn) {
  try {
    fn();
    ADD_FAILURE() << "no error thrown";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(StepOne, PicksMostProbableUser) {
  Three t;
  t.f0.set(0, {0.02, 0.95, 0.03});
  const auto r = step_one(t.ensemble(), 0);
  EXPECT_EQ(r.candidate, 2);
  EXPECT_DOUBLE_EQ(r.confidence, 0.95);
  EXPECT_TRUE(r.passed);
}

TEST(StepOne, UniformOverTenFails) {
  std::vector<UserId> users;
  for (UserId u = 1; u <= 10; ++u) users.push_back(u);
  StubClassifier f0(users);
  f0.set(0, std::vector<double>(10, 0.1));
  std::map<UserId, StubClassifier> members;
  for (UserId u : users) members.emplace(u, StubClassifier(others(users, u)));
  const AuthenticationEnsemble<StubClassifier> ens(f0, members, {0.9, 0.8});
  const auto r = step_one(ens, 0);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.candidate, 1);  // tie -> lowest id
}

TEST(StepOne, ThresholdIsInclusive) {
  Three t;
  t.f0.set(0, {0.05, 0.05, 0.9});
  EXPECT_TRUE(step_one(t.ensemble({0.9, 0.8}), 0).passed);
  EXPECT_FALSE(step_one(t.ensemble({std::nextafter(0.9, 1.0), 0.8}), 0).passed);
}

TEST(StepOne, TiesGoToLowestId) {
  Three t;
  t.f0.set(0, {0.1, 0.45, 0.45});
  EXPECT_EQ(step_one(t.ensemble(), 0).candidate, 2);
}

TEST(StepTwo, AllMembersAgreeAboveBeta) {
  Three t;
  t.members.at(2).set(0, {0.93, 0.07});  // labels {1, 3}
  t.members.at(3).set(0, {0.88, 0.12});  // labels {1, 2}
  t.members.at(1).set(0, {0.0, 1.0});    // not consulted for candidate 1
  const auto r = step_two(t.ensemble({0.9, 0.8}), 0, 1);
  EXPECT_TRUE(r.passed);
  ASSERT_EQ(r.evidence.size(), 2u);
  EXPECT_EQ(r.evidence[0].member, 2);
  EXPECT_DOUBLE_EQ(r.evidence[0].confidence, 0.93);
  EXPECT_EQ(r.evidence[1].member, 3);
  EXPECT_DOUBLE_EQ(r.evidence[1].candidate_prob, 0.88);
}

TEST(StepTwo, OneDisagreementFails) {
  Three t;
  t.members.at(2).set(0, {0.99, 0.01});
  t.members.at(3).set(0, {0.01, 0.99});  // confident, wrong user
  EXPECT_FALSE(step_two(t.ensemble(), 0, 1).passed);
}

TEST(StepTwo, ConfidenceBelowBetaFails) {
  Three t;
  t.members.at(2).set(0, {0.95, 0.05});
  t.members.at(3).set(0, {0.79, 0.21});
  EXPECT_FALSE(step_two(t.ensemble({0.9, 0.8}), 0, 1).passed);
}

TEST(StepTwo, ShortCircuitsUnlessExhaustive) {
  Three t;
  t.members.at(2).set(0, {0.1, 0.9});
  t.members.at(3).set(0, {0.99, 0.01});
  const auto ens = t.ensemble();
  EXPECT_EQ(step_two(ens, 0, 1).evidence.size(), 1u);
  const auto full = step_two(ens, 0, 1, true);
  EXPECT_EQ(full.evidence.size(), 2u);
  EXPECT_FALSE(full.passed);
}

TEST(StepTwo, UnknownCandidate) {
  Three t;
  expect_code(ErrorCode::UnknownCandidate, [&] { step_two(t.ensemble(), 0, 7); });
}

TEST(Authenticate, StepOneRejectConsultsNobody) {
  Three t;
  t.f0.set(0, {0.4, 0.3, 0.3});
  const auto d = authenticate(t.ensemble(), 0, true);
  EXPECT_FALSE(d.accepted());
  EXPECT_EQ(d.stage, Stage::StepOne);
  EXPECT_TRUE(d.evidence.empty());
  EXPECT_EQ(d.accepted_user(), kImpostor);
}

TEST(Authenticate, BothStepsPass) {
  Three t;
  t.f0.set(0, {0.01, 0.01, 0.98});
  t.members.at(1).set(0, {0.1, 0.9});  // labels {2, 3}
  t.members.at(2).set(0, {0.05, 0.95});  // labels {1, 3}
  const auto d = authenticate(t.ensemble(), 0);
  EXPECT_TRUE(d.accepted());
  EXPECT_EQ(d.stage, Stage::StepTwo);
  EXPECT_EQ(d.accepted_user(), 3);
}

TEST(Authenticate, StepTwoRejectRecordsStage) {
  Three t;
  t.f0.set(0, {0.01, 0.01, 0.98});
  t.members.at(1).set(0, {0.6, 0.4});
  t.members.at(2).set(0, {0.05, 0.95});
  const auto d = authenticate(t.ensemble(), 0);
  EXPECT_FALSE(d.accepted());
  EXPECT_EQ(d.stage, Stage::StepTwo);
}

TEST(Authenticate, MatchesBruteForceReference) {
  const auto tally = vibhead::testing::run_auth_oracle(1000, 2024);
  EXPECT_EQ(tally.mismatches, 0u);
  // Both branches must actually be exercised.
  EXPECT_GT(tally.accepts, 50u);
  EXPECT_GT(tally.step_two, tally.accepts);
  EXPECT_LT(tally.step_two, tally.trials);
}

TEST(Authenticate, PropertiesOverRandomStubs) {
  CounterRng rng(99, 1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 3);
    std::vector<UserId> users;
    for (std::size_t i = 0; i < n; ++i) users.push_back(static_cast<UserId>(i + 1));
    StubClassifier f0(users);
    f0.set(0, vibhead::testing::random_probs(rng, n, 0.9, 0.8));
    std::map<UserId, StubClassifier> members;
    for (UserId u : users) {
      StubClassifier m(others(users, u));
      auto p = vibhead::testing::random_probs(rng, n - 1, 0.9, 0.8);
      // Lean toward agreement so accepts happen.
      const auto rest = others(users, u);
      const UserId top = f0.predict(0).argmax();
      for (std::size_t k = 0; k < rest.size(); ++k)
        if (rest[k] == top && rng.uniform() < 0.7) p[k] += 5.0;
      double s = 0.0;
      for (double v : p) s += v;
      for (double& v : p) v /= s;
      m.set(0, std::move(p));
      members.emplace(u, std::move(m));
    }
    const double alpha_hi = rng.uniform(0.6, 0.99), alpha_lo = alpha_hi * rng.uniform(0.6, 1.0);
    const double beta_hi = rng.uniform(0.6, 0.99), beta_lo = beta_hi * rng.uniform(0.6, 1.0);
    const AuthenticationEnsemble<StubClassifier> strict(f0, members, {alpha_hi, beta_hi});
    const AuthenticationEnsemble<StubClassifier> loose_a(f0, members, {alpha_lo, beta_hi});
    const AuthenticationEnsemble<StubClassifier> loose_b(f0, members, {alpha_hi, beta_lo});

    const auto d = authenticate(strict, 0, true);
    if (d.accepted()) {
      EXPECT_TRUE(authenticate(loose_a, 0).accepted());
      EXPECT_TRUE(authenticate(loose_b, 0).accepted());
      for (const auto& e : d.evidence) EXPECT_EQ(e.predicted, d.candidate);
      EXPECT_EQ(d.evidence.size(), n - 1);
    }
    if (d.stage == Stage::StepOne) {
      EXPECT_TRUE(d.evidence.empty());
    }
    // Pure function of (ensemble, x).
    EXPECT_EQ(decision_to_string(authenticate(strict, 0, true)), decision_to_string(d));
  }
}

TEST(Ensemble, RejectsTwoUsers) {
  StubClassifier f0({1, 2});
  std::map<UserId, StubClassifier> members{{1, StubClassifier({2})}, {2, StubClassifier({1})}};
  expect_code(ErrorCode::TooFewUsers,
              [&] { AuthenticationEnsemble<StubClassifier>(f0, members); });
}

TEST(Ensemble, RejectsWrongMemberLabels) {
  Three t;
  t.members.at(2) = StubClassifier({1, 2});
  expect_code(ErrorCode::InvalidArgument, [&] { t.ensemble(); });
}

TEST(Ensemble, RejectsBadThresholds) {
  Three t;
  expect_code(ErrorCode::InvalidArgument, [&] { t.ensemble({1.0, 0.8}); });
  expect_code(ErrorCode::InvalidArgument, [&] { t.ensemble({0.9, 0.0}); });
}

namespace {

std::map<UserId, std::vector<FeaturePair>> tiny_per_user(std::size_t users) {
  std::map<UserId, std::vector<FeaturePair>> per_user;
  for (auto& f : vibhead::testing::synthetic_features(std::max<std::size_t>(users, 3), 0, 1)) {
    if (*f.user <= static_cast<UserId>(users)) per_user[*f.user].push_back(std::move(f));
  }
  return per_user;
}

TrainConfig one_epoch() {
  TrainConfig c;
  c.epochs = 1;
  return c;
}

}  // namespace

TEST(BuildEnsemble, ThreeUsersGiveFourModels) {
  const auto ens = build_ensemble(tiny_per_user(3), one_epoch());
  EXPECT_EQ(ens.global().labels(), (std::vector<UserId>{1, 2, 3}));
  EXPECT_EQ(ens.members().size(), 3u);
  EXPECT_EQ(ens.member(2).labels(), (std::vector<UserId>{1, 3}));
  EXPECT_EQ(ens.member(1).labels(), (std::vector<UserId>{2, 3}));
}

TEST(BuildEnsemble, TenUsersGiveNineClassMembers) {
  const auto ens = build_ensemble(tiny_per_user(10), one_epoch());
  EXPECT_EQ(ens.global().labels().size(), 10u);
  EXPECT_EQ(ens.members().size(), 10u);
  for (const auto& [id, m] : ens.members()) {
    EXPECT_EQ(m.labels().size(), 9u);
    EXPECT_EQ(std::count(m.labels().begin(), m.labels().end(), id), 0);
  }
}

TEST(BuildEnsemble, Errors) {
  expect_code(ErrorCode::TooFewUsers, [] { build_ensemble(tiny_per_user(2), one_epoch()); });
  auto per_user = tiny_per_user(3);
  per_user[3].clear();
  expect_code(ErrorCode::EmptyClass, [&] { build_ensemble(per_user, one_epoch()); });
}

TEST(Decision, TextRecord) {
  Three t;
  t.f0.set(0, {0.01, 0.01, 0.98});
  t.members.at(1).set(0, {0.1, 0.9});
  t.members.at(2).set(0, {0.05, 0.95});
  const std::string text = decision_to_string(authenticate(t.ensemble(), 0));
  EXPECT_NE(text.find("outcome: accept\n"), std::string::npos) << text;
  EXPECT_NE(text.find("stage: step_two\n"), std::string::npos);
  EXPECT_NE(text.find("candidate: 3\n"), std::string::npos);
  EXPECT_NE(text.find("members_consulted: 2\n"), std::string::npos);
  EXPECT_NE(text.find("member: j=1 predicted=3"), std::string::npos);
  EXPECT_NE(text.find("member: j=2 predicted=3"), std::string::npos);
}
