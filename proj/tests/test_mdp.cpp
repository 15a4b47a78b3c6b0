#include "qvigeom/mdp.hpp"
#include "qvigeom/solver.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace qvigeom;
using qvigeom::testing::Gen;

TEST(ValidateMdp, AcceptsToyExample) {
  const Mdp mdp = toy3x2();
  EXPECT_EQ(mdp.num_states(), 3u);
  EXPECT_EQ(mdp.num_actions(), 2u);
  EXPECT_DOUBLE_EQ(mdp.gamma(), 0.95);
}

TEST(ValidateMdp, AcceptsDegenerateSingleStateSingleAction) {
  MdpSpec spec{"one", 0.5, 1, 1, {Matrix::Ones(1, 1)}, Matrix::Zero(1, 1)};
  EXPECT_NO_THROW(Mdp::validate(spec));
}

TEST(ValidateMdp, RejectsBadRowSumWithIndices) {
  MdpSpec spec = toy3x2_spec();
  spec.transitions[1](2, 0) = 0.2;  // row (0.2, 0.3, 0.4) sums to 0.9
  try {
    Mdp::validate(spec);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row sum 0.9"), std::string::npos) << msg;
    EXPECT_NE(msg.find("a=2, s=3"), std::string::npos) << msg;
  }
}

TEST(ValidateMdp, RejectsTwoEntryRowSummingToPointNine) {
  MdpSpec spec{"bad", 0.9, 2, 1, {Matrix(2, 2)}, Matrix::Zero(2, 1)};
  spec.transitions[0] << 0.5, 0.4, 0.5, 0.5;
  EXPECT_THROW(Mdp::validate(spec), ValidationError);
}

TEST(ValidateMdp, RejectsNegativeProbabilityGammaAndShape) {
  MdpSpec neg = toy3x2_spec();
  neg.transitions[0](0, 0) = -0.1;
  neg.transitions[0](0, 1) = 0.4;
  neg.transitions[0](0, 2) = 0.7;
  EXPECT_THROW(Mdp::validate(neg), ValidationError);

  MdpSpec g = toy3x2_spec();
  g.gamma = 1.0;
  EXPECT_THROW(Mdp::validate(g), ValidationError);
  g.gamma = 0.0;
  EXPECT_THROW(Mdp::validate(g), ValidationError);

  MdpSpec shape = toy3x2_spec();
  shape.rewards = Matrix::Zero(2, 2);
  EXPECT_THROW(Mdp::validate(shape), ValidationError);
  shape = toy3x2_spec();
  shape.transitions.pop_back();
  EXPECT_THROW(Mdp::validate(shape), ValidationError);
}

TEST(ValidateMdp, RenormalizesOnlyWhenAsked) {
  MdpSpec spec = toy3x2_spec();
  spec.transitions[0].row(0) << 0.7, 0.2, 0.2;
  EXPECT_THROW(Mdp::validate(spec), ValidationError);
  const Mdp fixed = Mdp::validate(spec, true);
  EXPECT_NEAR(fixed.transition(0).row(0).sum(), 1.0, 1e-15);
}

TEST(StackTransitions, ToyBlocksAndRowSums) {
  const Matrix p = stack_transitions(toy3x2());
  ASSERT_EQ(p.rows(), 6);
  ASSERT_EQ(p.cols(), 3);
  EXPECT_EQ(p.row(0), (Eigen::RowVector3d() << 0.7, 0.2, 0.1).finished());
  EXPECT_EQ(p.topRows(3), toy3x2_spec().transitions[0]);
  EXPECT_EQ(p.bottomRows(3), toy3x2_spec().transitions[1]);
}

TEST(StackTransitions, SingleStateIsOne) {
  MdpSpec spec{"one", 0.5, 1, 1, {Matrix::Ones(1, 1)}, Matrix::Zero(1, 1)};
  EXPECT_EQ(stack_transitions(Mdp::validate(spec)), Matrix::Ones(1, 1));
}

TEST(StackTransitions, RandomRowsSumToOne) {
  Gen gen(qvigeom::testing::kMasterSeed);
  for (int i = 0; i < 50; ++i) {
    const Mdp mdp = gen.mdp(1 + gen.index(6), 1 + gen.index(4));
    const Matrix p = stack_transitions(mdp);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      double sum = 0.0;
      for (Eigen::Index c = 0; c < p.cols(); ++c) sum += p(r, c);
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(ActionTransitionMatrix, OptimalPolicySelectsFirstBlock) {
  const Matrix pi = action_transition_matrix(DetPolicy{{0, 0, 0}}, 2);
  Matrix expected = Matrix::Zero(3, 6);
  expected.leftCols(3) = Matrix::Identity(3, 3);
  EXPECT_EQ(pi, expected);
}

TEST(ActionTransitionMatrix, UniformPolicyHasTwoHalves) {
  const Matrix pi = action_transition_matrix(StochPolicy{Matrix::Constant(3, 2, 0.5)});
  for (Eigen::Index s = 0; s < 3; ++s) {
    EXPECT_EQ((pi.row(s).array() == 0.5).count(), 2);
    EXPECT_DOUBLE_EQ(pi(s, s), 0.5);
    EXPECT_DOUBLE_EQ(pi(s, 3 + s), 0.5);
  }
}

TEST(ActionTransitionMatrix, RowStochasticWithSupportOnOwnState) {
  Gen gen(qvigeom::testing::kMasterSeed + 1);
  for (int i = 0; i < 50; ++i) {
    const std::size_t ns = 1 + gen.index(5), na = 1 + gen.index(4);
    const Matrix pi = action_transition_matrix(gen.stoch_policy(ns, na));
    const Vector ones = pi * Vector::Ones(pi.cols());
    EXPECT_LE((ones - Vector::Ones(pi.rows())).lpNorm<Eigen::Infinity>(), 1e-12);
    for (std::size_t s = 0; s < ns; ++s)
      for (Eigen::Index col = 0; col < pi.cols(); ++col)
        if (static_cast<std::size_t>(col) % ns != s) {
          EXPECT_EQ(pi(static_cast<Eigen::Index>(s), col), 0.0);
        }
  }
}

TEST(PolicyKernel, DetMatchesGenericProduct) {
  Gen gen(qvigeom::testing::kMasterSeed + 2);
  for (int i = 0; i < 30; ++i) {
    const std::size_t ns = 1 + gen.index(5), na = 1 + gen.index(3);
    const Mdp mdp = gen.mdp(ns, na);
    const DetPolicy pi = gen.policy(ns, na);
    const Matrix fast = policy_kernel(mdp, pi);
    const Matrix generic = mdp.stacked() * action_transition_matrix(pi, na);
    EXPECT_LE((fast - generic).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(PolicyKernel, RowStochasticAndInfNormGamma) {
  Gen gen(qvigeom::testing::kMasterSeed + 3);
  for (int i = 0; i < 20; ++i) {
    const Mdp mdp = gen.mdp(1 + gen.index(4), 1 + gen.index(3));
    for (const auto& pi : enumerate_policies(mdp)) {
      const Matrix b = policy_kernel(mdp, pi);
      const Vector rs = b.rowwise().sum();
      EXPECT_NEAR(rs.maxCoeff(), 1.0, 1e-12);
      EXPECT_NEAR(rs.minCoeff(), 1.0, 1e-12);
      const double inf_norm = (mdp.gamma() * b).cwiseAbs().rowwise().sum().maxCoeff();
      EXPECT_NEAR(inf_norm, mdp.gamma(), 1e-12);
    }
  }
}

TEST(PolicyKernel, SingleStateSingleAction) {
  MdpSpec spec{"one", 0.5, 1, 1, {Matrix::Ones(1, 1)}, Matrix::Zero(1, 1)};
  EXPECT_EQ(policy_kernel(Mdp::validate(spec), DetPolicy{{0}}), Matrix::Ones(1, 1));
}

TEST(GreedyPolicy, TiesGoToLowestIndex) {
  const QVector q = QVector::Constant(6, 2.5);
  EXPECT_EQ(greedy_policy(q, 3, 2).actions, (std::vector<std::size_t>{0, 0, 0}));
}

TEST(GreedyPolicy, TieToleranceWidensTies) {
  QVector q(4);
  q << 1.0, 2.0, 1.05, 1.9;  // s=0: (1.0, 1.05); s=1: (2.0, 1.9)
  EXPECT_EQ(greedy_policy(q, 2, 2, 0.0).actions, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(greedy_policy(q, 2, 2, 0.1).actions, (std::vector<std::size_t>{0, 0}));
}

TEST(GreedyPolicy, ShiftInvariance) {
  Gen gen(qvigeom::testing::kMasterSeed + 4);
  for (int i = 0; i < 200; ++i) {
    const std::size_t ns = 1 + gen.index(5), na = 1 + gen.index(4);
    const QVector q = gen.vector(static_cast<Eigen::Index>(ns * na), 3.0);
    // Shifts by powers of two are exact in floating point.
    const double c = std::ldexp(1.0, static_cast<int>(gen.index(8))) * (gen.uniform() < 0.5 ? -1.0 : 1.0);
    EXPECT_EQ(greedy_policy(q, ns, na).actions, greedy_policy((q.array() + c).matrix(), ns, na).actions);
  }
}

TEST(GreedyPolicy, ToyOptimumAndShift) {
  const QVector qs = toy3x2_printed_qstar();
  EXPECT_EQ(greedy_policy(qs, 3, 2).actions, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_EQ(greedy_policy((qs.array() + 7.3).matrix(), 3, 2).actions, (std::vector<std::size_t>{0, 0, 0}));
}

TEST(EnumeratePolicies, ToyHasEightInLexicographicOrder) {
  const auto all = enumerate_policies(toy3x2());
  ASSERT_EQ(all.size(), 8u);
  EXPECT_EQ(all.front().actions, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_EQ(all[1].actions, (std::vector<std::size_t>{0, 0, 1}));
  EXPECT_EQ(all.back().actions, (std::vector<std::size_t>{1, 1, 1}));
  std::set<std::vector<std::size_t>> unique;
  for (const auto& p : all) unique.insert(p.actions);
  EXPECT_EQ(unique.size(), 8u);
}

TEST(EnumeratePolicies, SingleStateThreeActions) {
  MdpSpec spec{"s1a3", 0.5, 1, 3, {Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1)}, Matrix::Zero(1, 3)};
  EXPECT_EQ(enumerate_policies(Mdp::validate(spec)).size(), 3u);
}

TEST(EnumeratePolicies, CapExceeded) {
  Gen gen(qvigeom::testing::kMasterSeed + 5);
  const Mdp big = gen.mdp(20, 4);
  try {
    enumerate_policies(big, 1e6);
    FAIL();
  } catch (const CapExceeded& e) {
    EXPECT_DOUBLE_EQ(e.count(), std::pow(4.0, 20.0));
    EXPECT_NE(std::string(e.what()).find("exceeds cap"), std::string::npos);
  }
}

TEST(QIndex, BijectionAndKroneckerIndexing) {
  for (std::size_t ns = 1; ns <= 5; ++ns) {
    for (std::size_t na = 1; na <= 4; ++na) {
      std::vector<int> hit(ns * na, 0);
      for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a) ++hit[q_index(s, a, ns)];
      EXPECT_TRUE(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));
    }
  }
  // (e_a (x) e_s)^T Q picks values[index(s,a)].
  const std::size_t ns = 3, na = 2;
  const QVector q = toy3x2_printed_qstar();
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t a = 0; a < na; ++a) {
      Vector ea = Vector::Zero(na), es = Vector::Zero(ns);
      ea(static_cast<Eigen::Index>(a)) = 1.0;
      es(static_cast<Eigen::Index>(s)) = 1.0;
      Vector kron(ns * na);
      for (std::size_t i = 0; i < na; ++i) kron.segment(static_cast<Eigen::Index>(i * ns), ns) = ea(i) * es;
      EXPECT_EQ(kron.dot(q), q(static_cast<Eigen::Index>(q_index(s, a, ns))));
    }
}
