#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "bds/heuristics.hpp"
#include "bds/lower_gpn.hpp"
#include "test_util.hpp"

using namespace bds;
using bds::testutil::make_instance;
using bds::testutil::random_instance;

namespace {

Window whole_window(const Instance& inst) {
  Window w;
  w.start = 0;
  w.jobs = Sequence::identity(inst.n_jobs).order;
  w.context.resize(static_cast<std::size_t>(inst.n_stages));
  for (int i = 0; i < inst.n_stages; ++i)
    w.context[static_cast<std::size_t>(i)]
        .assign(static_cast<std::size_t>(
                    inst.machines_per_stage[static_cast<std::size_t>(i)]),
                0.0);
  return w;
}

}  // namespace

TEST_CASE("[lower] hidden width must exceed the stage count") {
  CHECK_THROWS_AS(make_gpn(8, 8, 1), std::invalid_argument);
  CHECK_NOTHROW(make_gpn(2, 8, 1));
}

TEST_CASE("[lower] graph embedding symmetry and the single-job convention") {
  const GpnModel model = make_gpn(2, 8, 5);

  Matrix same(2, 3);
  same << 1.0, 1.0, 1.0, 2.0, 2.0, 2.0;
  const Matrix emb = graph_embed(model, same);
  CHECK((emb.col(0) - emb.col(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((emb.col(0) - emb.col(2)).cwiseAbs().maxCoeff() == 0.0);

  // One job: the neighbor term vanishes, leaving relu(W x + b).
  Matrix solo(2, 1);
  solo << 1.5, 0.5;
  const Matrix manual =
      (model.embedding.value("W") * solo).colwise() +
      model.embedding.value("b").col(0);
  CHECK((graph_embed(model, solo) - manual.cwiseMax(0.0)).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("[lower] graph embedding is permutation-equivariant") {
  const GpnModel model = make_gpn(3, 16, 7);
  Rng rng(3);
  Matrix ops(3, 5);
  for (Eigen::Index i = 0; i < ops.size(); ++i)
    ops.data()[i] = rng.uniform(0.1, 1.0);
  const Matrix emb = graph_embed(model, ops);

  const std::vector<int> perm = {4, 2, 0, 1, 3};
  Matrix shuffled(3, 5);
  for (int p = 0; p < 5; ++p)
    shuffled.col(p) = ops.col(perm[static_cast<std::size_t>(p)]);
  const Matrix emb_shuffled = graph_embed(model, shuffled);
  for (int p = 0; p < 5; ++p)
    CHECK((emb_shuffled.col(p) - emb.col(perm[static_cast<std::size_t>(p)]))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("[lower] decoding one job is certain") {
  const Instance inst = make_instance(1, {{2.0}, {1.0}});
  const GpnModel model = make_gpn(inst.n_stages, 8, 9);
  const WindowDecode out =
      decode_window(model, inst, whole_window(inst), DecodeMode::Greedy);
  CHECK(out.order == std::vector<int>{0});
  CHECK(out.logprob == doctest::Approx(0.0));
}

TEST_CASE("[lower] decodes are permutations and greedy is deterministic") {
  const Instance inst = random_instance(6, 2, 1, 88);
  const GpnModel model = make_gpn(inst.n_stages, 16, 11);
  const Window w = whole_window(inst);
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const WindowDecode out =
        decode_window(model, inst, w, DecodeMode::Sample, &rng);
    CAPTURE(trial);
    REQUIRE(Sequence(out.order).is_permutation_of(inst.n_jobs));
    REQUIRE(out.logprob <= 1e-12);
  }
  const WindowDecode a = decode_window(model, inst, w, DecodeMode::Greedy);
  const WindowDecode b = decode_window(model, inst, w, DecodeMode::Greedy);
  CHECK(a.order == b.order);
  CHECK(a.logprob == b.logprob);

  CHECK_THROWS_AS(decode_window(model, inst, w, DecodeMode::Sample, nullptr),
                  std::invalid_argument);
}

TEST_CASE("[lower] returned log-probability matches the forced-path recompute") {
  const Instance inst = random_instance(5, 3, 2, 21);
  const GpnModel model = make_gpn(inst.n_stages, 8, 13);
  const Window w = whole_window(inst);
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const WindowDecode out =
        decode_window(model, inst, w, DecodeMode::Sample, &rng);
    const double recomputed = window_logprob(model, inst, w, out.order);
    CAPTURE(trial);
    REQUIRE(out.logprob == doctest::Approx(recomputed).epsilon(1e-12));
  }
}

TEST_CASE("[lower] window rewards are contextual full-sequence reciprocals") {
  const Instance inst = make_instance(1, {{3.0, 1.0, 2.0}, {2.0, 4.0, 1.0}});
  const Sequence parent({0, 1, 2});
  Window w;
  w.start = 0;
  w.jobs = {0, 1, 2};

  // Identity proposal: reward is the reciprocal of the current makespan.
  CHECK(window_reward(inst, parent, w, {0, 1, 2}) == doctest::Approx(1.0 / 10.0));

  // Best of all six orders equals the reciprocal of the exhaustive optimum.
  const OracleResult oracle = brute_force_optimal(inst);
  Sequence perm = Sequence::identity(3);
  double best_reward = 0.0;
  do {
    best_reward =
        std::max(best_reward, window_reward(inst, parent, w, perm.order));
  } while (std::next_permutation(perm.order.begin(), perm.order.end()));
  CHECK(best_reward == doctest::Approx(1.0 / oracle.best_makespan));

  CHECK_THROWS_AS(window_reward(inst, parent, w, {0, 1, 1}),
                  std::invalid_argument);

  // A mid-sequence window keeps its prefix and suffix in place.
  const Sequence parent2({2, 0, 1});
  Window mid;
  mid.start = 1;
  mid.jobs = {0, 1};
  const Sequence spliced = splice_window(parent2, mid, {1, 0});
  CHECK(spliced.order == std::vector<int>{2, 1, 0});
}

TEST_CASE("[lower] proposals with equal makespan earn equal reward") {
  const Instance inst = make_instance(3, {{5.0, 7.0, 2.0}});  // enough machines
  const Sequence parent({0, 1, 2});
  Window w;
  w.start = 0;
  w.jobs = {0, 1, 2};
  CHECK(window_reward(inst, parent, w, {0, 1, 2}) ==
        doctest::Approx(window_reward(inst, parent, w, {2, 1, 0})));
}

TEST_CASE("[lower] centered rewards leave parameters untouched") {
  GpnModel model = make_gpn(2, 8, 15);
  model.baseline = 0.125;
  model.baseline_set = true;
  const Matrix before_w = model.embedding.value("W");
  const Matrix before_enc = model.encoder.value("W");
  const Matrix before_dec = model.decoder.value("W_ref");

  std::vector<GpnSample> batch;
  for (int b = 0; b < 4; ++b) {
    const Instance inst = random_instance(4, 2, 1, 600 + b);
    GpnSample s;
    s.ops = window_ops(inst, whole_window(inst));
    s.positions = {1, 0, 3, 2};
    s.reward = 0.125;  // equals the baseline
    batch.push_back(std::move(s));
  }
  GpnConfig cfg;
  reinforce_update(model, batch, cfg);
  CHECK((model.embedding.value("W") - before_w).cwiseAbs().maxCoeff() == 0.0);
  CHECK((model.encoder.value("W") - before_enc).cwiseAbs().maxCoeff() == 0.0);
  CHECK((model.decoder.value("W_ref") - before_dec).cwiseAbs().maxCoeff() ==
        0.0);

  CHECK_THROWS_AS(reinforce_update(model, {}, cfg), std::invalid_argument);
  batch[0].reward = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(reinforce_update(model, batch, cfg), std::invalid_argument);
}

namespace {

// Relu kinks break central differences; only run the check on seeds whose
// embedding pre-activations are comfortably signed.
bool kink_free(const GpnModel& model, const Matrix& ops, double margin) {
  const Eigen::Index n = ops.cols();
  Matrix nbr = Matrix::Zero(ops.rows(), n);
  if (n > 1) {
    const Vector total = ops.rowwise().sum();
    for (Eigen::Index p = 0; p < n; ++p)
      nbr.col(p) = (total - ops.col(p)) / static_cast<double>(n - 1);
  }
  const Matrix pre = (model.embedding.value("W") * ops +
                      model.embedding.value("U") * nbr)
                         .colwise() +
                     model.embedding.value("b").col(0);
  return pre.cwiseAbs().minCoeff() > margin;
}

void check_gpn_gradients(int window_jobs, const std::vector<int>& positions,
                         const std::vector<int>& positions_b) {
  bool checked = false;
  for (std::uint64_t seed = 17; seed < 60 && !checked; ++seed) {
    GpnModel model = make_gpn(2, 6, seed);
    const Instance inst =
        random_instance(window_jobs, 2, 1, 700 + seed);
    GpnSample s;
    s.ops = window_ops(inst, whole_window(inst));
    s.positions = positions;
    s.reward = 0.4;
    if (!kink_free(model, s.ops, 1e-3)) continue;
    std::vector<GpnSample> batch{s};
    if (!positions_b.empty()) {
      GpnSample s2 = s;
      s2.positions = positions_b;
      s2.reward = 0.1;
      batch.push_back(std::move(s2));
    }
    auto loss = [&](ParamStore&) {
      return gpn_loss_and_grad(model, batch, 0.2);
    };
    for (ParamStore* store :
         {&model.embedding, &model.encoder, &model.decoder}) {
      const GradCheckReport report = grad_check(*store, loss);
      CAPTURE(seed);
      CAPTURE(report.worst_tensor);
      CHECK(report.max_rel_err < 1e-4);
    }
    checked = true;
  }
  REQUIRE(checked);
}

}  // namespace

TEST_CASE("[lower] reinforce loss gradient matches finite differences") {
  check_gpn_gradients(3, {2, 0, 1}, {0, 2, 1});
}

TEST_CASE("[lower] reinforce on a wider window passes the gradient check") {
  check_gpn_gradients(4, {3, 1, 0, 2}, {});
}

TEST_CASE("[lower] identically seeded updates are bit-identical") {
  auto run = [] {
    GpnModel model = make_gpn(2, 8, 19);
    std::vector<GpnSample> batch;
    for (int b = 0; b < 3; ++b) {
      const Instance inst = random_instance(4, 2, 1, 300 + b);
      GpnSample s;
      s.ops = window_ops(inst, whole_window(inst));
      s.positions = {3, 1, 0, 2};
      s.reward = 0.2 + 0.1 * b;
      batch.push_back(std::move(s));
    }
    GpnConfig cfg;
    reinforce_update(model, batch, cfg);
    return model.encoder.value("W");
  };
  const Matrix a = run();
  const Matrix b = run();
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("[lower] decoder is window-size agnostic") {
  const GpnModel model = make_gpn(2, 8, 23);
  const Instance small = random_instance(5, 2, 1, 41);
  const Instance large = random_instance(8, 2, 1, 42);
  CHECK_NOTHROW(
      decode_window(model, small, whole_window(small), DecodeMode::Greedy));
  CHECK_NOTHROW(
      decode_window(model, large, whole_window(large), DecodeMode::Greedy));
}

TEST_CASE("[lower] train_lower runs and keeps its statistics finite") {
  GpnModel model = make_gpn(1, 8, 29);
  GpnConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 16;
  cfg.lr = 3e-3;
  cfg.seed = 31;
  std::uint64_t counter = 0;
  auto sampler = [&]() {
    const Instance inst = random_instance(3, 1, 1, 7000 + counter++);
    WindowTask task;
    task.inst = inst;
    task.parent = Sequence::identity(3);
    task.window = whole_window(inst);
    return task;
  };
  const TrainLowerStats stats = train_lower(sampler, cfg, model);
  REQUIRE(stats.mean_reward.size() == 40);
  // The reward trend on real tasks is reported, not asserted; here only
  // well-formedness is checked.
  for (double r : stats.mean_reward) CHECK(std::isfinite(r));
  for (double l : stats.loss) CHECK(std::isfinite(l));
  CHECK(model.baseline_set);
}

TEST_CASE("[lower] checkpoint round-trip is exact") {
  GpnModel model = make_gpn(3, 8, 37);
  model.baseline = 0.75;
  model.baseline_set = true;
  GpnConfig cfg;
  const GpnModel back = gpn_from_json(gpn_to_json(model, cfg));
  CHECK(back.hidden == model.hidden);
  CHECK(back.n_stages == 3);
  CHECK(back.baseline == 0.75);
  CHECK(back.baseline_set);
  CHECK((back.embedding.value("W") - model.embedding.value("W"))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((back.embedding.value("U") - model.embedding.value("U"))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((back.encoder.value("W") - model.encoder.value("W"))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((back.decoder.value("W_ref") - model.decoder.value("W_ref"))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((back.decoder.value("v") - model.decoder.value("v"))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}
