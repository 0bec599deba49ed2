#include "doctest.h"

#include "bds/instance.hpp"

using namespace bds;

namespace {

GenConfig small_uniform(int jobs, int stages, int machines, std::uint64_t seed) {
  GenConfig c;
  c.n_jobs = jobs;
  c.n_stages = stages;
  c.machines_per_stage.assign(static_cast<std::size_t>(stages), machines);
  c.distribution = Distribution::Uniform;
  c.dist_params = {0.0, 1.0};
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("[instance] degenerate uniform range pins every duration") {
  GenConfig c = small_uniform(2, 1, 1, 7);
  c.dist_params = {1.0, 1.0};
  const Instance inst = generate(c);
  CHECK(inst.op_times.rows() == 1);
  CHECK(inst.op_times.cols() == 2);
  CHECK(inst.op_times(0, 0) == 1.0);
  CHECK(inst.op_times(0, 1) == 1.0);
}

TEST_CASE("[instance] identical config yields bit-identical instances") {
  const GenConfig c = small_uniform(20, 3, 2, 42);
  const Instance a = generate(c);
  const Instance b = generate(c);
  CHECK(a == b);

  GenConfig chi = c;
  chi.distribution = Distribution::ChiSquare;
  chi.dist_params = {2.0};
  CHECK(generate(chi) == generate(chi));
}

TEST_CASE("[instance] law of large numbers on the uniform generator") {
  GenConfig c = small_uniform(1000, 5, 10, 1);
  const Instance inst = generate(c);
  const double mean = inst.op_times.mean();
  CHECK(mean > 0.47);
  CHECK(mean < 0.53);
}

TEST_CASE("[instance] chi-square empirical mean near its dof") {
  GenConfig c = small_uniform(1000, 5, 10, 3);
  c.distribution = Distribution::ChiSquare;
  c.dist_params = {2.0};
  const Instance inst = generate(c);
  const double mean = inst.op_times.mean();
  CHECK(mean == doctest::Approx(2.0).epsilon(0.05));

  c.dist_params = {5.0};
  const double mean5 = generate(c).op_times.mean();
  CHECK(mean5 == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("[instance] generated durations are strictly positive") {
  GenConfig c = small_uniform(200, 4, 2, 9);
  const Instance inst = generate(c);
  CHECK((inst.op_times.array() > 0.0).all());
  CHECK(validate_instance(inst).empty());
}

TEST_CASE("[instance] invalid generator configs are rejected") {
  GenConfig c = small_uniform(3, 2, 1, 1);
  c.dist_params = {1.0, 0.5};  // hi < lo
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
  c.dist_params = {0.0, 0.0};  // empty support
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
  c.distribution = Distribution::ChiSquare;
  c.dist_params = {-1.0};
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
  c = small_uniform(3, 2, 1, 1);
  c.machines_per_stage = {1, 0};
  CHECK_THROWS_AS(generate(c), std::invalid_argument);
}

TEST_CASE("[instance] serialize/parse round-trip is exact") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    GenConfig c = small_uniform(17, 4, 3, seed);
    const Instance inst = generate(c);
    const Instance back = parse_instance(serialize_instance(inst));
    CHECK(back == inst);
  }
}

TEST_CASE("[instance] parse reports malformed syntax and bad shapes") {
  CHECK_THROWS_WITH_AS(parse_instance("{ not json"),
                       doctest::Contains("parse error"), std::invalid_argument);

  // 3 declared stages, 2 rows.
  const std::string mismatch = R"({
    "name": "bad", "jobs": 2, "stages": 3, "machines": [1, 1, 1],
    "op_times": [[1.0, 2.0], [1.0, 2.0]]
  })";
  CHECK_THROWS_WITH_AS(parse_instance(mismatch),
                       doctest::Contains("validation error"),
                       std::invalid_argument);

  const std::string negative = R"({
    "name": "bad", "jobs": 2, "stages": 1, "machines": [1],
    "op_times": [[1.0, -2.0]]
  })";
  try {
    parse_instance(negative);
    FAIL("expected a validation error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("stage 0") != std::string::npos);
    CHECK(msg.find("job 1") != std::string::npos);
  }
}

TEST_CASE("[instance] validate_instance reports each violation") {
  Instance inst;
  inst.name = "x";
  inst.n_jobs = 2;
  inst.n_stages = 1;
  inst.machines_per_stage = {1};
  inst.op_times.resize(1, 2);
  inst.op_times << 1.0, 2.0;
  CHECK(validate_instance(inst).empty());

  inst.op_times(0, 1) = 0.0;
  CHECK(validate_instance(inst).issues.size() == 1);

  inst.op_times(0, 1) = 2.0;
  inst.machines_per_stage = {0};
  CHECK(validate_instance(inst).issues.size() == 1);
}

TEST_CASE("[instance] desk default matches the warehouse topology") {
  const GenConfig c = GenConfig::desk_default(100, 5);
  CHECK(c.n_stages == 5);
  CHECK(c.machines_per_stage == std::vector<int>(5, 10));
  const Instance inst = generate(c);
  CHECK(inst.n_jobs == 100);
}
