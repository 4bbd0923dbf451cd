#include <cmath>

#include "doctest.h"
#include "gpc/training.hpp"
#include "test_util.hpp"

using namespace gpc;
using namespace gpc::testutil;

namespace {

struct Fixture {
  PromptModel model;
  SplitDataset data;
};

Fixture toy_fixture(UpdateRule rule = UpdateRule::kGpc, std::size_t prompt_len = 2,
                    std::uint64_t seed = 91) {
  BackboneConfig config;
  config.vocab_size = 12;
  config.hidden_dim = 4;
  config.num_layers = 2;
  config.num_heads = 2;
  config.ffn_dim = 8;
  config.max_seq_len = 16;

  Rng rng(seed);
  auto backbone = init_backbone(config, rng);
  freeze_all(backbone);

  TaskSpec task;
  task.kind = TaskKind::kSyntheticPattern;
  task.vocab_size = 12;
  task.seq_len = 6;
  task.train_size = 32;
  task.dev_size = 16;
  task.seed = seed + 1;

  Fixture f{assemble_model(std::move(backbone), rule, ActivationKind::kTanh, prompt_len, 2, rng),
            generate_synthetic_task(task)};
  return f;
}

std::vector<std::size_t> first_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("optimizer config validation") {
  OptimizerConfig ok;
  CHECK_NOTHROW(ok.validate());

  OptimizerConfig bad = ok;
  bad.lr = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.beta2 = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.eps = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.clip_norm = -2.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("first and second moment estimates match the closed form") {
  auto w = Tensor::from({1}, {1.0});
  w->requires_grad = true;
  OptimizerConfig config;
  config.lr = 0.1;
  Adam opt({w}, config);

  // With a constant gradient the bias-corrected moments are exactly g and g^2,
  // so each step moves by lr * g / (|g| + eps).
  w->ensure_grad();
  w->grad[0] = 2.0;
  opt.step();
  const double per_step = 0.1 * 2.0 / (2.0 + 1e-8);
  CHECK(w->values[0] == doctest::Approx(1.0 - per_step).epsilon(1e-12));
  CHECK(opt.steps_taken() == 1);
  CHECK_FALSE(w->has_grad());  // gradients are consumed by the step

  w->ensure_grad();
  w->grad[0] = 2.0;
  opt.step();
  CHECK(w->values[0] == doctest::Approx(1.0 - 2.0 * per_step).epsilon(1e-11));
}

TEST_CASE("a missing or zero gradient moves nothing") {
  auto w = Tensor::from({2}, {0.25, -0.75});
  w->requires_grad = true;
  Adam opt({w}, {});
  opt.step();  // no gradient at all
  CHECK(w->values == std::vector<double>{0.25, -0.75});
}

TEST_CASE("zero learning rate freezes the values while still counting steps") {
  auto w = Tensor::from({2}, {0.5, -0.5});
  w->requires_grad = true;
  OptimizerConfig config;
  config.lr = 0.0;
  Adam opt({w}, config);
  w->ensure_grad();
  w->grad = {1.0, -3.0};
  opt.step();
  CHECK(w->values == std::vector<double>{0.5, -0.5});
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("the optimizer refuses frozen tensors") {
  auto frozen = Tensor::from({1}, {1.0});
  CHECK_THROWS_AS(Adam({frozen}, {}), ConfigError);
}

TEST_CASE("global-norm clipping equals pre-scaling the gradients") {
  // Gradients [3, 4] have norm 5; clip_norm 2.5 scales by exactly 0.5.
  auto make = [](double v0, double v1) {
    auto a = Tensor::from({1}, {v0});
    auto b = Tensor::from({1}, {v1});
    a->requires_grad = b->requires_grad = true;
    return std::pair{a, b};
  };
  OptimizerConfig clipped;
  clipped.clip_norm = 2.5;
  auto [a1, b1] = make(1.0, -2.0);
  Adam opt1({a1, b1}, clipped);
  a1->ensure_grad();
  a1->grad[0] = 3.0;
  b1->ensure_grad();
  b1->grad[0] = 4.0;
  opt1.step();

  auto [a2, b2] = make(1.0, -2.0);
  Adam opt2({a2, b2}, {});
  a2->ensure_grad();
  a2->grad[0] = 1.5;
  b2->ensure_grad();
  b2->grad[0] = 2.0;
  opt2.step();

  CHECK(a1->values[0] == a2->values[0]);
  CHECK(b1->values[0] == b2->values[0]);

  // Below the threshold nothing is rescaled.
  auto [a3, b3] = make(1.0, -2.0);
  Adam opt3({a3, b3}, clipped);
  a3->ensure_grad();
  a3->grad[0] = 0.3;
  b3->ensure_grad();
  b3->grad[0] = 0.4;
  opt3.step();
  auto [a4, b4] = make(1.0, -2.0);
  Adam opt4({a4, b4}, {});
  a4->ensure_grad();
  a4->grad[0] = 0.3;
  b4->ensure_grad();
  b4->grad[0] = 0.4;
  opt4.step();
  CHECK(a3->values[0] == a4->values[0]);
  CHECK(b3->values[0] == b4->values[0]);
}

TEST_CASE("train_step returns the pre-update loss and lowers it over time") {
  auto f = toy_fixture();
  auto batch = first_indices(8);

  double expected_initial;
  {
    Tape tape;
    expected_initial = batch_loss(tape, f.model, f.data.train, batch)->values[0];
  }

  OptimizerConfig config;
  config.lr = 0.01;
  Adam opt(f.model.tuned_params(), config);
  double first = train_step(f.model, f.data.train, batch, opt);
  CHECK(first == expected_initial);

  double last = first;
  for (int i = 0; i < 40; ++i) last = train_step(f.model, f.data.train, batch, opt);
  CHECK(last < first);
}

TEST_CASE("training never touches the frozen backbone") {
  auto f = toy_fixture();
  const auto before = checksum_params(f.model.backbone.params());
  OptimizerConfig config;
  config.lr = 0.05;
  Adam opt(f.model.tuned_params(), config);
  auto batch = first_indices(8);
  for (int i = 0; i < 10; ++i) train_step(f.model, f.data.train, batch, opt);
  CHECK(checksum_params(f.model.backbone.params()) == before);
}

TEST_CASE("training is bit-for-bit deterministic") {
  auto a = toy_fixture();
  auto b = toy_fixture();
  OptimizerConfig config;
  config.lr = 0.01;
  Adam opt_a(a.model.tuned_params(), config);
  Adam opt_b(b.model.tuned_params(), config);
  auto batch = first_indices(8);
  for (int i = 0; i < 5; ++i) {
    double la = train_step(a.model, a.data.train, batch, opt_a);
    double lb = train_step(b.model, b.data.train, batch, opt_b);
    CHECK(la == lb);
  }
  CHECK(checksum_params(a.model.tuned_params()) == checksum_params(b.model.tuned_params()));
}

TEST_CASE("a non-finite loss raises NumericError before any update") {
  auto f = toy_fixture();
  f.model.head.b->values[0] = std::nan("");
  auto tuned = f.model.tuned_params();
  Adam opt(tuned, {});
  const auto prompt_before = f.model.prompt->values;
  CHECK_THROWS_AS(train_step(f.model, f.data.train, first_indices(4), opt), NumericError);
  CHECK(f.model.prompt->values == prompt_before);
  CHECK(opt.steps_taken() == 0);
}

TEST_CASE("train_step reports per-layer prompt gradient norms from its own backward") {
  auto f = toy_fixture();
  OptimizerConfig config;
  config.lr = 0.01;
  Adam opt(f.model.tuned_params(), config);
  std::vector<double> norms;
  train_step(f.model, f.data.train, first_indices(4), opt, &norms);
  REQUIRE(norms.size() == f.model.backbone.config.num_layers);
  for (double n : norms) {
    CHECK(std::isfinite(n));
    CHECK(n > 0.0);
  }
}

TEST_CASE("measured norms agree with train_step and leave no gradients behind") {
  auto f = toy_fixture();
  auto batch = first_indices(4);
  auto measured = measure_prompt_gradient_norms(f.model, f.data.train, batch);
  for (const auto& p : f.model.tuned_params()) CHECK_FALSE(p->has_grad());

  OptimizerConfig config;
  config.lr = 0.01;
  Adam opt(f.model.tuned_params(), config);
  std::vector<double> from_step;
  train_step(f.model, f.data.train, batch, opt, &from_step);
  REQUIRE(measured.size() == from_step.size());
  for (std::size_t t = 0; t < measured.size(); ++t) CHECK(measured[t] == from_step[t]);
}

TEST_CASE("an empty prompt yields all-zero norms") {
  auto f = toy_fixture(UpdateRule::kGpc, 0);
  auto norms = measure_prompt_gradient_norms(f.model, f.data.train, first_indices(4));
  REQUIRE(norms.size() == 2);
  CHECK(norms[0] == 0.0);
  CHECK(norms[1] == 0.0);
}

TEST_CASE("the first-layer norm is a true directional derivative") {
  auto f = toy_fixture();
  std::vector<std::size_t> batch = {0};  // single example so the leaf gradient is the layer-0 one

  // Recover the layer-0 gradient direction by hand.
  std::vector<double> direction;
  double norm = 0.0;
  {
    Tape tape;
    std::vector<std::vector<LayerTrace>> traces;
    auto loss = batch_loss(tape, f.model, f.data.train, batch, &traces);
    tape.backward(loss);
    const auto& p0 = traces[0][0].p_prev;
    REQUIRE(p0->has_grad());
    direction = p0->grad;
    for (double g : direction) norm += g * g;
    norm = std::sqrt(norm);
    for (const auto& p : f.model.tuned_params()) p->drop_grad();
  }
  REQUIRE(norm > 0.0);
  for (auto& d : direction) d /= norm;

  auto norms = measure_prompt_gradient_norms(f.model, f.data.train, batch);
  CHECK(norms[0] == doctest::Approx(norm).epsilon(1e-12));

  // Nudging the prompt along the unit gradient direction must change the loss
  // at the rate the norm claims.
  const double h = 1e-5;
  auto eval = [&]() {
    Tape tape;
    return batch_loss(tape, f.model, f.data.train, batch)->values[0];
  };
  auto saved = f.model.prompt->values;
  for (std::size_t i = 0; i < saved.size(); ++i) f.model.prompt->values[i] = saved[i] + h * direction[i];
  double up = eval();
  for (std::size_t i = 0; i < saved.size(); ++i) f.model.prompt->values[i] = saved[i] - h * direction[i];
  double down = eval();
  f.model.prompt->values = saved;
  const double directional = (up - down) / (2.0 * h);
  CHECK(directional == doctest::Approx(norm).epsilon(1e-3));
}

TEST_CASE("grad_check passes on a tiny model and counts every scalar") {
  auto f = toy_fixture();
  auto report = grad_check(f.model, f.data.train, first_indices(3));
  std::size_t expected = 0;
  for (const auto& [name, p] : f.model.named_tuned_params()) expected += p->size();
  CHECK(report.checked_scalars == expected);
  CAPTURE(report.worst_param);
  CAPTURE(report.max_rel_error);
  CHECK(report.passed);
  CHECK(report.non_finite.empty());
  for (const auto& p : f.model.tuned_params()) CHECK_FALSE(p->has_grad());
}

TEST_CASE("grad_check refuses oversized models") {
  auto f = toy_fixture();
  CHECK_THROWS_AS(grad_check(f.model, f.data.train, first_indices(2), 1e-4, 1e-4, 10),
                  ConfigError);
}

TEST_CASE("the finite-difference harness detects a wrong backward") {
  auto x = Tensor::from({2}, {0.4, -0.7});
  x->requires_grad = true;
  std::vector<std::pair<std::string, TensorPtr>> params = {{"x", x}};
  auto fd = max_fd_rel_error(params, [&](Tape& tape) {
    // Forward computes sum(x^3) but the backward lies (2x instead of 3x^2).
    std::vector<double> cubed(x->size());
    for (std::size_t i = 0; i < x->size(); ++i) cubed[i] = x->values[i] * x->values[i] * x->values[i];
    auto y = tape.custom({x}, x->shape, cubed, [](Tensor& out, const std::vector<TensorPtr>& in) {
      in[0]->ensure_grad();
      for (std::size_t i = 0; i < in[0]->size(); ++i)
        in[0]->grad[i] += 2.0 * in[0]->values[i] * out.grad[i];
    });
    return tape.sum(y);
  });
  CHECK(fd.max_rel_error > 1e-2);
}

TEST_CASE("parameter checksums are order- and content-sensitive") {
  auto a = Tensor::from({2}, {1.0, 2.0});
  auto b = Tensor::from({1}, {3.0});
  const auto base = checksum_params({a, b});
  CHECK(checksum_params({a, b}) == base);
  CHECK(checksum_params({b, a}) != base);

  auto a2 = Tensor::from({2}, {1.0, 2.0});
  auto b2 = Tensor::from({1}, {3.0});
  CHECK(checksum_params({a2, b2}) == base);  // value-based, not identity-based
  b2->values[0] = 3.0000000001;
  CHECK(checksum_params({a2, b2}) != base);

  // The length prefix keeps [1,2|3] and [1|2,3] apart.
  auto c = Tensor::from({1}, {1.0});
  auto d = Tensor::from({2}, {2.0, 3.0});
  CHECK(checksum_params({c, d}) != base);
}

TEST_SUITE_END();
