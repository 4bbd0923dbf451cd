#include "doctest.h"
#include "gpc/head.hpp"
#include "test_util.hpp"

using namespace gpc;
using namespace gpc::testutil;

namespace {

ModelInput state_with_cls(TensorPtr prompt, TensorPtr tokens) {
  return ModelInput{std::move(prompt), std::move(tokens)};
}

}  // namespace

TEST_SUITE_BEGIN("head");

TEST_CASE("init is deterministic with zero bias and exact parameter count") {
  Rng a(33), b(33);
  auto h1 = init_head(6, 3, a);
  auto h2 = init_head(6, 3, b);
  CHECK(h1.w->values == h2.w->values);
  for (double v : h1.b->values) CHECK(v == 0.0);
  CHECK(h1.param_count() == 6 * 3 + 3);
  CHECK(h1.w->requires_grad);
  CHECK(h1.b->requires_grad);
  CHECK_THROWS_AS(init_head(6, 1, a), ConfigError);
}

TEST_CASE("identity head reads the CLS row") {
  Tape tape;
  auto state = state_with_cls(Tensor::zeros({1, 2}), Tensor::from({2, 2}, {2, 1, 9, 9}));
  ClassificationHead head;
  head.num_classes = 2;
  head.w = Tensor::identity(2);
  head.b = Tensor::zeros({2});
  auto logits = classify_cls(tape, state, head);
  CHECK(logits->values == std::vector<double>{2, 1});
  CHECK(argmax_class(logits) == 0);
}

TEST_CASE("constant head ignores the input") {
  Tape tape;
  ClassificationHead head;
  head.num_classes = 2;
  head.w = Tensor::zeros({2, 2});
  head.b = Tensor::from({2}, {0.5, -0.5});
  Rng rng(35);
  for (int i = 0; i < 5; ++i) {
    auto state = state_with_cls(Tensor::zeros({0, 2}), random_tensor({3, 2}, rng));
    auto logits = classify_cls(tape, state, head);
    CHECK(logits->values[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(logits->values[1] == doctest::Approx(-0.5).epsilon(1e-15));
  }
}

TEST_CASE("argmax is invariant to a shared logit shift and breaks ties low") {
  auto logits = Tensor::from({1, 3}, {0.2, 0.9, 0.4});
  CHECK(argmax_class(logits) == 1);
  auto shifted = Tensor::from({1, 3}, {0.2 + 7.5, 0.9 + 7.5, 0.4 + 7.5});
  CHECK(argmax_class(shifted) == 1);
  auto tie = Tensor::from({1, 3}, {1.0, 1.0, 0.0});
  CHECK(argmax_class(tie) == 0);
}

TEST_CASE("logits depend only on the CLS row") {
  Rng rng(37);
  auto head = init_head(4, 2, rng);
  auto tokens = random_tensor({3, 4}, rng);
  Tape tape;
  auto base = classify_cls(tape, state_with_cls(random_tensor({2, 4}, rng), tokens), head);

  auto perturbed = Tensor::from(tokens->shape, tokens->values);
  for (std::size_t j = 0; j < 4; ++j) {
    perturbed->at(1, j) += 3.0;  // a non-CLS row
    perturbed->at(2, j) -= 2.0;
  }
  auto same = classify_cls(tape, state_with_cls(random_tensor({2, 4}, rng), perturbed), head);
  CHECK(base->values == same->values);
}

TEST_CASE("empty token block is rejected") {
  Tape tape;
  Rng rng(39);
  auto head = init_head(4, 2, rng);
  CHECK_THROWS_AS(classify_cls(tape, state_with_cls(Tensor::zeros({0, 4}), Tensor::zeros({0, 4})), head),
                  ShapeError);
}

TEST_CASE("head gradients match finite differences") {
  Rng rng(41);
  auto head = init_head(3, 2, rng);
  auto tokens = random_tensor({2, 3}, rng, -1.0, 1.0, true);
  std::vector<std::pair<std::string, TensorPtr>> params = {
      {"w", head.w}, {"b", head.b}, {"tokens", tokens}};
  auto fd = max_fd_rel_error(params, [&](Tape& t) {
    auto logits = classify_cls(t, state_with_cls(Tensor::zeros({0, 3}), tokens), head);
    return t.cross_entropy(logits, {1});
  });
  CAPTURE(fd.worst_param);
  CHECK(fd.max_rel_error <= 1e-4);
}

TEST_SUITE_END();
