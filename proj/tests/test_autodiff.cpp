#include "alignlab/adam.hpp"
#include "alignlab/checkpoint.hpp"
#include "alignlab/rng.hpp"
#include "alignlab/tape.hpp"
#include "alignlab/tensor.hpp"
#include "gradcheck_suite.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>

using namespace alignlab;

namespace {
Tensor<float> tensor2x2(float a, float b, float c, float d) {
  return Tensor<float>({2, 2}, {a, b, c, d});
}
}  // namespace

TEST_CASE("matmul by identity returns the other operand") {
  Tape<float> t;
  Tensor<float> id({3, 3});
  for (int i = 0; i < 3; ++i) id.at(i, i) = 1.f;
  Tensor<float> a({3, 3}, {2, -1, 0.5f, 3, 4, -2, 0, 7, 1});
  auto out = t.matmul(t.constant(id), t.constant(a));
  CHECK(t.value(out).data == a.data);
}

TEST_CASE("reduce_max over axis 0 picks columnwise maxima") {
  Tape<float> t;
  auto x = t.constant(tensor2x2(1, 5, 3, 2));
  auto m = t.reduce_max(x, 0);
  CHECK(t.value(m).shape == Shape{1, 2});
  CHECK(t.value(m).data[0] == 3.f);
  CHECK(t.value(m).data[1] == 5.f);
}

TEST_CASE("reduce_max ties break to the first index and route all gradient there") {
  Tape<float> t;
  Tensor<float> grad = Tensor<float>::zeros({2, 1});
  auto x = t.leaf(Tensor<float>({2, 1}, {4.f, 4.f}), &grad);
  auto m = t.reduce_max(x, 0);  // [1,1]
  t.backward(m);
  CHECK(grad.data[0] == 1.f);
  CHECK(grad.data[1] == 0.f);
}

TEST_CASE("relu clamps negatives and routes zero gradient through them") {
  Tape<float> t;
  Tensor<float> grad = Tensor<float>::zeros({1, 2});
  auto x = t.leaf(Tensor<float>({1, 2}, {-2.f, 3.f}), &grad);
  auto y = t.relu(x);
  CHECK(t.value(y).data[0] == 0.f);
  CHECK(t.value(y).data[1] == 3.f);
  auto loss = t.reduce_sum(t.reduce_sum(y, 0), 1);
  t.backward(loss);
  CHECK(grad.data[0] == 0.f);
  CHECK(grad.data[1] == 1.f);
}

TEST_CASE("sum loss gives all-ones parameter gradient") {
  Tape<float> t;
  Tensor<float> w({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<float> grad = Tensor<float>::zeros({2, 3});
  auto wl = t.leaf(w, &grad);
  auto loss = t.reduce_sum(t.reduce_sum(wl, 0), 1);
  t.backward(loss);
  for (float g : grad.data) CHECK(g == 1.f);
}

TEST_CASE("mse gradient matches the hand formula for a scalar linear model") {
  // loss = mse(w*x, y) with one sample: d/dw = 2*x*(w*x - y)
  const float w0 = 0.7f, x0 = 1.3f, y0 = -0.4f;
  Tape<float> t;
  Tensor<float> grad = Tensor<float>::zeros({1, 1});
  auto w = t.leaf(Tensor<float>({1, 1}, {w0}), &grad);
  auto pred = t.matmul(w, t.constant(Tensor<float>({1, 1}, {x0})));
  auto loss = t.mse_loss(pred, Tensor<float>({1, 1}, {y0}));
  t.backward(loss);
  CHECK(grad.data[0] == doctest::Approx(2 * x0 * (w0 * x0 - y0)).epsilon(1e-6));
}

TEST_CASE("loss values match their closed forms") {
  Tape<float> t;
  auto p1 = t.constant(Tensor<float>({1, 2}, {1, 2}));
  CHECK(t.value(t.mse_loss(p1, Tensor<float>({1, 2}, {1, 2}))).data[0] == 0.f);

  auto p2 = t.constant(Tensor<float>({1, 2}, {0, 0}));
  CHECK(t.value(t.mae_loss(p2, Tensor<float>({1, 2}, {3, -3}))).data[0] == doctest::Approx(3.f));

  // Uniform logits over C classes -> ln C regardless of the target class.
  for (int C : {2, 5, 10}) {
    auto logits = t.constant(Tensor<float>({1, C}));
    auto classes = std::make_shared<std::vector<std::int32_t>>(std::vector<std::int32_t>{C - 1});
    CHECK(t.value(t.softmax_cross_entropy(logits, classes)).data[0] ==
          doctest::Approx(std::log(double(C))).epsilon(1e-6));
  }
}

TEST_CASE("mse and mae are nonnegative and zero only at equality") {
  Rng rng = make_rng({17});
  std::uniform_real_distribution<float> u(-2, 2);
  for (int it = 0; it < 50; ++it) {
    Tensor<float> a({4, 1}), b({4, 1});
    for (int i = 0; i < 4; ++i) a.data[i] = u(rng), b.data[i] = u(rng);
    Tape<float> t;
    float mse = t.value(t.mse_loss(t.constant(a), b)).data[0];
    float mae = t.value(t.mae_loss(t.constant(a), b)).data[0];
    CHECK(mse >= 0.f);
    CHECK(mae >= 0.f);
    if (a.data == b.data) {
      CHECK(mse == 0.f);
      CHECK(mae == 0.f);
    } else {
      CHECK(mse > 0.f);
      CHECK(mae > 0.f);
    }
  }
}

TEST_CASE("segment reductions honor ranges and empty segments") {
  Tape<float> t;
  auto x = t.constant(Tensor<float>({4, 2}, {1, 10, 2, 20, 3, 30, 4, 40}));
  auto offsets = std::make_shared<std::vector<std::int32_t>>(std::vector<std::int32_t>{0, 2, 2, 4});
  auto s = t.segment_sum(x, offsets);
  CHECK(t.value(s).shape == Shape{3, 2});
  CHECK(t.value(s).at(0, 0) == 3.f);
  CHECK(t.value(s).at(0, 1) == 30.f);
  CHECK(t.value(s).at(1, 0) == 0.f);  // empty neighborhood -> zero vector
  CHECK(t.value(s).at(2, 1) == 70.f);
  auto m = t.segment_max(x, offsets);
  CHECK(t.value(m).at(0, 1) == 20.f);
  CHECK(t.value(m).at(1, 0) == 0.f);
  CHECK(t.value(m).at(2, 0) == 4.f);
}

TEST_CASE("gather_rows copies and scatter-adds duplicates") {
  Tape<float> t;
  Tensor<float> grad = Tensor<float>::zeros({3, 1});
  auto x = t.leaf(Tensor<float>({3, 1}, {5, 6, 7}), &grad);
  auto idx = std::make_shared<std::vector<std::int32_t>>(std::vector<std::int32_t>{2, 0, 2});
  auto g = t.gather_rows(x, idx);
  CHECK(t.value(g).data == Tensor<float>::Buffer{7, 5, 7});
  auto loss = t.reduce_sum(t.reduce_sum(g, 0), 1);
  t.backward(loss);
  CHECK(grad.data == Tensor<float>::Buffer{1, 0, 2});
}

TEST_CASE("conv2d with a centered delta kernel is the identity") {
  Tape<float> t;
  Rng rng = make_rng({3});
  Tensor<float> x({1, 4, 4, 2});
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& v : x.data) v = u(rng);
  // k=3, Cin=2, Cout=2: weight rows are (kh,kw,cin); center tap is kh=kw=1.
  Tensor<float> w({18, 2});
  w.at((1 * 3 + 1) * 2 + 0, 0) = 1.f;
  w.at((1 * 3 + 1) * 2 + 1, 1) = 1.f;
  auto y = t.conv2d(t.constant(x), t.constant(w), t.constant(Tensor<float>({2})), 3);
  CHECK(t.value(y).data == x.data);
}

TEST_CASE("maxpool2d and global_avg_pool shapes and values") {
  Tape<float> t;
  Tensor<float> x({1, 2, 2, 1}, {1, 4, 3, 2});
  auto p = t.maxpool2d(t.constant(x));
  CHECK(t.value(p).shape == Shape{1, 1, 1, 1});
  CHECK(t.value(p).data[0] == 4.f);
  auto g = t.global_avg_pool(t.constant(x));
  CHECK(t.value(g).shape == Shape{1, 1});
  CHECK(t.value(g).data[0] == doctest::Approx(2.5f));
}

TEST_CASE("shape mismatches raise errors naming the op") {
  Tape<float> t;
  auto a = t.constant(Tensor<float>({2, 3}));
  auto b = t.constant(Tensor<float>({2, 3}));
  CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("matmul"), std::invalid_argument);
  CHECK_THROWS_AS(t.add(a, t.constant(Tensor<float>({3, 2}))), std::invalid_argument);
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);  // non-scalar loss
}

TEST_CASE("finite checking flags numeric blowups with the op name") {
  Tape<float> t;
  t.set_check_finite(true);
  Tensor<float> big = Tensor<float>::full({2, 2}, 3e38f);
  auto x = t.constant(big);
  CHECK_THROWS_WITH_AS(t.add(x, x), doctest::Contains("add"), std::runtime_error);
}

TEST_CASE("forward passes are bit-identical across runs") {
  auto run = [](std::uint64_t seed) {
    Rng rng = make_rng({seed});
    std::uniform_real_distribution<float> u(-1, 1);
    Tensor<float> a({8, 8}), b({8, 8});
    for (auto& v : a.data) v = u(rng);
    for (auto& v : b.data) v = u(rng);
    Tape<float> t;
    auto y = t.relu(t.matmul(t.constant(a), t.constant(b)));
    return t.value(y).data;
  };
  auto r1 = run(42), r2 = run(42);
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(float)) == 0);
}

TEST_CASE("unreachable parameters keep zero gradients") {
  Tape<float> t;
  Tensor<float> used_g = Tensor<float>::zeros({1, 1}), unused_g = Tensor<float>::zeros({1, 1});
  auto used = t.leaf(Tensor<float>({1, 1}, {2.f}), &used_g);
  t.leaf(Tensor<float>({1, 1}, {5.f}), &unused_g);
  auto loss = t.mse_loss(used, Tensor<float>({1, 1}, {0.f}));
  t.backward(loss);
  CHECK(used_g.data[0] != 0.f);
  CHECK(unused_g.data[0] == 0.f);
}

TEST_CASE("every primitive passes randomized finite-difference checks") {
  auto results = alignlab::testing::run_primitive_gradient_checks(/*cases_per_op=*/3, /*seed=*/20240817);
  CHECK(results.size() >= 50);
  int inconclusive = 0;
  for (const auto& r : results) {
    if (!r.report.conclusive) {
      ++inconclusive;  // kink-saturated sample; allowed, but should be rare
      continue;
    }
    INFO(r.name, " max_rel_err=", r.report.max_rel_err, " worst=", r.report.worst_param);
    CHECK(r.report.passed);
  }
  CHECK(inconclusive <= static_cast<int>(results.size() / 10));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor<float> p({2, 2}, {1, 2, 3, 4});
  Tensor<float> g = Tensor<float>::zeros({2, 2});
  Adam<float> opt({.lr = 0.1});
  auto before = p.data;
  opt.step({&p}, {&g});
  CHECK(p.data == before);
}

TEST_CASE("adam: first step from zero moments moves by about lr in the gradient's direction") {
  Tensor<float> p({1, 2}, {0.f, 0.f});
  Tensor<float> g({1, 2}, {0.3f, -4.0f});
  Adam<float> opt({.lr = 1e-3});
  opt.step({&p}, {&g});
  // mhat/sqrt(vhat) == sign(g) exactly on the first step (up to eps)
  CHECK(p.data[0] == doctest::Approx(-1e-3).epsilon(1e-3));
  CHECK(p.data[1] == doctest::Approx(1e-3).epsilon(1e-3));
}

TEST_CASE("adam: constant gradient approaches unit-step updates of size lr") {
  Tensor<float> p({1, 1}, {10.f});
  Tensor<float> g({1, 1}, {2.5f});
  Adam<float> opt({.lr = 0.01});
  float prev = p.data[0];
  double step = 0;
  for (int i = 0; i < 200; ++i) {
    opt.step({&p}, {&g});
    step = double(prev) - double(p.data[0]);
    prev = p.data[0];
  }
  CHECK(step == doctest::Approx(0.01).epsilon(0.05));
  CHECK(opt.step_count() == 200);
}

TEST_CASE("checkpoint round-trips tensors bit-exactly") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "alignlab_ckpt_test";
  fs::create_directories(dir);
  fs::path file = dir / "params.bin";
  Rng rng = make_rng({7});
  std::uniform_real_distribution<float> u(-10, 10);
  NamedTensors tensors;
  tensors.emplace_back("layer0/w", Tensor<float>({3, 4}));
  tensors.emplace_back("layer0/b", Tensor<float>({4}));
  tensors.emplace_back("head/w", Tensor<float>({4, 1}));
  for (auto& [name, t] : tensors)
    for (auto& v : t.data) v = u(rng);
  save_checkpoint(file, tensors);
  NamedTensors loaded = load_checkpoint(file);
  REQUIRE(loaded.size() == tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    CHECK(loaded[i].first == tensors[i].first);
    CHECK(loaded[i].second.shape == tensors[i].second.shape);
    CHECK(std::memcmp(loaded[i].second.data.data(), tensors[i].second.data.data(),
                      tensors[i].second.data.size() * sizeof(float)) == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint version mismatch fails loudly") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "alignlab_ckpt_ver";
  fs::create_directories(dir);
  fs::path file = dir / "params.bin";
  save_checkpoint(file, {{"w", Tensor<float>({1}, {1.f})}});
  // Corrupt the version field.
  auto mpath = manifest_path(file);
  std::ifstream in(mpath);
  nlohmann::json m = nlohmann::json::parse(in);
  in.close();
  m["version"] = 999;
  std::ofstream out(mpath);
  out << m.dump();
  out.close();
  CHECK_THROWS_WITH_AS(load_checkpoint(file), doctest::Contains("version"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("seed derivation is order-sensitive and stable") {
  CHECK(derive_seed({1, 2}) != derive_seed({2, 1}));
  CHECK(derive_seed({1, 2}) == derive_seed({1, 2}));
  CHECK(derive_seed({0}) != derive_seed({0, 0}));
}
