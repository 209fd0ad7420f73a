// Copyright (c) the VRC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "doctest.h"

#include <cmath>

#include "vrc/gdn.hpp"
#include "vrc/grad_check.hpp"
#include "vrc/ops.hpp"
#include "vrc/optimizer.hpp"

using namespace vrc;

namespace {

template <typename T>
Var<T> leaf(Tensor<T> t, bool rg = true) {
  return Var<T>::leaf(std::move(t), rg);
}

}  // namespace

TEST_CASE("conv2d all-ones 3x3 kernel sums to 9") {
  auto x = leaf<double>(Tensor<double>::full({1, 1, 3, 3}, 1.0), false);
  auto k = leaf<double>(Tensor<double>::full({1, 1, 3, 3}, 1.0), false);
  auto y = ops::conv2d<double>(x, k, std::nullopt, 1, 0);
  REQUIRE(y.value().size() == 1);
  CHECK(y.value()[0] == doctest::Approx(9.0));
}

TEST_CASE("conv2d strided identity kernel subsamples") {
  Rng rng(11);
  Tensor<double> xin = random_uniform<double>({1, 1, 4, 4}, rng);
  auto x = leaf<double>(xin, false);
  auto k = leaf<double>(Tensor<double>::full({1, 1, 1, 1}, 1.0), false);
  auto y = ops::conv2d<double>(x, k, std::nullopt, 2, 0);
  REQUIRE(y.value().shape() == std::vector<int64_t>{1, 1, 2, 2});
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 2; ++j)
      CHECK(y.value().at(0, 0, i, j) == doctest::Approx(xin.at(0, 0, 2 * i, 2 * j)));
}

TEST_CASE("conv2d rejects bad shapes and stride") {
  auto x = leaf<double>(Tensor<double>({1, 2, 4, 4}), false);
  auto k = leaf<double>(Tensor<double>({3, 1, 3, 3}), false);  // in_ch mismatch
  CHECK_THROWS_AS(ops::conv2d<double>(x, k, std::nullopt, 1, 1), Error);
  auto k2 = leaf<double>(Tensor<double>({3, 2, 3, 3}), false);
  CHECK_THROWS_AS(ops::conv2d<double>(x, k2, std::nullopt, 0, 1), Error);
}

TEST_CASE("conv2d gradients match finite differences (64-bit)") {
  Rng rng(42);
  Tensor<double> x = random_normal<double>({2, 3, 8, 8}, rng);
  Tensor<double> k = random_normal<double>({4, 3, 3, 3}, rng, 0.0, 0.5);
  Tensor<double> b = random_normal<double>({4}, rng);
  auto fn = [](const std::vector<Var<double>>& in) {
    auto y = ops::conv2d<double>(in[0], in[1], in[2], 2, 1);
    return ops::sum_all(ops::mul(y, y));
  };
  double err = finite_difference_check<double>(fn, {x, k, b}, 1e-4, 40);
  CHECK(err <= 1e-4);
}

TEST_CASE("transposed_conv2d disjoint stride places ones") {
  auto x = leaf<double>(Tensor<double>::full({1, 1, 2, 2}, 1.0), false);
  auto k = leaf<double>(Tensor<double>::full({1, 1, 2, 2}, 1.0), false);
  auto y = ops::transposed_conv2d<double>(x, k, std::nullopt, 2, 0);
  REQUIRE(y.value().shape() == std::vector<int64_t>{1, 1, 4, 4});
  for (int64_t i = 0; i < 16; ++i) CHECK(y.value()[i] == doctest::Approx(1.0));
}

TEST_CASE("conv then transposed conv restores spatial extent for even sizes") {
  for (int64_t h : {8, 12, 16}) {
    Rng rng{uint64_t(h)};
    auto x = leaf<double>(random_uniform<double>({1, 2, h, h}, rng), false);
    auto k = leaf<double>(random_normal<double>({3, 2, 5, 5}, rng), false);
    auto mid = ops::conv2d<double>(x, k, std::nullopt, 2, 2);
    CHECK(mid.value().dim(2) == h / 2);
    auto kt = leaf<double>(random_normal<double>({3, 2, 4, 4}, rng), false);
    auto back = ops::transposed_conv2d<double>(mid, kt, std::nullopt, 2, 1);
    CHECK(back.value().dim(2) == h);
    CHECK(back.value().dim(3) == h);
  }
}

TEST_CASE("transposed_conv2d gradients match finite differences") {
  Rng rng(43);
  Tensor<double> x = random_normal<double>({1, 3, 5, 5}, rng);
  Tensor<double> k = random_normal<double>({3, 2, 4, 4}, rng, 0.0, 0.5);
  Tensor<double> b = random_normal<double>({2}, rng);
  auto fn = [](const std::vector<Var<double>>& in) {
    auto y = ops::transposed_conv2d<double>(in[0], in[1], in[2], 2, 1);
    return ops::sum_all(ops::mul(y, y));
  };
  double err = finite_difference_check<double>(fn, {x, k, b}, 1e-4, 40);
  CHECK(err <= 1e-4);
}

TEST_CASE("conv/transposed-conv adjointness with a shared kernel") {
  Rng rng(7);
  Tensor<double> kern = random_normal<double>({4, 3, 5, 5}, rng);
  Tensor<double> x = random_normal<double>({1, 3, 12, 12}, rng);
  auto cx = ops::conv2d<double>(leaf(x, false), leaf(kern, false), std::nullopt, 2, 2);
  Tensor<double> y = random_normal<double>(cx.value().shape(), rng);
  // <conv(x), y>
  double lhs = 0;
  for (int64_t i = 0; i < y.size(); ++i) lhs += cx.value()[i] * y[i];
  // <x, tconv(y)> with the same kernel viewed [cin=4 -> cout=3]
  auto ty = ops::transposed_conv2d<double>(leaf(y, false), leaf(kern, false), std::nullopt, 2, 2);
  REQUIRE(ty.value().same_shape(x));
  double rhs = 0;
  for (int64_t i = 0; i < x.size(); ++i) rhs += x[i] * ty.value()[i];
  CHECK(std::abs(lhs - rhs) / (std::abs(lhs) + 1e-12) <= 1e-5);
}

TEST_CASE("gemm conv paths agree with naive reference loops") {
  Rng rng(99);
  for (int64_t stride : {1, 2}) {
    Tensor<double> x = random_normal<double>({2, 3, 9, 7}, rng);
    Tensor<double> k = random_normal<double>({4, 3, 3, 3}, rng);
    ConvDims d{2, 3, 9, 7, 4, 3, 3, stride, 1, 0, 0};
    d.ho = conv_out_extent(d.h, d.kh, stride, 1);
    d.wo = conv_out_extent(d.w, d.kw, stride, 1);
    Tensor<double> a({d.n, d.cout, d.ho, d.wo}), b({d.n, d.cout, d.ho, d.wo});
    kernels::conv2d_forward(x, k, d, a);
    kernels::conv2d_forward_naive(x, k, d, b);
    CHECK(max_abs_diff(a, b) <= 1e-12);

    Tensor<double> kt = random_normal<double>({3, 4, 4, 4}, rng);
    ConvDims dt{2, 3, 9, 7, 4, 4, 4, stride, 1, 0, 0};
    dt.ho = tconv_out_extent(dt.h, dt.kh, stride, 1);
    dt.wo = tconv_out_extent(dt.w, dt.kw, stride, 1);
    Tensor<double> ta({dt.n, dt.cout, dt.ho, dt.wo}), tb({dt.n, dt.cout, dt.ho, dt.wo});
    kernels::tconv2d_forward(x, kt, dt, ta);
    kernels::tconv2d_forward_naive(x, kt, dt, tb);
    CHECK(max_abs_diff(ta, tb) <= 1e-12);
  }
}

TEST_CASE("masked conv type A causality for a single impulse") {
  const int64_t H = 8, W = 8;
  for (auto [r, c] : {std::pair<int64_t, int64_t>{3, 4}, {0, 0}, {7, 7}}) {
    Tensor<double> x({1, 1, H, W});
    x.at(0, 0, r, c) = 1.0;
    Rng rng(5);
    auto k = leaf<double>(random_normal<double>({1, 1, 3, 3}, rng), false);
    auto y = ops::conv2d<double>(leaf(x, false), k, std::nullopt, 1, 1, MaskType::kA);
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j)
        if (i * W + j <= r * W + c) CHECK(y.value().at(0, 0, i, j) == 0.0);
  }
}

TEST_CASE("masked conv type A 5x5 has exactly 12 active taps") {
  Tensor<double> m = ops::raster_mask<double>(5, 5, MaskType::kA);
  double sum = 0;
  for (int64_t i = 0; i < m.size(); ++i) sum += m[i];
  CHECK(sum == 12.0);
  Tensor<double> mb = ops::raster_mask<double>(5, 5, MaskType::kB);
  sum = 0;
  for (int64_t i = 0; i < mb.size(); ++i) sum += mb[i];
  CHECK(sum == 13.0);
}

TEST_CASE("masked conv rejects even kernel extents") {
  CHECK_THROWS_AS(ops::raster_mask<double>(4, 5, MaskType::kA), Error);
}

TEST_CASE("masked conv type B receptive fields by exhaustive perturbation") {
  const int64_t H = 8, W = 8;
  Rng rng(17);
  Tensor<double> x = random_normal<double>({1, 2, H, W}, rng);
  Tensor<double> kern = random_normal<double>({2, 2, 5, 5}, rng);
  auto run = [&](const Tensor<double>& in) {
    return ops::conv2d<double>(leaf(in, false), leaf(kern, false), std::nullopt, 1, 2,
                               MaskType::kB)
        .value();
  };
  Tensor<double> base = run(x);
  for (int64_t r = 0; r < H; ++r)
    for (int64_t c = 0; c < W; ++c) {
      Tensor<double> xp = x;
      xp.at(0, 1, r, c) += 0.7;
      Tensor<double> pert = run(xp);
      bool changed_self = false;
      for (int64_t oc = 0; oc < 2; ++oc) {
        for (int64_t i = 0; i < H; ++i)
          for (int64_t j = 0; j < W; ++j) {
            double diff = std::abs(pert.at(0, oc, i, j) - base.at(0, oc, i, j));
            if (i * W + j < r * W + c) CHECK(diff == 0.0);
            if (i == r && j == c && diff > 0) changed_self = true;
          }
      }
      // Type B includes the center tap, so the output at (r,c) must react.
      CHECK(changed_self);
    }
}

TEST_CASE("masked conv gradients match finite differences") {
  Rng rng(23);
  Tensor<double> x = random_normal<double>({1, 2, 6, 6}, rng);
  Tensor<double> k = random_normal<double>({2, 2, 5, 5}, rng);
  auto fn = [](const std::vector<Var<double>>& in) {
    auto y = ops::conv2d<double>(in[0], in[1], std::nullopt, 1, 2, MaskType::kA);
    return ops::sum_all(ops::mul(y, y));
  };
  CHECK(finite_difference_check<double>(fn, {x, k}, 1e-4, 40) <= 1e-4);
}

TEST_CASE("gdn with beta=1 gamma=0 is the identity") {
  Rng rng(3);
  Tensor<double> x = random_normal<double>({1, 3, 4, 4}, rng);
  Tensor<double> braw({3}, ops::gdn_raw_from_effective(1.0));
  Tensor<double> graw({3, 3}, 0.0);  // effective gamma = floor only
  auto y = ops::gdn<double>(leaf(x, false), leaf(braw, false), leaf(graw, false), false);
  // gamma floor contributes 2^-10 * sum x^2, so identity within ~1e-3 here.
  CHECK(max_rel_diff(y.value(), x) <= 2e-3);
}

TEST_CASE("gdn single channel closed form 1/sqrt(2)") {
  Tensor<double> x({1, 1, 1, 1}, 1.0);
  Tensor<double> braw({1}, ops::gdn_raw_from_effective(1.0));
  Tensor<double> graw({1, 1}, ops::gdn_raw_from_effective(1.0));
  auto y = ops::gdn<double>(leaf(x, false), leaf(braw, false), leaf(graw, false), false);
  CHECK(y.value()[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
  auto yi = ops::gdn<double>(leaf(x, false), leaf(braw, false), leaf(graw, false), true);
  CHECK(yi.value()[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("gdn and igdn gradients match finite differences") {
  Rng rng(31);
  Tensor<double> x = random_normal<double>({2, 2, 3, 3}, rng);
  Tensor<double> braw = random_uniform<double>({2}, rng, 0.5, 1.2);
  Tensor<double> graw = random_uniform<double>({2, 2}, rng, 0.05, 0.4);
  for (bool inverse : {false, true}) {
    auto fn = [inverse](const std::vector<Var<double>>& in) {
      auto y = ops::gdn<double>(in[0], in[1], in[2], inverse);
      return ops::sum_all(ops::mul(y, y));
    };
    CHECK(finite_difference_check<double>(fn, {x, braw, graw}, 1e-5) <= 1e-6);
  }
}

TEST_CASE("softplus values and stability") {
  auto x = leaf<double>(Tensor<double>::from_values({3}, {0.0, 50.0, -50.0}), false);
  auto y = ops::softplus(x);
  CHECK(y.value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(y.value()[1] == doctest::Approx(50.0).epsilon(1e-6));
  CHECK(y.value()[2] == doctest::Approx(std::exp(-50.0)).epsilon(1e-6));
}

TEST_CASE("softplus derivative at 0 is 0.5 against finite differences") {
  Tensor<double> x = Tensor<double>::scalar(0.0);
  auto fn = [](const std::vector<Var<double>>& in) { return ops::sum_all(ops::softplus(in[0])); };
  CHECK(finite_difference_check<double>(fn, {x}, 1e-6) <= 1e-6);
  auto l = leaf<double>(x);
  auto y = ops::sum_all(ops::softplus(l));
  backward(y);
  CHECK(l.grad()[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("finite_difference_check is exact for linear maps") {
  Rng rng(8);
  Tensor<double> x = random_normal<double>({12}, rng);
  auto fn = [](const std::vector<Var<double>>& in) {
    return ops::sum_all(ops::mul_scalar(in[0], 3.25));
  };
  CHECK(finite_difference_check<double>(fn, {x}, 1e-4) <= 1e-10);
}

TEST_CASE("finite_difference_check on softplus at random points") {
  Rng rng(9);
  Tensor<double> x = random_normal<double>({20}, rng);
  auto fn = [](const std::vector<Var<double>>& in) {
    return ops::sum_all(ops::softplus(in[0]));
  };
  CHECK(finite_difference_check<double>(fn, {x}, 1e-5) <= 1e-6);
}

TEST_CASE("finite_difference_check flags a doubled gradient near 1/3") {
  Rng rng(10);
  Tensor<double> x = random_uniform<double>({6}, rng, 0.5, 1.5);
  auto fn = [](const std::vector<Var<double>>& in) {
    // sum(x) with a deliberately doubled backward
    const Tensor<double>& xv = in[0].value();
    double acc = 0;
    for (int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
    auto xn = in[0].node();
    return make_op<double>(Tensor<double>::scalar(acc), {in[0]}, [xn](Node<double>& self) {
      if (!xn->requires_grad) return;
      auto& g = xn->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += 2.0 * self.grad[0];
    });
  };
  double err = finite_difference_check<double>(fn, {x}, 1e-5);
  CHECK(err == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
}

TEST_CASE("fan-out accumulates gradients from both consumers") {
  Tensor<double> x = Tensor<double>::scalar(2.0);
  auto l = leaf<double>(x);
  auto y = ops::add(ops::square(l), ops::mul_scalar(l, 3.0));  // x^2 + 3x
  backward(ops::sum_all(y));
  CHECK(l.grad()[0] == doctest::Approx(2.0 * 2.0 + 3.0));
}

TEST_CASE("adam zero gradient is a fixed point of parameters") {
  Rng rng(12);
  std::vector<Parameter<double>> params;
  params.emplace_back("p", random_normal<double>({5}, rng));
  Tensor<double> before = params[0].value;
  params[0].adam_m = random_normal<double>({5}, rng);  // stale moments decay
  Tensor<double> m_before = params[0].adam_m;
  OptimizerConfig cfg;
  cfg.learning_rate = 0.05;
  params[0].zero_grad();
  adam_step(params, cfg);
  CHECK(max_abs_diff(params[0].value, before) == 0.0);
  for (int64_t i = 0; i < 5; ++i)
    CHECK(params[0].adam_m[i] == doctest::Approx(0.9 * m_before[i]));
}

TEST_CASE("adam first step magnitude equals learning rate, direction -sign(g)") {
  std::vector<Parameter<double>> params;
  params.emplace_back("p", Tensor<double>::from_values({2}, {5.0, -1.0}));
  params[0].grad = Tensor<double>::from_values({2}, {3.7, -0.2});
  OptimizerConfig cfg;
  cfg.learning_rate = 0.05;
  adam_step(params, cfg);
  CHECK(params[0].value[0] == doctest::Approx(5.0 - 0.05).epsilon(1e-6));
  CHECK(params[0].value[1] == doctest::Approx(-1.0 + 0.05).epsilon(1e-6));
}

TEST_CASE("adam 100 steps on p^2 from p=1 converges below 0.2") {
  std::vector<Parameter<double>> params;
  params.emplace_back("p", Tensor<double>::scalar(1.0));
  OptimizerConfig cfg;
  cfg.learning_rate = 0.05;

  // Independent scalar oracle simulating the same trajectory.
  double op = 1.0, om = 0.0, ov = 0.0;
  for (int t = 1; t <= 100; ++t) {
    params[0].grad[0] = 2.0 * params[0].value[0];
    adam_step(params, cfg);

    double g = 2.0 * op;
    om = 0.9 * om + 0.1 * g;
    ov = 0.999 * ov + 0.001 * g * g;
    double mh = om / (1.0 - std::pow(0.9, t));
    double vh = ov / (1.0 - std::pow(0.999, t));
    op -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(std::abs(params[0].value[0]) < 0.2);
  CHECK(params[0].value[0] == doctest::Approx(op).epsilon(1e-9));
}

TEST_CASE("adam learning-rate schedule applies drops") {
  OptimizerConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.schedule = {{10, 1e-4}, {20, 1e-5}};
  cfg.validate();
  CHECK(cfg.rate_at(0) == 1e-3);
  CHECK(cfg.rate_at(10) == 1e-4);
  CHECK(cfg.rate_at(25) == 1e-5);
  OptimizerConfig bad = cfg;
  bad.schedule = {{20, 1e-4}, {10, 1e-5}};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("adam aborts on NaN gradient with a diagnostic") {
  std::vector<Parameter<double>> params;
  params.emplace_back("theta", Tensor<double>::scalar(1.0));
  params[0].grad[0] = std::nan("");
  OptimizerConfig cfg;
  CHECK_THROWS_WITH_AS(adam_step(params, cfg),
                       doctest::Contains("theta"), Error);
}
