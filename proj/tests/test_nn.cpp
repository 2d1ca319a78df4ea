// Neural-net core against independent oracles: a naive direct convolution
// written here in the test, central finite differences for every backward
// pass, and the closed-form single-step Adam update.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "keyrl/checkpoint.hpp"
#include "keyrl/gradcheck.hpp"
#include "keyrl/nn.hpp"
#include "keyrl/rng.hpp"

using namespace keyrl;

namespace {

// Independent reference: direct triple loop, explicit bounds checks instead
// of padding.
nn::Tensor1D conv_naive(const nn::ConvLayer& L, const nn::Tensor1D& x) {
  nn::Tensor1D y(L.out_channels, x.length);
  const int half = (L.kernel_width - 1) / 2;
  for (int o = 0; o < L.out_channels; ++o)
    for (int t = 0; t < x.length; ++t) {
      double acc = L.bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < L.in_channels; ++i)
        for (int k = 0; k < L.kernel_width; ++k) {
          const int src = t + L.dilation * (k - half);
          if (src < 0 || src >= x.length) continue;
          acc += L.w(o, i)[k] * x.at(i, src);
        }
      y.at(o, t) = acc;
    }
  return y;
}

nn::Tensor1D random_tensor(int c, int l, Rng& rng) {
  nn::Tensor1D t(c, l);
  for (double& v : t.v) v = rng.uniform(-1.5, 1.5);
  return t;
}

void randomize_layer(nn::ConvLayer& L, Rng& rng) {
  for (double& w : L.weights) w = rng.uniform(-0.8, 0.8);
  for (double& b : L.bias) b = rng.uniform(-0.3, 0.3);
}

// Scalar loss used by the finite-difference checks: fixed random projection
// of the output so every output element matters.
double project(const nn::Tensor1D& y, const std::vector<double>& coef) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += coef[i] * y.v[i];
  return acc;
}

std::vector<double> random_coef(std::size_t n, Rng& rng) {
  std::vector<double> c(n);
  for (double& v : c) v = rng.uniform(-1.0, 1.0);
  return c;
}

}  // namespace

TEST_CASE("conv1d_forward matches the naive direct convolution") {
  Rng rng(stream_seed(11, 0x434f4e56));
  for (const auto& [in_c, out_c, kw, dil, len] :
       {std::tuple{1, 1, 3, 1, 8}, std::tuple{3, 5, 3, 2, 16},
        std::tuple{4, 2, 5, 1, 9}, std::tuple{2, 3, 3, 4, 32},
        std::tuple{6, 4, 1, 1, 7}, std::tuple{5, 3, 3, 8, 48}}) {
    CAPTURE(in_c);
    CAPTURE(out_c);
    CAPTURE(kw);
    CAPTURE(dil);
    CAPTURE(len);
    nn::ConvLayer L(in_c, out_c, kw, dil);
    randomize_layer(L, rng);
    const nn::Tensor1D x = random_tensor(in_c, len, rng);
    const nn::Tensor1D got = nn::conv1d_forward(L, x);
    const nn::Tensor1D want = conv_naive(L, x);
    REQUIRE(got.channels == want.channels);
    REQUIRE(got.length == want.length);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv1d_forward is linear in the input once the bias is removed") {
  Rng rng(stream_seed(12, 0x434f4e56));
  nn::ConvLayer L(3, 4, 3, 2);
  randomize_layer(L, rng);
  const nn::Tensor1D a = random_tensor(3, 20, rng);
  const nn::Tensor1D b = random_tensor(3, 20, rng);
  nn::Tensor1D ab(3, 20);
  for (std::size_t i = 0; i < ab.size(); ++i) ab.v[i] = 2.0 * a.v[i] - 3.0 * b.v[i];

  const nn::Tensor1D ya = nn::conv1d_forward(L, a);
  const nn::Tensor1D yb = nn::conv1d_forward(L, b);
  const nn::Tensor1D yab = nn::conv1d_forward(L, ab);
  // conv(2a - 3b) == 2 conv(a) - 3 conv(b) + (1 - 2 + 3) * bias
  for (int o = 0; o < 4; ++o)
    for (int t = 0; t < 20; ++t)
      CHECK(yab.at(o, t) == doctest::Approx(2.0 * ya.at(o, t) -
                                            3.0 * yb.at(o, t) +
                                            2.0 * L.bias[static_cast<std::size_t>(o)])
                                .epsilon(1e-11));
}

TEST_CASE("conv1d_backward agrees with central finite differences") {
  Rng rng(stream_seed(13, 0x434f4e56));
  nn::ConvLayer L(3, 4, 3, 2);
  randomize_layer(L, rng);
  nn::Tensor1D x = random_tensor(3, 14, rng);
  const std::vector<double> coef = random_coef(4 * 14, rng);

  // Analytic grads: grad_out == coef reshaped.
  nn::Tensor1D go(4, 14);
  go.v = coef;
  const nn::ConvGrads grads = nn::conv1d_backward(L, x, go);
  REQUIRE(grads.grad_input.size() == x.size());
  REQUIRE(grads.grad_weights.size() == L.weights.size());
  REQUIRE(grads.grad_bias.size() == L.bias.size());

  const auto f = [&]() {
    return nn::FnSample{project(nn::conv1d_forward(L, x), coef), 0};
  };
  nn::GradCheckOptions opts;
  opts.seed = 99;

  const nn::GradCheckReport wrep = nn::grad_check(
      f, {std::span<double>(L.weights), std::span<double>(L.bias)},
      {std::span<const double>(grads.grad_weights),
       std::span<const double>(grads.grad_bias)},
      opts);
  CHECK(wrep.max_rel_err < 1e-7);
  CHECK(wrep.skipped_nonsmooth == 0);  // pure convolution is smooth

  const nn::GradCheckReport xrep =
      nn::grad_check(f, {std::span<double>(x.v)},
                     {std::span<const double>(grads.grad_input.v)}, opts);
  CHECK(xrep.max_rel_err < 1e-7);
}

TEST_CASE("pooling: forward semantics, ties, and adjoint") {
  nn::Tensor1D x(1, 6);
  x.v = {1.0, 4.0, 7.0, 7.0, -3.0, -2.0};
  const nn::Pooled p = nn::downsample2(x);
  REQUIRE(p.out.length == 3);
  CHECK(p.out.v[0] == 4.0);
  CHECK(p.take_odd[0] == 1);
  CHECK(p.out.v[1] == 7.0);
  CHECK(p.take_odd[1] == 0);  // tie keeps the even slot
  CHECK(p.out.v[2] == -2.0);
  CHECK(p.take_odd[2] == 1);

  nn::Tensor1D go(1, 3);
  go.v = {10.0, 20.0, 30.0};
  const nn::Tensor1D gx = nn::downsample2_backward(p, go);
  const std::vector<double> want = {0.0, 10.0, 20.0, 0.0, 0.0, 30.0};
  CHECK(gx.v == want);
}

TEST_CASE("upsample2 duplicates and its backward sums pairs") {
  nn::Tensor1D x(2, 3);
  x.v = {1.0, 2.0, 3.0, -1.0, -2.0, -3.0};
  const nn::Tensor1D up = nn::upsample2(x);
  REQUIRE(up.length == 6);
  const std::vector<double> want = {1.0, 1.0, 2.0, 2.0, 3.0, 3.0,
                                    -1.0, -1.0, -2.0, -2.0, -3.0, -3.0};
  CHECK(up.v == want);

  nn::Tensor1D go(2, 6);
  go.v = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  const nn::Tensor1D gx = nn::upsample2_backward(go);
  const std::vector<double> wantg = {3.0, 7.0, 11.0, 1.0, 1.0, 1.0};
  CHECK(gx.v == wantg);

  // Adjoint identity <up(x), g> == <x, up_backward(g)> on random data.
  Rng rng(stream_seed(21, 0x55505350));
  const nn::Tensor1D rx = random_tensor(3, 10, rng);
  nn::Tensor1D rg(3, 20);
  for (double& v : rg.v) v = rng.uniform(-1.0, 1.0);
  const nn::Tensor1D rup = nn::upsample2(rx);
  const nn::Tensor1D rdown = nn::upsample2_backward(rg);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < rup.size(); ++i) lhs += rup.v[i] * rg.v[i];
  for (std::size_t i = 0; i < rx.size(); ++i) rhs += rx.v[i] * rdown.v[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("relu forward/backward") {
  nn::Tensor1D x(1, 4);
  x.v = {-2.0, 0.0, 0.5, 3.0};
  const nn::Tensor1D y = nn::relu_forward(x);
  const std::vector<double> want = {0.0, 0.0, 0.5, 3.0};
  CHECK(y.v == want);
  nn::Tensor1D go(1, 4);
  go.v = {1.0, 1.0, 1.0, 1.0};
  const nn::Tensor1D gx = nn::relu_backward(x, go);
  const std::vector<double> wantg = {0.0, 0.0, 1.0, 1.0};
  CHECK(gx.v == wantg);
}

TEST_CASE("adam single step matches the closed form") {
  // After one step from zero moments: m_hat = g, v_hat = g^2, so
  // delta = -lr * g / (|g| + eps) regardless of the betas.
  const double lr = 0.01, eps = 1e-8;
  std::vector<double> p = {1.0, -2.0, 0.5, 0.0};
  const std::vector<double> g = {0.3, -4.0, 1e-12, 0.0};
  nn::AdamState st(4, {lr, 0.9, 0.999, eps});
  std::vector<std::span<double>> pv = {std::span<double>(p)};
  std::vector<std::span<const double>> gv = {std::span<const double>(g)};
  nn::adam_step(pv, gv, st);
  CHECK(st.step == 1);
  for (std::size_t i = 0; i < 4; ++i) {
    const double want =
        (i == 3 ? 0.0 : -lr * g[i] / (std::abs(g[i]) + eps));
    CHECK(p[i] - (std::vector<double>{1.0, -2.0, 0.5, 0.0})[i] ==
          doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("adam trajectory matches a transliterated reference") {
  // Independent re-implementation of the textbook update, kept deliberately
  // naive (no kernels, explicit bias correction each step).
  const nn::AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
  std::vector<double> p_ref = {0.7, -1.2, 2.0};
  std::vector<double> m(3, 0.0), v(3, 0.0);
  std::vector<double> p = p_ref;
  nn::AdamState st(3, cfg);

  Rng rng(stream_seed(31, 0x4144414d));
  for (int t = 1; t <= 25; ++t) {
    std::vector<double> g(3);
    for (double& x : g) x = rng.uniform(-1.0, 1.0);

    for (std::size_t i = 0; i < 3; ++i) {
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(cfg.beta1, t));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, t));
      p_ref[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }

    std::vector<std::span<double>> pv = {std::span<double>(p)};
    std::vector<std::span<const double>> gv = {std::span<const double>(g)};
    nn::adam_step(pv, gv, st);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(p[i] == doctest::Approx(p_ref[i]).epsilon(1e-12));
  }
  CHECK(st.step == 25);
}

TEST_CASE("adam validates mismatched views") {
  std::vector<double> p(4, 0.0);
  std::vector<double> g(3, 0.0);
  nn::AdamState st(4, {});
  std::vector<std::span<double>> pv = {std::span<double>(p)};
  std::vector<std::span<const double>> gv = {std::span<const double>(g)};
  CHECK_THROWS_AS(nn::adam_step(pv, gv, st), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "keyrl_nn_ckpt";
  fs::create_directories(dir);
  const std::string path = (dir / "roundtrip.ckpt").string();

  Rng rng(stream_seed(41, 0x434b5054));
  std::vector<double> a(37), b(4);
  for (double& x : a) x = rng.uniform(-1e3, 1e3);
  b = {0.0, -0.0, 1e-300, 123.456789012345678};

  std::vector<nn::TensorView> views = {
      {"alpha.weight", {37}, std::span<const double>(a)},
      {"beta.bias", {2, 2}, std::span<const double>(b)},
  };
  nn::save_checkpoint(path, views);
  const std::vector<nn::LoadedTensor> loaded = nn::load_checkpoint(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].name == "alpha.weight");
  CHECK(loaded[0].dims == std::vector<std::int64_t>{37});
  CHECK(loaded[1].dims == (std::vector<std::int64_t>{2, 2}));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(loaded[0].data[i] == a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(loaded[1].data[i] == b[i]);
    // Sign of zero must survive, i.e. genuinely bit-exact storage.
    CHECK(std::signbit(loaded[1].data[i]) == std::signbit(b[i]));
  }
}

TEST_CASE("checkpoint loader rejects malformed files") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "keyrl_nn_ckpt";
  fs::create_directories(dir);

  const auto write_file = [&](const std::string& name, const std::string& body) {
    const std::string p = (dir / name).string();
    std::ofstream out(p, std::ios::binary);
    out << body;
    return p;
  };

  CHECK_THROWS_AS(nn::load_checkpoint((dir / "missing.ckpt").string()),
                  std::runtime_error);
  CHECK_THROWS_AS(
      nn::load_checkpoint(write_file("badmagic.ckpt", "NOTCKPT 9\n1\n")),
      std::runtime_error);
  // Header promises one tensor of 4 doubles but the payload is truncated.
  CHECK_THROWS_AS(nn::load_checkpoint(write_file(
                      "trunc.ckpt", "KEYRL-CKPT 1\n1\nw 1 4\nxx")),
                  std::runtime_error);
  CHECK_THROWS_AS(nn::load_checkpoint(write_file(
                      "baddim.ckpt", "KEYRL-CKPT 1\n1\nw 1 -3\n")),
                  std::runtime_error);
}

TEST_CASE("gradient checker flags a wrong analytic gradient") {
  std::vector<double> p = {0.3, -0.7};
  const auto f = [&]() {
    return nn::FnSample{p[0] * p[0] + 3.0 * p[1], 0};
  };
  std::vector<double> good = {2.0 * p[0], 3.0};
  std::vector<double> bad = {2.0 * p[0], 2.0};  // wrong second coordinate

  nn::GradCheckOptions opts;
  const nn::GradCheckReport ok =
      nn::grad_check(f, {std::span<double>(p)},
                     {std::span<const double>(good)}, opts);
  CHECK(ok.max_rel_err < 1e-8);
  const nn::GradCheckReport flagged =
      nn::grad_check(f, {std::span<double>(p)},
                     {std::span<const double>(bad)}, opts);
  CHECK(flagged.max_rel_err > 0.3);
  CHECK(flagged.worst_offset == 1);
}

TEST_CASE("gradient checker skips coordinates that cross a kink") {
  // f = relu(p0) + p1: p0 sits exactly at a kink when 0 < |p0| < step.
  std::vector<double> p = {5e-5, 1.0};
  const auto f = [&]() {
    const bool on = p[0] > 0.0;
    return nn::FnSample{(on ? p[0] : 0.0) + p[1],
                        on ? 0xabcdefULL : 0x123456ULL};
  };
  const std::vector<double> analytic = {1.0, 1.0};
  nn::GradCheckOptions opts;  // step 1e-4 straddles the kink at 0
  const nn::GradCheckReport rep = nn::grad_check(
      f, {std::span<double>(p)}, {std::span<const double>(analytic)}, opts);
  CHECK(rep.skipped_nonsmooth == 1);
  CHECK(rep.checked == 1);
  CHECK(rep.max_rel_err < 1e-9);  // the smooth coordinate still verified
}
