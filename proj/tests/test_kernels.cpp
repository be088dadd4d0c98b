#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "gnas/kernels.hpp"
#include "gnas/util.hpp"

using namespace gnas;

namespace {

std::vector<double> random_vec(size_t n, uint64_t stream) {
  Rng rng = make_rng(7, stream);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Sizes chosen to cover the vector body, the remainder tail, and tiny inputs.
const size_t kSizes[] = {0, 1, 2, 3, 4, 5, 7, 8, 15, 16, 17, 64, 1000, 1023};

}  // namespace

TEST_CASE("scalar and avx2 kernels are bit-identical") {
  if (!kern::avx2_supported()) {
    MESSAGE("avx2 not available on this host; scalar fallback only");
    return;
  }
  const kern::Kernels& s = kern::scalar_kernels();
  const kern::Kernels& v = kern::avx2_kernels();

  for (size_t n : kSizes) {
    CAPTURE(n);
    const std::vector<double> x = random_vec(2 * n + 1, n * 13 + 1);
    const std::vector<double> y0 = random_vec(2 * n + 1, n * 13 + 2);
    const double a = 1.37e-3;

    auto check = [&](auto&& call) {
      std::vector<double> ys = y0, yv = y0;
      call(s, ys);
      call(v, yv);
      CHECK(std::memcmp(ys.data(), yv.data(), ys.size() * sizeof(double)) == 0);
    };

    check([&](const kern::Kernels& k, std::vector<double>& y) { k.axpy(y.data(), a, x.data(), n); });
    check([&](const kern::Kernels& k, std::vector<double>& y) {
      k.axpy_gather2(y.data(), a, x.data(), n);
    });
    check([&](const kern::Kernels& k, std::vector<double>& y) {
      k.axpy_scatter2(y.data(), a, x.data(), n);
    });
    check([&](const kern::Kernels& k, std::vector<double>& y) { k.add(y.data(), x.data(), n); });
    check([&](const kern::Kernels& k, std::vector<double>& y) { k.scal(y.data(), a, n); });
    check([&](const kern::Kernels& k, std::vector<double>& y) { k.relu(y.data(), x.data(), n); });
    check([&](const kern::Kernels& k, std::vector<double>& y) {
      k.relu_bwd(y.data(), x.data(), y0.data(), n);
    });
  }
}

TEST_CASE("kernel semantics against hand loops") {
  const kern::Kernels& k = kern::scalar_kernels();
  std::vector<double> x{1.0, -2.0, 3.0, -4.0, 5.0, -6.0};
  std::vector<double> y{0.5, 0.5, 0.5};

  std::vector<double> t = y;
  k.axpy(t.data(), 2.0, x.data(), 3);
  CHECK(t == std::vector<double>{2.5, -3.5, 6.5});

  t = y;
  k.axpy_gather2(t.data(), 1.0, x.data(), 3);  // picks x[0], x[2], x[4]
  CHECK(t == std::vector<double>{1.5, 3.5, 5.5});

  std::vector<double> wide(6, 0.0);
  k.axpy_scatter2(wide.data(), 1.0, x.data(), 3);  // writes slots 0, 2, 4
  CHECK(wide == std::vector<double>{1.0, 0.0, -2.0, 0.0, 3.0, 0.0});

  t.assign(6, 0.0);
  k.relu(t.data(), x.data(), 6);
  CHECK(t == std::vector<double>{1.0, 0.0, 3.0, 0.0, 5.0, 0.0});

  std::vector<double> dx(6, 0.1), dy(6, 1.0);
  k.relu_bwd(dx.data(), x.data(), dy.data(), 6);
  CHECK(dx == std::vector<double>{1.1, 0.1, 1.1, 0.1, 1.1, 0.1});
}

TEST_CASE("backend selection is explicit and reversible") {
  const kern::Backend initial = kern::current_backend();
  kern::set_backend(kern::Backend::Scalar);
  CHECK(kern::current_backend() == kern::Backend::Scalar);
  if (kern::avx2_supported()) {
    kern::set_backend(kern::Backend::Avx2);
    CHECK(kern::current_backend() == kern::Backend::Avx2);
  } else {
    CHECK_THROWS_AS(kern::set_backend(kern::Backend::Avx2), std::runtime_error);
  }
  kern::set_backend(initial);
}

TEST_CASE("sign test matches binomial hand values") {
  CHECK(sign_test_p(5, 5) == doctest::Approx(1.0 / 32.0));
  CHECK(sign_test_p(0, 5) == doctest::Approx(1.0));
  CHECK(sign_test_p(7, 8) == doctest::Approx(9.0 / 256.0));
  CHECK(sign_test_p(3, 6) == doctest::Approx(42.0 / 64.0));
  CHECK_THROWS_AS(sign_test_p(6, 5), ContractViolation);
}

TEST_CASE("sha256 known vector") {
  // FIPS 180-2 test vector for "abc"
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
