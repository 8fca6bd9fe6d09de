#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "branchflow/hazard.hpp"
#include "test_util.hpp"

using namespace branchflow;

namespace {
const std::vector<HazardSpec> kPaperFamilies = {
    HazardSpec::uniform(),           HazardSpec::make_beta(1.0, 1.5),
    HazardSpec::make_beta(1.0, 2.0), HazardSpec::make_beta(2.0, 2.0),
    HazardSpec::make_beta(1.5, 1.5), HazardSpec::make_beta(3.0, 1.5)};
}

TEST_CASE("uniform hazard closed forms") {
  const HazardSpec u = HazardSpec::uniform();
  CHECK(hazard_rate(u, 0.5) == doctest::Approx(2.0));
  CHECK(hazard_rate(u, 0.0) == doctest::Approx(1.0));
  CHECK(survival(u, 0.25) == doctest::Approx(0.75));
  CHECK(survival(u, 1.0) == 0.0);
  CHECK(hazard_cdf(u, 0.0) == 0.0);
  CHECK(hazard_cdf(u, 1.0) == 1.0);
}

TEST_CASE("beta hazard against quadrature oracle") {
  // beta(1,2): frozen expected value h(0) = 2 (pdf 2(1-t), survival (1-t)^2)
  CHECK(hazard_rate(HazardSpec::make_beta(1.0, 2.0), 0.0) == doctest::Approx(2.0).epsilon(1e-9));
  // beta(1,1.5): survival(0.5) = (1-0.5)^{1.5}
  CHECK(survival(HazardSpec::make_beta(1.0, 1.5), 0.5) ==
        doctest::Approx(0.3535533905932738).epsilon(1e-10));

  for (const HazardSpec& spec : kPaperFamilies) {
    if (spec.kind == HazardKind::Uniform) continue;
    for (double t : {0.1, 0.35, 0.6, 0.85}) {
      const double cdf_quad =
          bf_test::simpson([&](double x) { return bf_test::beta_pdf(spec.alpha, spec.beta, x); },
                           1e-12, t, 4000);
      CHECK(hazard_cdf(spec, t) == doctest::Approx(cdf_quad).epsilon(1e-6));
      const double h_oracle =
          bf_test::beta_pdf(spec.alpha, spec.beta, t) / (1.0 - cdf_quad);
      CHECK(hazard_rate(spec, t) == doctest::Approx(h_oracle).epsilon(1e-4));
    }
  }
}

TEST_CASE("cdf and survival are proper and monotone") {
  for (const HazardSpec& spec : kPaperFamilies) {
    double prev = 0.0;
    for (int k = 0; k <= 100; ++k) {
      const double t = k / 100.0;
      const double c = hazard_cdf(spec, t);
      CHECK(c >= prev);
      CHECK(survival(spec, t) == doctest::Approx(1.0 - c).epsilon(1e-12));
      prev = c;
    }
    CHECK(survival(spec, 0.0) == 1.0);
    CHECK(survival(spec, 1.0) == 0.0);
  }
}

TEST_CASE("quantile inverts the cdf to 1e-9") {
  for (const HazardSpec& spec : kPaperFamilies) {
    for (int k = 1; k <= 9; ++k) {
      const double t = k / 10.0;
      CHECK(hazard_quantile(spec, hazard_cdf(spec, t)) == doctest::Approx(t).epsilon(1e-9));
    }
  }
}

TEST_CASE("hazard_rate rejects t >= 1") {
  CHECK_THROWS_AS(hazard_rate(HazardSpec::uniform(), 1.0), std::domain_error);
  CHECK_THROWS_AS(hazard_rate(HazardSpec::make_beta(2, 2), 1.5), std::domain_error);
}

TEST_CASE("interarrival identities on the uniform family") {
  const HazardSpec u = HazardSpec::uniform();
  CHECK(sample_interarrival(u, 0.0, 1, 0.75) == doctest::Approx(0.75));
  CHECK(sample_interarrival(u, 0.5, 1, 0.0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(sample_interarrival(u, 0.2, 0, 0.5), std::invalid_argument);
}

TEST_CASE("interarrival waits stay inside the support") {
  Rng rng(7);
  for (const HazardSpec& spec : kPaperFamilies) {
    for (int i = 0; i < 2000; ++i) {
      const double t = 0.999 + 0.001 * rng.uniform() * 0.999;  // right up against 1
      const double w = sample_interarrival(spec, t, 1 + rng.uniform_int(5), rng);
      CHECK(w >= 0.0);
      CHECK(t + w <= 1.0 - kTimeEps + 1e-15);
    }
  }
}

TEST_CASE("interarrival law matches order-statistic minima (uniform, R=4)") {
  // DERIVED oracle: direct simulation of min of 4 i.i.d. U(0,1)
  const HazardSpec u = HazardSpec::uniform();
  const int n = 100000;
  Rng rng(11);
  std::vector<double> impl(n), oracle(n);
  for (int i = 0; i < n; ++i) impl[i] = sample_interarrival(u, 0.0, 4, rng);
  for (int i = 0; i < n; ++i) {
    double mn = 1.0;
    for (int k = 0; k < 4; ++k) mn = std::min(mn, rng.uniform());
    oracle[i] = mn;
  }
  CHECK(bf_test::ks_distance(impl, oracle) < 0.01);
}

TEST_CASE("interarrival law for a beta family at interior t") {
  const HazardSpec spec = HazardSpec::make_beta(2.0, 2.0);
  const double t = 0.3;
  const int r = 3, n = 40000;
  Rng rng(13);
  std::vector<double> impl(n), oracle(n);
  for (int i = 0; i < n; ++i) impl[i] = t + sample_interarrival(spec, t, r, rng);
  const double ft = hazard_cdf(spec, t);
  for (int i = 0; i < n; ++i) {
    double mn = 2.0;
    for (int k = 0; k < r; ++k)
      mn = std::min(mn, hazard_quantile(spec, ft + rng.uniform() * (1.0 - ft)));
    oracle[i] = mn;
  }
  CHECK(bf_test::ks_distance(impl, oracle) < 0.015);
}

TEST_CASE("stepped chain matches event-time construction (z_c = 5)") {
  // Appendix A equivalence at reduced size; the acceptance suite runs the
  // delta = 1e-4, n = 1e5 version.
  const HazardSpec u = HazardSpec::uniform();
  const int n = 30000, zc = 5;
  const double t_end = 0.5, delta = 1e-3;
  Rng rng(17);
  std::vector<double> pa(zc + 1, 0.0), pb(zc + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    int x = 0;
    double t = 0.0;
    while (x < zc) {
      const double w = sample_interarrival(u, t, zc - x, rng);
      if (t + w > t_end) break;
      t += w;
      ++x;
    }
    pa[x] += 1.0 / n;
  }
  const int steps = static_cast<int>(t_end / delta);
  for (int i = 0; i < n; ++i) {
    int x = 0;
    for (int k = 0; k < steps && x < zc; ++k) {
      const double p = (zc - x) * hazard_rate(u, k * delta) * delta;
      if (rng.uniform() < std::min(1.0, p)) ++x;
    }
    pb[x] += 1.0 / n;
  }
  CHECK(bf_test::tv_distance(pa, pb) < 0.03);
}
