#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <deom/bath.hpp>
#include <deom/bath_fit.hpp>

using namespace deom;
using Catch::Approx;

static LorentzBath make_bath(double delta, double W, double beta,
                             double mu = 0.0) {
  LorentzBath b;
  b.delta = delta;
  b.W = W;
  b.beta = beta;
  b.mu = mu;
  b.coupled_orbitals = {0};
  return b;
}

TEST_CASE("spectral density values") {
  const auto b = make_bath(2.5, 7.0, 4.0);
  CHECK(spectral_density(b, 0.0) == Approx(2.5));
  CHECK(spectral_density(b, 7.0) == Approx(1.25));
  CHECK(spectral_density(b, 700.0) < 2.5e-4);
  CHECK(spectral_density(b, -3.0) == Approx(spectral_density(b, 3.0)));
}

TEST_CASE("correlation samplers agree with frozen references") {
  // Reference values below were computed with an independent
  // arbitrary-precision implementation (residue series, cross-validated
  // against windowed quadrature with analytic tails).
  struct Ref {
    double delta, W, beta, t;
    cplx c;
  };
  const Ref refs[] = {
      {1.0, 10.0, 10.0, 0.0, {5.0, 0.0}},
      {1.0, 10.0, 10.0, 0.05, {3.032653298563167, -1.907065440824656}},
      {1.0, 10.0, 10.0, 0.7, {4.559409827772581e-3, -4.758452663056943e-1}},
      {1.0, 10.0, 10.0, 5.0, {9.643749239819588e-22, -4.351304541655921e-2}},
      {2.0, 50.0, 20.0, 0.02, {18.39397205857212, -20.58699357853645}},
      {2.0, 50.0, 20.0, 1.3, {2.950045270798531e-27, -4.865531103373953e-1}},
      {0.5, 8.0, 3.0, 0.33, {1.427225391127721e-1, -5.293602781084414e-1}},
  };
  for (const auto& r : refs) {
    const auto b = make_bath(r.delta, r.W, r.beta);
    const double scale = r.delta * r.W;
    CAPTURE(r.W, r.beta, r.t);
    const cplx cm = matsubara_correlation(b, +1, r.t);
    CHECK(std::abs(cm - r.c) < 1e-12 * scale);
    const cplx cq = reference_correlation(b, +1, r.t);
    CHECK(std::abs(cq - r.c) < 1e-9 * scale);
    // equilibrium correlation is channel-independent for this density
    CHECK(std::abs(matsubara_correlation(b, -1, r.t) - cm) == 0.0);
  }
}

TEST_CASE("correlation oracle properties") {
  const auto b = make_bath(0.8, 5.0, 2.0);
  SECTION("channel sum at t=0 is Delta*W") {
    const cplx sum =
        reference_correlation(b, +1, 0.0) + reference_correlation(b, -1, 0.0);
    CHECK(sum.real() == Approx(0.8 * 5.0).epsilon(1e-8));
    CHECK(std::abs(sum.imag()) < 1e-8);
  }
  SECTION("high-temperature limit: C(0) -> Delta*W/2") {
    const auto hot = make_bath(1.0, 3.0, 1e-4);
    const cplx c0 = reference_correlation(hot, +1, 0.0);
    CHECK(c0.real() == Approx(1.5).epsilon(1e-6));
  }
  SECTION("chemical-potential shift is a pure phase") {
    auto shifted = b;
    shifted.mu = 0.9;
    for (double t : {0.13, 0.77, 2.1}) {
      for (int sigma : {-1, +1}) {
        const cplx eq = reference_correlation(b, sigma, t);
        const cplx st = reference_correlation(shifted, sigma, t);
        const cplx phase = std::exp(cplx(0.0, sigma * 0.9 * t));
        CHECK(std::abs(st - phase * eq) < 1e-9 * 0.8 * 5.0);
      }
    }
  }
  SECTION("negative time rejected") {
    CHECK_THROWS_AS(reference_correlation(b, +1, -0.1), Error);
    CHECK_THROWS_AS(matsubara_correlation(b, +1, -0.1), Error);
  }
}

TEST_CASE("Pade poles and residues of the Fermi function") {
  // Frozen N=5 values from the independent implementation.
  std::vector<double> xi, kappa;
  detail::pade_fermi(5, xi, kappa);
  REQUIRE(xi.size() == 5);
  const double xi_ref[] = {3.14159265359, 9.424788128506, 15.76218003075,
                           24.876507948874, 70.526709814645};
  const double kap_ref[] = {1.0, 1.000020205417, 1.048393031296,
                            2.321782254904, 22.129804508383};
  for (int j = 0; j < 5; ++j) {
    CHECK(xi[j] == Approx(xi_ref[j]).epsilon(1e-11));
    CHECK(kappa[j] == Approx(kap_ref[j]).epsilon(1e-10));
  }
  // the rational approximation should track the Fermi function closely
  // well inside the pole radius
  for (double x : {0.0, 0.5, -2.0, 6.0}) {
    double f = 0.5;
    for (int j = 0; j < 5; ++j) f -= 2.0 * kappa[j] * x / (x * x + xi[j] * xi[j]);
    CHECK(f == Approx(fermi(x)).margin(1e-10));
  }
}

TEST_CASE("pole backend reconstruction meets the tolerance gate") {
  // The rational Fermi approximation resolves poles up to roughly the
  // (K-1)-th Matsubara frequency, so the backend is reliable for
  // moderate beta*W only; the Prony backend covers the rest.
  const auto b = make_bath(1.0, 2.0, 5.0);  // beta*W = 10
  FitOptions opt;
  opt.K = 6;
  opt.backend = FitBackend::Pole;
  const auto modes = decompose_correlation(b, +1, opt);
  REQUIRE(modes.size() == 6);
  CHECK(modes[0].gamma.real() == Approx(2.0));
  const auto grid = sample_correlation(b);
  // cross-language pin: the independent implementation reports 1.8771%
  CHECK(reconstruction_error(modes, grid) == Approx(0.018771).epsilon(1e-3));
  for (const auto& m : modes) CHECK(m.gamma.real() > 0.0);
}

TEST_CASE("high-temperature limit needs only the Lorentzian pole") {
  const auto hot = make_bath(1.0, 10.0, 0.001);  // beta*W = 0.01
  FitOptions opt;
  opt.K = 1;
  opt.backend = FitBackend::Pole;
  const auto modes = decompose_correlation(hot, +1, opt);
  REQUIRE(modes.size() == 1);
  CHECK(modes[0].gamma.real() == Approx(10.0));
  const auto grid = sample_correlation(hot);
  CHECK(reconstruction_error(modes, grid) < 0.02);
}

TEST_CASE("prony backend matches the sampled correlation") {
  const auto b = make_bath(1.0, 10.0, 10.0);
  const auto grid = sample_correlation(b);
  const auto modes = prony_modes(grid, 6);
  CHECK(reconstruction_error(modes, grid) < 0.005);
  for (const auto& m : modes) CHECK(m.gamma.real() > 0.0);

  const auto b2 = make_bath(2.0, 50.0, 20.0);
  const auto grid2 = sample_correlation(b2);
  const auto modes2 = prony_modes(grid2, 6);
  CHECK(reconstruction_error(modes2, grid2) < 0.005);
}

TEST_CASE("auto-K decomposition honors the tolerance") {
  const auto b = make_bath(1.0, 4.0, 6.0);
  FitOptions opt;
  opt.tol = 0.01;
  const auto modes = decompose_correlation(b, +1, opt);
  const auto grid = sample_correlation(b);
  CHECK(reconstruction_error(modes, grid) <= 0.01);
}

TEST_CASE("unreachable target raises a fit error with the achieved value") {
  const auto cold = make_bath(1.0, 10.0, 10.0);
  FitOptions opt;
  opt.K = 1;  // single exponential cannot carry the Fermi structure here
  opt.backend = FitBackend::Pole;
  opt.tol = 1e-3;
  try {
    decompose_correlation(cold, +1, opt);
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(e.achieved > e.target);
    CHECK(e.target == Approx(1e-3));
  }
}

TEST_CASE("invalid decomposition requests are rejected") {
  const auto b = make_bath(1.0, 4.0, 6.0);
  FitOptions opt;
  opt.K = 0;
  opt.tol = 0.5;  // outside (0, 0.1]
  CHECK_THROWS_AS(decompose_correlation(b, +1, opt), ConfigError);
  CHECK_THROWS_AS(parse_backend("magic"), ConfigError);
}

TEST_CASE("mu-shift commutes with decomposition") {
  auto b = make_bath(1.0, 6.0, 5.0, 0.0);
  FitOptions opt;
  opt.K = 6;
  auto modes = decompose_correlation(b, +1, opt);

  std::vector<DissipatonMode> dm;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    DissipatonMode m;
    m.sigma = +1;
    m.k = int(k);
    m.eta = modes[k].eta;
    m.gamma = modes[k].gamma;
    dm.push_back(m);
  }
  shift_modes(dm, 1.0);  // mu = Delta
  auto biased = b;
  biased.mu = 1.0;
  double worst = 0.0;
  for (double t : {0.0, 0.21, 0.8, 1.7}) {
    cplx rec = 0.0;
    for (const auto& m : dm) rec += m.eta * std::exp(-m.gamma * t);
    worst = std::max(worst,
                     std::abs(rec - reference_correlation(biased, +1, t)));
  }
  CHECK(worst < 0.02 * 6.0);  // same tolerance as the eq fit, scale Delta*W
  for (std::size_t k = 0; k < dm.size(); ++k) {
    const cplx d = dm[k].gamma - modes[k].gamma;  // shift = -i*sigma*mu
    CHECK(std::abs(d - cplx(0.0, -1.0)) < 1e-14);
    CHECK(dm[k].gamma.real() > 0.0);
  }
}

TEST_CASE("mode table ordering, conjugation, and CSV round-trip") {
  LorentzBath L = make_bath(1.0, 10.0, 10.0, 0.5);
  L.alpha_label = "L";
  L.coupled_orbitals = {0};
  LorentzBath R = make_bath(1.0, 10.0, 10.0, -0.5);
  R.alpha_label = "R";
  R.coupled_orbitals = {1};
  FitOptions opt;
  opt.K = 4;
  const ModeTable table = build_mode_table({L, R}, opt);
  // An explicit K counts fitted exponents; conjugate closure appends the
  // missing partners of complex-pair exponents, so the per-channel count
  // may exceed K. The table stays channel-uniform: 2 leads x 2 sigma.
  REQUIRE(table.K_per_channel >= 4);
  REQUIRE(table.size() == 2 * 2 * table.K_per_channel);

  SECTION("lexicographic (alpha, u, sigma, k) order") {
    for (int j = 0; j + 1 < table.size(); ++j) {
      const auto &a = table.modes[std::size_t(j)],
                 &b = table.modes[std::size_t(j + 1)];
      CHECK(std::tie(a.alpha, a.u, a.sigma, a.k) <
            std::tie(b.alpha, b.u, b.sigma, b.k));
    }
  }
  SECTION("conjugation is an involution pairing opposite channels") {
    for (int j = 0; j < table.size(); ++j) {
      const int jc = table.conjugate(j);
      CHECK(table.conjugate(jc) == j);
      CHECK(table.modes[std::size_t(jc)].sigma ==
            -table.modes[std::size_t(j)].sigma);
      CHECK(table.modes[std::size_t(jc)].alpha ==
            table.modes[std::size_t(j)].alpha);
      CHECK(table.modes[std::size_t(jc)].k == table.modes[std::size_t(j)].k);
    }
  }
  SECTION("mu enters only as the exact shift of gamma") {
    auto L0 = L, R0 = R;
    L0.mu = R0.mu = 0.0;
    const ModeTable eq = build_mode_table({L0, R0}, opt);
    REQUIRE(eq.size() == table.size());
    for (int j = 0; j < table.size(); ++j) {
      const auto &m = table.modes[std::size_t(j)],
                 &e = eq.modes[std::size_t(j)];
      const double mu = m.alpha == 0 ? 0.5 : -0.5;
      CHECK(m.eta == e.eta);
      CHECK(std::abs(m.gamma - e.gamma - cplx(0.0, -m.sigma * mu)) < 1e-13);
    }
  }
  SECTION("CSV round-trip is exact") {
    const std::string path = "mode_table_roundtrip.csv";
    save_mode_table(table, path);
    const ModeTable back = load_mode_table(path);
    REQUIRE(back.size() == table.size());
    for (int j = 0; j < table.size(); ++j) {
      const auto &a = table.modes[std::size_t(j)],
                 &b = back.modes[std::size_t(j)];
      CHECK(a.alpha == b.alpha);
      CHECK(a.u == b.u);
      CHECK(a.sigma == b.sigma);
      CHECK(a.k == b.k);
      CHECK(a.eta == b.eta);      // bitwise equality after text round-trip
      CHECK(a.gamma == b.gamma);
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("matsubara pole collision is reported") {
  auto bad = make_bath(1.0, PI, 1.0);  // beta*W = pi exactly
  CHECK_THROWS_AS(matsubara_correlation(bad, +1, 0.4), SingularityError);
  CHECK_THROWS_AS(pole_modes(bad, 4), SingularityError);
}

TEST_CASE("bath parameter validation") {
  auto b = make_bath(1.0, 1.0, 1.0);
  b.delta = -1.0;
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b.delta = 1.0;
  b.W = 0.0;
  CHECK_THROWS_AS(b.validate(), ConfigError);
}
