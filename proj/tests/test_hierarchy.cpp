#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <deom/bath_fit.hpp>
#include <deom/fock.hpp>
#include <deom/hierarchy.hpp>
#include <random>

using namespace deom;
using Catch::Approx;

namespace {

ModeTable two_lead_table(double dL, double dR, double W, double beta, int K,
                         double muL = 0.0, double muR = 0.0) {
  LorentzBath L, R;
  L.delta = dL;
  L.W = W;
  L.beta = beta;
  L.mu = muL;
  L.alpha_label = "L";
  L.coupled_orbitals = {0};
  R = L;
  R.delta = dR;
  R.mu = muR;
  R.alpha_label = "R";
  ModeTable t;
  for (int a = 0; a < 2; ++a) {
    const LorentzBath& b = a == 0 ? L : R;
    LorentzBath eq = b;
    eq.mu = 0.0;
    const auto base = pole_modes(eq, K);
    for (int sigma : {-1, +1})
      for (std::size_t k = 0; k < base.size(); ++k) {
        DissipatonMode m;
        m.alpha = a;
        m.u = 0;
        m.sigma = sigma;
        m.k = int(k);
        m.eta = base[k].eta;
        m.gamma = base[k].gamma - cplx(0.0, sigma * b.mu);
        t.modes.push_back(m);
      }
  }
  t.finalize();
  return t;
}

Mat dense_generator(const Hierarchy& h) {
  const Eigen::Index N = Eigen::Index(h.count) * h.dim * h.dim;
  Mat M(N, N);
  BlockVector in(h.count, h.dim), out(h.count, h.dim);
  for (Eigen::Index c = 0; c < N; ++c) {
    in.set_zero();
    in.data[c] = 1.0;
    h.apply_generator(in, out);
    M.col(c) = out.data;
  }
  return M;
}

// retarded self-energy and A(omega) of the pole-fitted noninteracting
// model; the hierarchy at exact termination must reproduce this exactly
cplx sigma_r_tot(const ModeTable& t, double w) {
  cplx S = 0.0;
  for (const auto& m : t.modes) {
    if (m.sigma < 0)
      S += -I * m.eta / (m.gamma - I * w);
    else
      S += -I * std::conj(m.eta) / (std::conj(m.gamma) - I * w);
  }
  return S;
}

cplx green_retarded(const ModeTable& t, double w, double eps) {
  return 1.0 / (w - eps - sigma_r_tot(t, w));
}

}  // namespace

TEST_CASE("index counting") {
  CHECK(hierarchy_count(4, 2) == 11);
  CHECK(hierarchy_count(4, 0) == 1);
  CHECK(hierarchy_count(4, 4) == 16);
  CHECK(hierarchy_count(4, 9) == 16);            // terminates at tier J
  CHECK(hierarchy_count(48, 5) == 1925357ull);   // large-run planning scale
  CHECK(enumerate_indices(4, 2).size() == 11);
  CHECK(enumerate_indices(6, 0).size() == 1);
  CHECK_THROWS_AS(enumerate_indices(48, 5, 1u << 20), CapacityError);
  try {
    enumerate_indices(48, 5, 1u << 20);
  } catch (const CapacityError& e) {
    CHECK(e.count == 1925357ull);
    CHECK(e.budget == (1u << 20));
  }
  CHECK_THROWS_AS(hierarchy_count(0, 1), ShapeError);
  CHECK_THROWS_AS(hierarchy_count(63, 1), ShapeError);
}

TEST_CASE("index ordering is (tier, numeric) and complete") {
  const auto masks = enumerate_indices(5, 3);
  REQUIRE(masks.size() == 1 + 5 + 10 + 10);
  for (std::size_t i = 0; i + 1 < masks.size(); ++i) {
    const int ta = __builtin_popcountll(masks[i]);
    const int tb = __builtin_popcountll(masks[i + 1]);
    CHECK(ta <= tb);
    if (ta == tb) CHECK(masks[i] < masks[i + 1]);
  }
  std::vector<std::uint64_t> sorted = masks;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("string count theta") {
  CHECK(theta(0, 3) == 0);
  CHECK(theta((1u << 1) | (1u << 3), 3) == 2);
  CHECK(theta(1u << 2, 1) == 0);
  CHECK(theta((1u << 0) | (1u << 2) | (1u << 5), 4) == 2);
}

TEST_CASE("root-only state evolves as pure von Neumann") {
  const auto table = two_lead_table(0.7, 0.3, 2.0, 0.5, 1);
  const auto ops = build_fock_operators(1);
  const Mat H = 0.3 * ops.number(0);
  const auto h = build_hierarchy(table, H, 4);
  REQUIRE(h.count == 16);

  BlockVector in = h.make_state(), out = h.make_state();
  Mat rho(2, 2);
  rho << 0.7, cplx(0.1, 0.2), cplx(0.1, -0.2), 0.3;
  in.block(0) = rho;
  h.apply_generator(in, out);
  const Mat expect = -I * (H * rho - rho * H);
  CHECK((out.block(0) - expect).cwiseAbs().maxCoeff() < 1e-15);
  // tier-1 blocks are fed by the root through the couplings
  double tier1 = 0.0;
  for (std::size_t i = 1; i <= 4; ++i)
    tier1 += out.block(i).cwiseAbs().maxCoeff();
  CHECK(tier1 > 0.1);
}

TEST_CASE("generator conserves the root trace and is linear") {
  const auto table = two_lead_table(0.6, 0.4, 2.0, 6.0, 2, 0.8, -0.3);
  const auto ops = build_fock_operators(1);
  const Mat H = 0.25 * ops.number(0);
  const auto h = build_hierarchy(table, H, 3);

  std::mt19937 rng(7);
  std::normal_distribution<double> g;
  auto random_state = [&]() {
    BlockVector v = h.make_state();
    for (Eigen::Index i = 0; i < v.data.size(); ++i)
      v.data[i] = cplx(g(rng), g(rng));
    return v;
  };

  BlockVector x = random_state(), y = random_state();
  BlockVector ox = h.make_state(), oy = h.make_state(), oz = h.make_state();
  h.apply_generator(x, ox);
  CHECK(std::abs(ox.block(0).trace()) < 1e-12 * x.norm());

  const cplx a(0.3, -1.1), b(-0.8, 0.4);
  BlockVector z = h.make_state();
  z.data = a * x.data + b * y.data;
  h.apply_generator(y, oy);
  h.apply_generator(z, oz);
  CHECK((oz.data - a * ox.data - b * oy.data).norm() < 1e-12 * oz.data.norm());

  SECTION("worker count does not change the result") {
    BlockVector o2 = h.make_state();
    h.apply_generator(x, o2, 3);
    CHECK((o2.data - ox.data).norm() == 0.0);
  }
}

TEST_CASE("geometry validation") {
  const auto table = two_lead_table(0.7, 0.3, 2.0, 0.5, 1);
  const auto ops = build_fock_operators(1);
  const Mat H = 0.3 * ops.number(0);
  const auto h = build_hierarchy(table, H, 2);
  BlockVector wrong(h.count + 1, h.dim), out = h.make_state();
  CHECK_THROWS_AS(h.apply_generator(wrong, out), ShapeError);
  Mat bad(2, 2);
  bad << 0.0, 1.0, 0.0, 0.0;  // not Hermitian
  CHECK_THROWS_AS(build_hierarchy(table, bad, 2), ShapeError);
}

TEST_CASE("exact termination reproduces the closed-form solution (K=1)") {
  // Noninteracting single level, two hot leads, one pole per channel:
  // at L = J = 4 the hierarchy closes with no truncation error, so the
  // steady state and spectral function must match the pole-model NEGF
  // results to machine precision.
  const double eps = 0.3;
  const auto table = two_lead_table(0.7, 0.3, 2.0, 0.5, 1);
  const auto ops = build_fock_operators(1);
  const Mat H = eps * ops.number(0);
  const auto h = build_hierarchy(table, H, 4);
  const Mat M = dense_generator(h);

  Eigen::ComplexEigenSolver<Mat> es(M);
  REQUIRE(es.info() == Eigen::Success);

  SECTION("dissipativity: spectrum in the closed left half-plane") {
    CHECK(es.eigenvalues().real().maxCoeff() < 1e-10);
  }

  // steady state = null vector, normalized to unit root trace
  Eigen::Index i0 = 0;
  es.eigenvalues().cwiseAbs().minCoeff(&i0);
  REQUIRE(std::abs(es.eigenvalues()[i0]) < 1e-12);
  BlockVector ss = h.make_state();
  ss.data = es.eigenvectors().col(i0);
  const cplx tr = ss.block(0).trace();
  REQUIRE(std::abs(tr) > 1e-8);
  ss.data /= tr;

  SECTION("root block is Hermitian, unit trace, physical occupation") {
    const Mat r = ss.block(0);
    CHECK((r - r.adjoint()).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(std::abs(r.trace() - 1.0) < 1e-14);
    // frozen value from the independent reference implementation
    const double n = (ops.number(0) * r).trace().real();
    CHECK(n == Approx(0.459027313).margin(2e-9));
  }

  SECTION("spectral function matches the closed form at test frequencies") {
    const Eigen::Index N = M.rows();
    const Mat Id = Mat::Identity(N, N);
    const Mat adag = ops.creator(0), a = ops.annihilators[0];
    for (double w : {-1.7, -0.4, 0.0, 0.9, 2.3}) {
      // left-seeded correlation states, no tier parity factor
      BlockVector r1 = h.make_state(), r2 = h.make_state();
      for (std::size_t i = 0; i < h.count; ++i) {
        r1.block(i) = adag * ss.block(i);
        r2.block(i) = a * ss.block(i);
      }
      // min-norm solve: at w=0 the operator is singular along the steady
      // state, whose contribution to the traced observable vanishes
      const Vec x1 =
          Mat(-M - I * w * Id).completeOrthogonalDecomposition().solve(r1.data);
      const Vec x2 =
          Mat(-M + I * w * Id).completeOrthogonalDecomposition().solve(r2.data);
      Eigen::Map<const Mat> X1(x1.data(), 2, 2), X2(x2.data(), 2, 2);
      const double A = ((a * X1).trace() / PI).real() +
                       ((adag * X2).trace() / PI).real();
      const double exact = -green_retarded(table, w, eps).imag() / PI;
      CAPTURE(w);
      CHECK(A == Approx(exact).epsilon(1e-11));
    }
  }
}

TEST_CASE("exact termination under bias (K=2, complex gamma)") {
  // Two poles per channel and a finite bias exercise the mu-shifted
  // complex decay rates and the conjugate-mode eta pairing.
  const double eps = -0.4;
  const auto table = two_lead_table(0.8, 0.5, 3.0, 2.0, 2, 0.7, -0.2);
  const auto ops = build_fock_operators(1);
  const Mat H = eps * ops.number(0);
  const auto h = build_hierarchy(table, H, 8);
  REQUIRE(h.count == 256);
  const Mat M = dense_generator(h);

  // steady state by bordered solve: replace the first equation with the
  // root-trace normalization Tr rho^(0) = 1
  const Eigen::Index N = M.rows();
  Mat Msys = M;
  Vec rhs = Vec::Zero(N);
  Msys.row(0).setZero();
  Msys(0, 0) = 1.0;  // coefficient of rho00
  Msys(0, 3) = 1.0;  // coefficient of rho11 (column-major 2x2 block)
  rhs(0) = 1.0;
  const Vec sv = Msys.partialPivLu().solve(rhs);
  CHECK((M * sv).tail(N - 1).norm() < 1e-10);

  BlockVector ss = h.make_state();
  ss.data = sv;
  const Mat r = ss.block(0);
  CHECK(std::abs(r.trace() - 1.0) < 1e-12);
  CHECK((r - r.adjoint()).cwiseAbs().maxCoeff() < 1e-12);

  const Mat Id = Mat::Identity(N, N);
  const Mat adag = ops.creator(0), a = ops.annihilators[0];
  for (double w : {-1.7, 0.0, 0.9}) {
    BlockVector r1 = h.make_state(), r2 = h.make_state();
    for (std::size_t i = 0; i < h.count; ++i) {
      r1.block(i) = adag * ss.block(i);
      r2.block(i) = a * ss.block(i);
    }
    const Vec x1 =
        Mat(-M - I * w * Id).completeOrthogonalDecomposition().solve(r1.data);
    const Vec x2 =
        Mat(-M + I * w * Id).completeOrthogonalDecomposition().solve(r2.data);
    Eigen::Map<const Mat> X1(x1.data(), 2, 2), X2(x2.data(), 2, 2);
    const double A =
        ((a * X1).trace() / PI).real() + ((adag * X2).trace() / PI).real();
    const double exact = -green_retarded(table, w, eps).imag() / PI;
    CAPTURE(w);
    CHECK(A == Approx(exact).epsilon(1e-10));
  }
}

TEST_CASE("snapshot round-trip") {
  const auto table = two_lead_table(0.5, 0.5, 2.0, 1.0, 1);
  const auto ops = build_fock_operators(1);
  const Mat H = 0.1 * ops.number(0);
  const auto h = build_hierarchy(table, H, 2);

  BlockVector v = h.make_state();
  for (Eigen::Index i = 0; i < v.data.size(); ++i)
    v.data[i] = cplx(std::sin(0.1 * double(i)), std::cos(0.3 * double(i)));
  const std::string path = "snapshot_roundtrip.bin";
  save_snapshot(path, h, v);
  const BlockVector back = load_snapshot(path, h);
  CHECK((back.data - v.data).norm() == 0.0);

  const auto h2 = build_hierarchy(table, H, 3);
  CHECK_THROWS_AS(load_snapshot(path, h2), ShapeError);
  std::remove(path.c_str());
}
