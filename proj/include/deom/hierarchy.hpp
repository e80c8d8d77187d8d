#pragma once

// Truncated dissipaton-density-operator (DDO) index space and the
// equation-of-motion generator applied as a sparse block operator.
//
// Each DDO is labeled by a bit-set over the J reservoir modes (fermionic
// occupations); the generator couples a DDO to its tier-up and tier-down
// neighbors with Jordan-Wigner string signs. The sign and conjugation
// conventions below were pinned by requiring machine-precision agreement
// with the closed-form noninteracting solution at exact termination
// (L = J), where the hierarchy has no truncation error.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "bath.hpp"
#include "common.hpp"
#include "errors.hpp"

namespace deom {

// Number of DDO blocks: 1 + sum_{l=1..L} C(J, l), guarded against overflow.
inline std::uint64_t hierarchy_count(int J, int L) {
  if (J < 1 || J > 62 || L < 0)
    throw ShapeError("hierarchy needs 1 <= J <= 62 and L >= 0");
  std::uint64_t total = 1, binom = 1;
  for (int l = 1; l <= std::min(L, J); ++l) {
    binom = binom * std::uint64_t(J - l + 1) / std::uint64_t(l);
    if (binom > (std::uint64_t(1) << 62) - total)
      throw CapacityError(~std::uint64_t(0), std::uint64_t(1) << 62);
    total += binom;
  }
  return total;
}

// All bit-sets with popcount <= L, ordered by (tier, numeric value).
inline std::vector<std::uint64_t> enumerate_indices(
    int J, int L, std::uint64_t budget = std::uint64_t(1) << 24) {
  const std::uint64_t n = hierarchy_count(J, L);
  if (n > budget) throw CapacityError(n, budget);
  std::vector<std::uint64_t> masks;
  masks.reserve(std::size_t(n));
  masks.push_back(0);
  std::vector<std::uint64_t> cur = {0};
  for (int l = 1; l <= std::min(L, J); ++l) {
    std::vector<std::uint64_t> next;
    for (std::uint64_t m : cur) {
      // extend by any mode above the highest set bit: each tier-l set is
      // produced exactly once, in increasing numeric order per parent
      const int lo = m == 0 ? 0 : 64 - __builtin_clzll(m);
      for (int j = lo; j < J; ++j) next.push_back(m | (std::uint64_t(1) << j));
    }
    std::sort(next.begin(), next.end());
    masks.insert(masks.end(), next.begin(), next.end());
    cur.swap(next);
  }
  return masks;
}

// Inclusive occupation count theta_j = sum_{k<=j} n_k in the global order.
inline int theta(std::uint64_t bits, int j) {
  return __builtin_popcountll(bits & ((std::uint64_t(2) << j) - 1));
}

// One off-diagonal generator term: out_slot gains
//   cL * op * block(src) + cR * block(src) * op.
struct GenLink {
  int src;       // source slot
  int mode;      // mode index j driving this transition
  bool up;       // true: src is one tier above the output slot
  int op;        // index into Hierarchy::ops
  cplx cL, cR;   // left/right coefficients (signs, -i, eta factors)
};

// Flat state storage: contiguous complex blocks, one dim x dim matrix per
// DDO slot.
struct BlockVector {
  std::size_t count = 0;
  int dim = 0;
  Vec data;

  BlockVector() = default;
  BlockVector(std::size_t count, int dim)
      : count(count), dim(dim), data(Vec::Zero(Eigen::Index(count) * dim * dim)) {}

  Eigen::Map<Mat> block(std::size_t i) {
    return {data.data() + i * std::size_t(dim) * dim, dim, dim};
  }
  Eigen::Map<const Mat> block(std::size_t i) const {
    return {data.data() + i * std::size_t(dim) * dim, dim, dim};
  }
  void set_zero() { data.setZero(); }
  double norm() const { return data.norm(); }
};

struct Hierarchy {
  int J = 0, L = 0, dim = 0;
  std::size_t count = 0;
  ModeTable table;
  Mat H;  // system Hamiltonian

  std::vector<std::uint64_t> masks;            // slot -> bit-set
  std::unordered_map<std::uint64_t, int> slot; // bit-set -> slot
  std::vector<int> tier;
  std::vector<cplx> gamma_n;                   // sum of occupied gamma_j

  std::vector<Mat> ops;                        // 2 per orbital: a_u, a_u^dag
  std::vector<std::size_t> link_offset;        // CSR over output slots
  std::vector<GenLink> links;

  // eigen-decomposition of H for the solvers' block-diagonal inverses
  Eigen::VectorXd evals;
  Mat evecs;

  BlockVector make_state() const { return BlockVector(count, dim); }

  int op_index(int u, int sigma) const { return 2 * u + (sigma > 0 ? 1 : 0); }

  // Full generator: out = d(state)/dt.
  void apply_generator(const BlockVector& in, BlockVector& out,
                       int workers = 1) const {
    apply_parts(in, out, workers, true, true);
  }

  // Off-diagonal part only (tier-up + tier-down couplings).
  void apply_coupling(const BlockVector& in, BlockVector& out,
                      int workers = 1) const {
    apply_parts(in, out, workers, false, true);
  }

  void apply_parts(const BlockVector& in, BlockVector& out, int workers,
                   bool diagonal, bool coupling) const {
    if (in.count != count || in.dim != dim || out.count != count ||
        out.dim != dim)
      throw ShapeError("state does not match hierarchy geometry");
    parallel_for(count, workers, [&](std::size_t lo, std::size_t hi) {
      Mat acc(dim, dim);
      for (std::size_t i = lo; i < hi; ++i) {
        acc.setZero();
        if (diagonal) {
          const auto b = in.block(i);
          acc.noalias() -= I * (H * b - b * H);
          acc -= gamma_n[i] * b;
        }
        if (coupling) {
          for (std::size_t l = link_offset[i]; l < link_offset[i + 1]; ++l) {
            const GenLink& lk = links[l];
            const auto s = in.block(std::size_t(lk.src));
            const Mat& op = ops[std::size_t(lk.op)];
            acc.noalias() += lk.cL * (op * s);
            acc.noalias() += lk.cR * (s * op);
          }
        }
        out.block(i) = acc;
      }
    });
  }
};

inline Hierarchy build_hierarchy(const ModeTable& table, const Mat& H_S,
                                 int L,
                                 std::uint64_t budget = std::uint64_t(1)
                                                        << 22) {
  table.check();
  Hierarchy h;
  h.J = table.size();
  h.L = std::min(L, h.J);  // the fermionic hierarchy terminates at tier J
  h.dim = int(H_S.rows());
  if (H_S.rows() != H_S.cols()) throw ShapeError("H_S must be square");
  if ((H_S - H_S.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
    throw ShapeError("H_S must be Hermitian");
  int max_u = 0;
  for (const auto& m : table.modes) max_u = std::max(max_u, m.u);
  if ((1 << (max_u + 1)) > h.dim)
    throw ShapeError("mode table references an orbital outside H_S");
  h.table = table;
  h.H = H_S;

  h.masks = enumerate_indices(h.J, h.L, budget);
  h.count = h.masks.size();
  h.slot.reserve(h.count * 2);
  for (std::size_t i = 0; i < h.count; ++i)
    h.slot.emplace(h.masks[i], int(i));
  h.tier.resize(h.count);
  h.gamma_n.resize(h.count);
  for (std::size_t i = 0; i < h.count; ++i) {
    h.tier[i] = __builtin_popcountll(h.masks[i]);
    cplx g = 0.0;
    for (int j = 0; j < h.J; ++j)
      if (h.masks[i] >> j & 1) g += table.modes[std::size_t(j)].gamma;
    h.gamma_n[i] = g;
  }

  // system operators referenced by the links: a_u and a_u^dag built here
  // from the Jordan-Wigner construction on the impurity Fock space
  const int n_orb = max_u + 1;
  h.ops.resize(2 * std::size_t(n_orb));
  for (int u = 0; u < n_orb; ++u) {
    Mat a = Mat::Zero(h.dim, h.dim);
    for (int s = 0; s < h.dim; ++s) {
      if (!(s >> u & 1)) continue;
      const int below = s & ((1 << u) - 1);
      const double sign = (__builtin_popcount(below) & 1) ? -1.0 : 1.0;
      a(s ^ (1 << u), s) = sign;
    }
    h.ops[std::size_t(h.op_index(u, -1))] = a;
    h.ops[std::size_t(h.op_index(u, +1))] = a.adjoint();
  }

  // Couplings, grouped by output slot. Signs use the inclusive string
  // count theta on whichever of the two masks contains mode j; both
  // directions then carry the same (-1)^theta structure and the pinned
  // relative signs between left and right products.
  h.link_offset.assign(h.count + 1, 0);
  std::vector<GenLink> tmp;
  for (std::size_t i = 0; i < h.count; ++i) {
    const std::uint64_t m = h.masks[i];
    const int n = h.tier[i];
    h.link_offset[i] = tmp.size();
    for (int j = 0; j < h.J; ++j) {
      const auto& mode = h.table.modes[std::size_t(j)];
      const int jb = h.table.conjugate(j);
      const auto& conj_mode = h.table.modes[std::size_t(jb)];
      if (m >> j & 1) {  // tier-down neighbor feeds this block
        const int src = h.slot.at(m & ~(std::uint64_t(1) << j));
        const double sg = theta(m, j) & 1 ? -1.0 : 1.0;
        const double sgn = (n & 1) ? -sg : sg;
        GenLink lk;
        lk.src = src;
        lk.mode = j;
        lk.up = false;
        lk.op = h.op_index(mode.u, mode.sigma);
        lk.cL = I * sg * mode.eta;
        lk.cR = I * sgn * std::conj(conj_mode.eta);
        tmp.push_back(lk);
      } else if (n + 1 <= h.L) {  // tier-up neighbor feeds this block
        const std::uint64_t mw = m | (std::uint64_t(1) << j);
        const int src = h.slot.at(mw);
        const double sg = theta(mw, j) & 1 ? -1.0 : 1.0;
        const double sgn = (n & 1) ? -sg : sg;
        GenLink lk;
        lk.src = src;
        lk.mode = j;
        lk.up = true;
        lk.op = h.op_index(conj_mode.u, conj_mode.sigma);
        lk.cL = I * sg;
        lk.cR = -I * sgn;
        tmp.push_back(lk);
      }
    }
  }
  h.link_offset[h.count] = tmp.size();
  h.links = std::move(tmp);

  Eigen::SelfAdjointEigenSolver<Mat> es(h.H);
  h.evals = es.eigenvalues();
  h.evecs = es.eigenvectors();
  return h;
}

// Snapshot layout: four little-endian u64 header fields (J, L, dim,
// count) followed by the blocks as raw complex<double> pairs in slot
// order, column-major within each block.
inline void save_snapshot(const std::string& path, const Hierarchy& h,
                          const BlockVector& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  const std::uint64_t header[4] = {std::uint64_t(h.J), std::uint64_t(h.L),
                                   std::uint64_t(h.dim),
                                   std::uint64_t(h.count)};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(v.data.data()),
            std::streamsize(sizeof(cplx)) * v.data.size());
  if (!out) throw Error("short write to " + path);
}

inline BlockVector load_snapshot(const std::string& path,
                                 const Hierarchy& h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::uint64_t header[4];
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || header[0] != std::uint64_t(h.J) ||
      header[1] != std::uint64_t(h.L) || header[2] != std::uint64_t(h.dim) ||
      header[3] != std::uint64_t(h.count))
    throw ShapeError("snapshot " + path + " does not match this hierarchy");
  BlockVector v(h.count, h.dim);
  in.read(reinterpret_cast<char*>(v.data.data()),
          std::streamsize(sizeof(cplx)) * v.data.size());
  if (!in) throw Error("short read from " + path);
  return v;
}

}  // namespace deom
