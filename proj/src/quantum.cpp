#include "lqg/quantum.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "lqg/parallel.hpp"

namespace lqg::q {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr cplx kI{0.0, 1.0};

void check_qubit(int q, int num_qubits, const char* what) {
  if (q < 0 || q >= num_qubits)
    throw ConfigError(std::string(what) + ": qubit index " + std::to_string(q) +
                      " out of range for " + std::to_string(num_qubits) + " qubits");
}

Eigen::Matrix4cd on_a(const Eigen::Matrix2cd& u) {  // acts on subspace LSB
  Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
  m.block<2, 2>(0, 0) = u;
  m.block<2, 2>(2, 2) = u;
  return m;
}

Eigen::Matrix4cd on_b(const Eigen::Matrix2cd& u) {
  Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      m(2 * i, 2 * j) = u(i, j);
      m(2 * i + 1, 2 * j + 1) = u(i, j);
    }
  return m;
}

Eigen::Matrix4cd cnot_b_to_a() {  // control b (high bit), target a (low bit)
  Eigen::Matrix4cd m = Eigen::Matrix4cd::Identity();
  m(2, 2) = m(3, 3) = 0;
  m(2, 3) = m(3, 2) = 1;
  return m;
}

Eigen::Matrix4cd cnot_a_to_b() {  // control a, target b
  Eigen::Matrix4cd m = Eigen::Matrix4cd::Identity();
  m(1, 1) = m(3, 3) = 0;
  m(1, 3) = m(3, 1) = 1;
  return m;
}

// The 10 constituent factors of one box, in application order.
std::array<Eigen::Matrix4cd, 10> su4_factors(std::span<const double> t) {
  return {
      on_a(u3_matrix(t[0], t[1], t[2])),   // 0
      on_b(u3_matrix(t[3], t[4], t[5])),   // 1
      cnot_b_to_a(),                       // 2
      on_a(rz_matrix(t[6])),               // 3
      on_b(ry_matrix(t[7])),               // 4
      cnot_a_to_b(),                       // 5
      on_b(ry_matrix(t[8])),               // 6
      cnot_b_to_a(),                       // 7
      on_a(u3_matrix(t[9], t[10], t[11])), // 8
      on_b(u3_matrix(t[12], t[13], t[14])) // 9
  };
}

// angle slot -> (factor index, angle position within that factor's gate)
struct SlotRef {
  int factor;
  int pos;  // 0..2 for U3, 0 for RY/RZ
};
constexpr std::array<SlotRef, kAnglesPerBox> kSlotRefs = {{
    {0, 0}, {0, 1}, {0, 2},   // U3 on a
    {1, 0}, {1, 1}, {1, 2},   // U3 on b
    {3, 0},                   // RZ on a
    {4, 0},                   // RY on b
    {6, 0},                   // RY on b
    {8, 0}, {8, 1}, {8, 2},   // U3 on a
    {9, 0}, {9, 1}, {9, 2},   // U3 on b
}};

Eigen::Matrix2cd du3(double theta, double phi, double lambda, int pos) {
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  const cplx el = std::exp(kI * lambda), ep = std::exp(kI * phi);
  Eigen::Matrix2cd d;
  switch (pos) {
    case 0:  // d/dtheta
      d << -0.5 * s, -0.5 * el * c, 0.5 * ep * c, -0.5 * ep * el * s;
      return d;
    case 1:  // d/dphi
      d << 0, 0, kI * ep * s, kI * ep * el * c;
      return d;
    default:  // d/dlambda
      d << 0, -kI * el * s, 0, kI * ep * el * c;
      return d;
  }
}

Eigen::Matrix2cd dry(double theta) {
  const double c = 0.5 * std::cos(theta / 2), s = 0.5 * std::sin(theta / 2);
  Eigen::Matrix2cd d;
  d << -s, -c, c, -s;
  return d;
}

Eigen::Matrix2cd drz(double theta) {
  Eigen::Matrix2cd d = Eigen::Matrix2cd::Zero();
  d(0, 0) = -0.5 * kI * std::exp(-0.5 * kI * theta);
  d(1, 1) = 0.5 * kI * std::exp(0.5 * kI * theta);
  return d;
}

// Derivative of factor j w.r.t. the angle at (j, pos), embedded in the pair.
Eigen::Matrix4cd factor_derivative(std::span<const double> t, int factor, int pos) {
  switch (factor) {
    case 0: return on_a(du3(t[0], t[1], t[2], pos));
    case 1: return on_b(du3(t[3], t[4], t[5], pos));
    case 3: return on_a(drz(t[6]));
    case 4: return on_b(dry(t[7]));
    case 6: return on_b(dry(t[8]));
    case 8: return on_a(du3(t[9], t[10], t[11], pos));
    default: return on_b(du3(t[12], t[13], t[14], pos));
  }
}

}  // namespace

StateVector StateVector::zero_state(int num_qubits) {
  if (num_qubits < 1 || num_qubits > 30)
    throw ConfigError("qubit count out of range: " + std::to_string(num_qubits));
  StateVector s;
  s.num_qubits = num_qubits;
  s.amps = Eigen::VectorXcd::Zero(1LL << num_qubits);
  s.amps(0) = 1.0;
  return s;
}

Eigen::Matrix2cd u3_matrix(double theta, double phi, double lambda) {
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  Eigen::Matrix2cd m;
  m << c, -std::exp(kI * lambda) * s, std::exp(kI * phi) * s,
      std::exp(kI * (phi + lambda)) * c;
  return m;
}

Eigen::Matrix2cd ry_matrix(double theta) {
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  Eigen::Matrix2cd m;
  m << c, -s, s, c;
  return m;
}

Eigen::Matrix2cd rz_matrix(double theta) {
  Eigen::Matrix2cd m = Eigen::Matrix2cd::Zero();
  m(0, 0) = std::exp(-0.5 * kI * theta);
  m(1, 1) = std::exp(0.5 * kI * theta);
  return m;
}

void apply_single_qubit(StateVector& s, int qubit, const Eigen::Matrix2cd& m) {
  check_qubit(qubit, s.num_qubits, "apply_single_qubit");
  const std::uint64_t dim = 1ULL << s.num_qubits;
  const std::uint64_t step = 1ULL << qubit;
  cplx* a = s.amps.data();
  const cplx m00 = m(0, 0), m01 = m(0, 1), m10 = m(1, 0), m11 = m(1, 1);
  for (std::uint64_t base = 0; base < dim; base += 2 * step) {
    for (std::uint64_t i = base; i < base + step; ++i) {
      const cplx v0 = a[i], v1 = a[i + step];
      a[i] = m00 * v0 + m01 * v1;
      a[i + step] = m10 * v0 + m11 * v1;
    }
  }
}

void apply_cnot(StateVector& s, int control, int target) {
  check_qubit(control, s.num_qubits, "apply_cnot");
  check_qubit(target, s.num_qubits, "apply_cnot");
  if (control == target) throw ConfigError("apply_cnot: control equals target");
  const std::uint64_t dim = 1ULL << s.num_qubits;
  const std::uint64_t sc = 1ULL << control, st = 1ULL << target;
  cplx* a = s.amps.data();
  for (std::uint64_t i = 0; i < dim; ++i) {
    if ((i & sc) && !(i & st)) std::swap(a[i], a[i | st]);
  }
}

void apply_two_qubit(StateVector& s, int qa, int qb, const Eigen::Matrix4cd& m) {
  check_qubit(qa, s.num_qubits, "apply_two_qubit");
  check_qubit(qb, s.num_qubits, "apply_two_qubit");
  if (qa == qb) throw ConfigError("apply_two_qubit: identical qubits");
  const int p0 = std::min(qa, qb), p1 = std::max(qa, qb);
  const std::uint64_t sa = 1ULL << qa, sb = 1ULL << qb;
  const std::uint64_t dim = 1ULL << s.num_qubits;
  const std::uint64_t low = 1ULL << p0;
  const std::uint64_t mid = 1ULL << (p1 - p0 - 1);
  const std::uint64_t high = dim >> (p1 + 1);
  double* __restrict a = reinterpret_cast<double*>(s.amps.data());
  double mr[4][4], mi[4][4];
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      mr[r][c] = m(r, c).real();
      mi[r][c] = m(r, c).imag();
    }
  for (std::uint64_t h = 0; h < high; ++h) {
    const std::uint64_t hb = h << (p1 + 1);
    for (std::uint64_t md = 0; md < mid; ++md) {
      const std::uint64_t mb = hb | (md << (p0 + 1));
      for (std::uint64_t l = 0; l < low; ++l) {
        const std::uint64_t i0 = mb | l;
        const std::uint64_t j0 = 2 * i0, j1 = 2 * (i0 | sa), j2 = 2 * (i0 | sb),
                            j3 = 2 * (i0 | sa | sb);
        const double v0r = a[j0], v0i = a[j0 + 1];
        const double v1r = a[j1], v1i = a[j1 + 1];
        const double v2r = a[j2], v2i = a[j2 + 1];
        const double v3r = a[j3], v3i = a[j3 + 1];
        a[j0] = mr[0][0] * v0r - mi[0][0] * v0i + mr[0][1] * v1r - mi[0][1] * v1i +
                mr[0][2] * v2r - mi[0][2] * v2i + mr[0][3] * v3r - mi[0][3] * v3i;
        a[j0 + 1] = mr[0][0] * v0i + mi[0][0] * v0r + mr[0][1] * v1i + mi[0][1] * v1r +
                    mr[0][2] * v2i + mi[0][2] * v2r + mr[0][3] * v3i + mi[0][3] * v3r;
        a[j1] = mr[1][0] * v0r - mi[1][0] * v0i + mr[1][1] * v1r - mi[1][1] * v1i +
                mr[1][2] * v2r - mi[1][2] * v2i + mr[1][3] * v3r - mi[1][3] * v3i;
        a[j1 + 1] = mr[1][0] * v0i + mi[1][0] * v0r + mr[1][1] * v1i + mi[1][1] * v1r +
                    mr[1][2] * v2i + mi[1][2] * v2r + mr[1][3] * v3i + mi[1][3] * v3r;
        a[j2] = mr[2][0] * v0r - mi[2][0] * v0i + mr[2][1] * v1r - mi[2][1] * v1i +
                mr[2][2] * v2r - mi[2][2] * v2i + mr[2][3] * v3r - mi[2][3] * v3i;
        a[j2 + 1] = mr[2][0] * v0i + mi[2][0] * v0r + mr[2][1] * v1i + mi[2][1] * v1r +
                    mr[2][2] * v2i + mi[2][2] * v2r + mr[2][3] * v3i + mi[2][3] * v3r;
        a[j3] = mr[3][0] * v0r - mi[3][0] * v0i + mr[3][1] * v1r - mi[3][1] * v1i +
                mr[3][2] * v2r - mi[3][2] * v2i + mr[3][3] * v3r - mi[3][3] * v3i;
        a[j3 + 1] = mr[3][0] * v0i + mi[3][0] * v0r + mr[3][1] * v1i + mi[3][1] * v1r +
                    mr[3][2] * v2i + mi[3][2] * v2r + mr[3][3] * v3i + mi[3][3] * v3r;
      }
    }
  }
}

Eigen::Matrix4cd su4_matrix(std::span<const double> angles15) {
  if (angles15.size() != kAnglesPerBox)
    throw ConfigError("su4_matrix: expected 15 angles, got " + std::to_string(angles15.size()));
  const auto f = su4_factors(angles15);
  Eigen::Matrix4cd m = f[0];
  for (int j = 1; j < 10; ++j) m = f[j] * m;
  return m;
}

void su4_block(StateVector& s, int a, int b, std::span<const double> angles15) {
  apply_two_qubit(s, a, b, su4_matrix(angles15));
}

int slot_qubit(const Box& box, int slot) {
  const int factor = kSlotRefs[static_cast<std::size_t>(slot)].factor;
  // factors 0, 3, 8 act on qubit a; 1, 4, 6, 9 act on qubit b.
  return (factor == 0 || factor == 3 || factor == 8) ? box.a : box.b;
}

CircuitSpec CircuitSpec::make(int qubits, int layers) {
  if (qubits < 2 || qubits % 2 != 0)
    throw ConfigError("CircuitSpec: qubit count must be even and >= 2, got " +
                      std::to_string(qubits));
  if (layers < 1) throw ConfigError("CircuitSpec: layers must be >= 1");
  CircuitSpec c;
  c.qubits = qubits;
  c.layers = layers;
  for (int l = 0; l < layers; ++l) {
    for (int j = 0; j < qubits / 2; ++j) c.boxes.push_back({2 * j, 2 * j + 1});
    for (int j = 0; j < qubits / 2; ++j) c.boxes.push_back({2 * j + 1, (2 * j + 2) % qubits});
  }
  return c;
}

std::int64_t count_params(int qubits, int layers) {
  if (qubits < 2 || qubits % 2 != 0)
    throw ConfigError("count_params: qubit count must be even and >= 2, got " +
                      std::to_string(qubits));
  if (layers < 1) throw ConfigError("count_params: layers must be >= 1");
  return static_cast<std::int64_t>(kParamsPerBox) * qubits * layers;
}

StyleParams StyleParams::zeros(int qubits, int layers) {
  const auto circ = CircuitSpec::make(qubits, layers);
  StyleParams p;
  p.qubits = qubits;
  p.layers = layers;
  p.weight = Eigen::MatrixXd::Zero(circ.num_boxes(), kAnglesPerBox);
  p.bias = Eigen::MatrixXd::Zero(circ.num_boxes(), kAnglesPerBox);
  return p;
}

StyleParams StyleParams::lecun_init(int qubits, int layers, std::uint64_t seed) {
  StyleParams p = zeros(qubits, layers);
  RngStream rw(seed, "init.qgen.W"), rb(seed, "init.qgen.b");
  for (Eigen::Index i = 0; i < p.weight.rows(); ++i)
    for (Eigen::Index k = 0; k < p.weight.cols(); ++k) p.weight(i, k) = rw.normal();
  for (Eigen::Index i = 0; i < p.bias.rows(); ++i)
    for (Eigen::Index k = 0; k < p.bias.cols(); ++k) p.bias(i, k) = rb.normal();
  return p;
}

std::int64_t StyleParams::param_count() const { return count_params(qubits, layers); }

Eigen::MatrixXd angles_from_noise(const CircuitSpec& circ, const Eigen::MatrixXd& weight,
                                  const Eigen::MatrixXd& bias, const Eigen::VectorXd& xi) {
  if (xi.size() != circ.qubits)
    throw ConfigError("angles_from_noise: noise dim " + std::to_string(xi.size()) +
                      " != qubit count " + std::to_string(circ.qubits));
  Eigen::MatrixXd angles(circ.num_boxes(), kAnglesPerBox);
  for (int bx = 0; bx < circ.num_boxes(); ++bx) {
    const Box& box = circ.boxes[static_cast<std::size_t>(bx)];
    for (int k = 0; k < kAnglesPerBox; ++k) {
      const double u = xi(slot_qubit(box, k)) * weight(bx, k) + bias(bx, k);
      angles(bx, k) = kTwoPi * std::tanh(u);
    }
  }
  return angles;
}

StateVector run_boxes(int qubits, std::span<const Box> boxes, const Eigen::MatrixXd& angles) {
  StateVector s = StateVector::zero_state(qubits);
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    std::array<double, kAnglesPerBox> t;
    for (int k = 0; k < kAnglesPerBox; ++k) t[static_cast<std::size_t>(k)] = angles(static_cast<Eigen::Index>(j), k);
    su4_block(s, boxes[j].a, boxes[j].b, t);
  }
  return s;
}

StateVector run_circuit(const CircuitSpec& circ, const Eigen::MatrixXd& angles) {
  return run_boxes(circ.qubits, circ.boxes, angles);
}

Eigen::VectorXd measure_xz(const StateVector& s) {
  const int nq = s.num_qubits;
  const std::uint64_t dim = 1ULL << nq;
  Eigen::VectorXd out(2 * nq);
  const cplx* a = s.amps.data();
  for (int q = 0; q < nq; ++q) {
    const std::uint64_t step = 1ULL << q;
    double x = 0, z = 0;
    for (std::uint64_t base = 0; base < dim; base += 2 * step) {
      for (std::uint64_t i = base; i < base + step; ++i) {
        const cplx v0 = a[i], v1 = a[i + step];
        x += 2.0 * (std::real(v0) * std::real(v1) + std::imag(v0) * std::imag(v1));
        z += std::norm(v0) - std::norm(v1);
      }
    }
    out(q) = x;
    out(nq + q) = z;
  }
  return out;
}

Eigen::VectorXcd apply_observable(const StateVector& s, const Eigen::VectorXd& cx,
                                  const Eigen::VectorXd& cz) {
  const std::uint64_t dim = 1ULL << s.num_qubits;
  Eigen::VectorXcd phi = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(dim));
  const cplx* a = s.amps.data();
  cplx* p = phi.data();
  for (int q = 0; q < s.num_qubits; ++q) {
    const std::uint64_t step = 1ULL << q;
    const double wx = cx(q), wz = cz(q);
    if (wx == 0.0 && wz == 0.0) continue;
    for (std::uint64_t base = 0; base < dim; base += 2 * step) {
      for (std::uint64_t i = base; i < base + step; ++i) {
        const cplx v0 = a[i], v1 = a[i + step];
        p[i] += wx * v1 + wz * v0;
        p[i + step] += wx * v0 - wz * v1;
      }
    }
  }
  return phi;
}

Eigen::VectorXd generate_latent(const CircuitSpec& circ, const StyleParams& params,
                                const Eigen::VectorXd& xi) {
  const auto angles = angles_from_noise(circ, params.weight, params.bias, xi);
  return measure_xz(run_circuit(circ, angles));
}

Eigen::MatrixXd angle_grad_adjoint(int qubits, std::span<const Box> boxes,
                                   const Eigen::MatrixXd& angles,
                                   const Eigen::VectorXd& cotangent) {
  if (cotangent.size() != 2 * qubits)
    throw ConfigError("angle_grad_adjoint: cotangent dim must be 2*Q");
  StateVector psi = run_boxes(qubits, boxes, angles);
  StateVector lam{qubits, apply_observable(psi, cotangent.head(qubits), cotangent.tail(qubits))};

  Eigen::MatrixXd grads = Eigen::MatrixXd::Zero(angles.rows(), kAnglesPerBox);
  const std::uint64_t groups = 1ULL << (qubits - 2);
  for (int j = static_cast<int>(boxes.size()) - 1; j >= 0; --j) {
    const Box& box = boxes[static_cast<std::size_t>(j)];
    std::array<double, kAnglesPerBox> t;
    for (int k = 0; k < kAnglesPerBox; ++k) t[static_cast<std::size_t>(k)] = angles(j, k);
    const auto factors = su4_factors(t);

    // Prefix products P[j] = F_j ... F_1 and suffixes S[j] = F_10 ... F_{j+1}.
    std::array<Eigen::Matrix4cd, 11> prefix, suffix;
    prefix[0] = Eigen::Matrix4cd::Identity();
    for (int f = 0; f < 10; ++f) prefix[static_cast<std::size_t>(f + 1)] = factors[static_cast<std::size_t>(f)] * prefix[static_cast<std::size_t>(f)];
    suffix[10] = Eigen::Matrix4cd::Identity();
    for (int f = 9; f >= 0; --f) suffix[static_cast<std::size_t>(f)] = suffix[static_cast<std::size_t>(f + 1)] * factors[static_cast<std::size_t>(f)];

    const Eigen::Matrix4cd boxmat = prefix[10];
    apply_two_qubit(psi, box.a, box.b, boxmat.adjoint());  // psi is now pre-box

    // Reduced cross matrix T(c, r) = sum_groups psi_c conj(lam_r).
    const int p0 = std::min(box.a, box.b), p1 = std::max(box.a, box.b);
    const std::uint64_t sa = 1ULL << box.a, sb = 1ULL << box.b;
    Eigen::Matrix4cd T;
    {
      const std::uint64_t low = 1ULL << p0;
      const std::uint64_t mid = 1ULL << (p1 - p0 - 1);
      const std::uint64_t high = (4 * groups) >> (p1 + 1);
      const double* __restrict pv = reinterpret_cast<const double*>(psi.amps.data());
      const double* __restrict lv = reinterpret_cast<const double*>(lam.amps.data());
      double tr[16] = {0}, ti[16] = {0};
      for (std::uint64_t h = 0; h < high; ++h) {
        const std::uint64_t hb = h << (p1 + 1);
        for (std::uint64_t md = 0; md < mid; ++md) {
          const std::uint64_t mb = hb | (md << (p0 + 1));
          for (std::uint64_t l = 0; l < low; ++l) {
            const std::uint64_t i0 = mb | l;
            const std::uint64_t idx[4] = {2 * i0, 2 * (i0 | sa), 2 * (i0 | sb),
                                          2 * (i0 | sa | sb)};
            for (int c = 0; c < 4; ++c) {
              const double pr = pv[idx[c]], pi = pv[idx[c] + 1];
              for (int r = 0; r < 4; ++r) {
                const double lr = lv[idx[r]], li = lv[idx[r] + 1];
                tr[4 * c + r] += pr * lr + pi * li;
                ti[4 * c + r] += pi * lr - pr * li;
              }
            }
          }
        }
      }
      for (int c = 0; c < 4; ++c)
        for (int r = 0; r < 4; ++r) T(c, r) = cplx(tr[4 * c + r], ti[4 * c + r]);
    }

    for (int k = 0; k < kAnglesPerBox; ++k) {
      const auto ref = kSlotRefs[static_cast<std::size_t>(k)];
      const Eigen::Matrix4cd dM = suffix[static_cast<std::size_t>(ref.factor + 1)] *
                                  factor_derivative(t, ref.factor, ref.pos) *
                                  prefix[static_cast<std::size_t>(ref.factor)];
      grads(j, k) = 2.0 * std::real((dM * T).trace());
    }

    apply_two_qubit(lam, box.a, box.b, boxmat.adjoint());
  }
  return grads;
}

StyleGrads latent_vjp(const CircuitSpec& circ, const StyleParams& params,
                      const Eigen::VectorXd& xi, const Eigen::VectorXd& cotangent) {
  const auto angles = angles_from_noise(circ, params.weight, params.bias, xi);
  const auto dtheta = angle_grad_adjoint(circ.qubits, circ.boxes, angles, cotangent);
  StyleGrads g;
  g.weight = Eigen::MatrixXd::Zero(params.weight.rows(), params.weight.cols());
  g.bias = Eigen::MatrixXd::Zero(params.bias.rows(), params.bias.cols());
  for (int bx = 0; bx < circ.num_boxes(); ++bx) {
    const Box& box = circ.boxes[static_cast<std::size_t>(bx)];
    for (int k = 0; k < kAnglesPerBox; ++k) {
      const double xq = xi(slot_qubit(box, k));
      const double u = xq * params.weight(bx, k) + params.bias(bx, k);
      const double th = std::tanh(u);
      const double dthdu = kTwoPi * (1.0 - th * th);
      g.bias(bx, k) = dtheta(bx, k) * dthdu;
      g.weight(bx, k) = dtheta(bx, k) * dthdu * xq;
    }
  }
  return g;
}

Eigen::MatrixXd generate_latent_batch(const CircuitSpec& circ, const StyleParams& params,
                                      const Eigen::MatrixXd& xi, int threads) {
  const Eigen::Index n = xi.rows();
  Eigen::MatrixXd out(n, 2 * circ.qubits);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    out.row(static_cast<Eigen::Index>(i)) =
        generate_latent(circ, params, xi.row(static_cast<Eigen::Index>(i)).transpose())
            .transpose();
  });
  return out;
}

StyleGrads latent_vjp_batch(const CircuitSpec& circ, const StyleParams& params,
                            const Eigen::MatrixXd& xi, const Eigen::MatrixXd& cotangent,
                            int threads) {
  const Eigen::Index n = xi.rows();
  std::vector<StyleGrads> per_sample(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    per_sample[i] = latent_vjp(circ, params, xi.row(static_cast<Eigen::Index>(i)).transpose(),
                               cotangent.row(static_cast<Eigen::Index>(i)).transpose());
  });
  StyleGrads total;
  total.weight = Eigen::MatrixXd::Zero(params.weight.rows(), params.weight.cols());
  total.bias = Eigen::MatrixXd::Zero(params.bias.rows(), params.bias.cols());
  for (auto& g : per_sample) {  // fixed sample order, independent of threads
    total.weight += g.weight;
    total.bias += g.bias;
  }
  return total;
}

}  // namespace lqg::q
