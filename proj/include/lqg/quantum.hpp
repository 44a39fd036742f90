#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/rng.hpp"

// Noiseless statevector simulation of the style-conditioned SU(4) ansatz.
// Amplitudes are indexed with qubit 0 as the least-significant bit. All
// expectation values are exact (infinite-shot); gradients are computed by an
// adjoint sweep through the circuit.
namespace lqg::q {

using cplx = std::complex<double>;

struct StateVector {
  int num_qubits = 0;
  Eigen::VectorXcd amps;

  static StateVector zero_state(int num_qubits);
  double squared_norm() const { return amps.squaredNorm(); }
};

// Gate conventions (frozen):
//   U3(theta, phi, lambda) = [[cos(t/2),            -e^{i lambda} sin(t/2)],
//                             [e^{i phi} sin(t/2),   e^{i(phi+lambda)} cos(t/2)]]
//   RY(t) = exp(-i t Y / 2),  RZ(t) = exp(-i t Z / 2)
Eigen::Matrix2cd u3_matrix(double theta, double phi, double lambda);
Eigen::Matrix2cd ry_matrix(double theta);
Eigen::Matrix2cd rz_matrix(double theta);

void apply_single_qubit(StateVector& s, int qubit, const Eigen::Matrix2cd& m);
void apply_cnot(StateVector& s, int control, int target);
// 4x4 unitary on qubits (a, b); subspace basis index = bit(a) + 2*bit(b).
void apply_two_qubit(StateVector& s, int a, int b, const Eigen::Matrix4cd& m);

// One SU(4) box on qubits (a, b), 15 angles, applied in this gate order:
//   U3(t0..2) on a, U3(t3..5) on b, CNOT(b->a), RZ(t6) on a, RY(t7) on b,
//   CNOT(a->b), RY(t8) on b, CNOT(b->a), U3(t9..11) on a, U3(t12..14) on b.
// CNOT(x->y) means control x, target y.
Eigen::Matrix4cd su4_matrix(std::span<const double> angles15);
void su4_block(StateVector& s, int a, int b, std::span<const double> angles15);

constexpr int kAnglesPerBox = 15;
constexpr int kParamsPerBox = 30;  // weight + bias per angle

struct Box {
  int a = 0, b = 0;
};

// Which physical qubit (a or b) the rotation behind angle slot k acts on;
// this fixes the noise component xi_q entering the angle map for that slot.
int slot_qubit(const Box& box, int slot);

// Brick pattern: per layer, sublayer A pairs (0,1),(2,3),... then sublayer B
// pairs (1,2),(3,4),...,(Q-1,0 wraparound). Q boxes per layer; Q must be even.
struct CircuitSpec {
  int qubits = 0;
  int layers = 0;
  std::vector<Box> boxes;

  static CircuitSpec make(int qubits, int layers);
  int num_boxes() const { return static_cast<int>(boxes.size()); }
};

// Total trainable parameter count 30*Q*L; rejects odd Q.
std::int64_t count_params(int qubits, int layers);

// Trainable noise-to-angle map: theta = 2*pi*tanh(xi_q * W + b) per slot.
struct StyleParams {
  int qubits = 0;
  int layers = 0;
  Eigen::MatrixXd weight;  // [num_boxes x 15]
  Eigen::MatrixXd bias;    // [num_boxes x 15]

  static StyleParams zeros(int qubits, int layers);
  static StyleParams lecun_init(int qubits, int layers, std::uint64_t seed);
  std::int64_t param_count() const;
};

Eigen::MatrixXd angles_from_noise(const CircuitSpec& circ, const Eigen::MatrixXd& weight,
                                  const Eigen::MatrixXd& bias, const Eigen::VectorXd& xi);

// Applies the box list in order to |0...0> .
StateVector run_boxes(int qubits, std::span<const Box> boxes, const Eigen::MatrixXd& angles);
StateVector run_circuit(const CircuitSpec& circ, const Eigen::MatrixXd& angles);

// Per-qubit expectations, ordered (<X_0>..<X_{Q-1}>, <Z_0>..<Z_{Q-1}>).
Eigen::VectorXd measure_xz(const StateVector& s);

// phi = (sum_q cx[q] X_q + cz[q] Z_q) |psi>
Eigen::VectorXcd apply_observable(const StateVector& s, const Eigen::VectorXd& cx,
                                  const Eigen::VectorXd& cz);

Eigen::VectorXd generate_latent(const CircuitSpec& circ, const StyleParams& params,
                                const Eigen::VectorXd& xi);

// d(cot . latent)/d(angles) via the adjoint sweep, over an explicit box list.
Eigen::MatrixXd angle_grad_adjoint(int qubits, std::span<const Box> boxes,
                                   const Eigen::MatrixXd& angles,
                                   const Eigen::VectorXd& cotangent);

struct StyleGrads {
  Eigen::MatrixXd weight;  // same shapes as StyleParams
  Eigen::MatrixXd bias;
};

// Vector-Jacobian product of generate_latent w.r.t. (W, b) for one sample.
StyleGrads latent_vjp(const CircuitSpec& circ, const StyleParams& params,
                      const Eigen::VectorXd& xi, const Eigen::VectorXd& cotangent);

// Batched forms. Rows of xi/cotangent are samples; outputs use a fixed
// sample-order reduction so results do not depend on the thread count.
Eigen::MatrixXd generate_latent_batch(const CircuitSpec& circ, const StyleParams& params,
                                      const Eigen::MatrixXd& xi, int threads);
StyleGrads latent_vjp_batch(const CircuitSpec& circ, const StyleParams& params,
                            const Eigen::MatrixXd& xi, const Eigen::MatrixXd& cotangent,
                            int threads);

}  // namespace lqg::q
