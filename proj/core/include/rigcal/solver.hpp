#pragma once

// Sparse nonlinear least squares with Levenberg-Marquardt damping.
//
// A Problem owns parameter blocks and factors. Blocks live on one of three
// manifolds (Euclidean vectors, SO(3) rotations stored as quaternions, and a
// fixed-magnitude gravity sphere); steps are computed in each block's tangent
// space and applied through the block retraction, so factor Jacobians are
// always with respect to local (tangent) coordinates. Individual tangent
// coordinates can be frozen; frozen coordinates keep their value bit for bit.
//
// The objective is cost = sum_k rho_k(||r_k||^2) over all factors, with rho
// the identity for non-robust factors. Three-dimensional Euclidean blocks can
// be marked eliminable; with the Schur solver they are eliminated before the
// reduced linear solve, which is the intended treatment of plane and visual
// landmarks.

#include "rigcal/geometry.hpp"
#include "rigcal/jet.hpp"
#include "rigcal/sensor_models.hpp"
#include "rigcal/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace rigcal {

enum class BlockKind { kEuclidean, kRotation, kGravity };

struct ParameterBlock {
  BlockKind kind = BlockKind::kEuclidean;
  VecX value;  // Euclidean: n values; Rotation: quaternion xyzw; Gravity: 3-vector
  std::string name;
  bool eliminable = false;
  std::vector<std::uint8_t> frozen;  // per tangent coordinate

  int global_dim() const { return static_cast<int>(value.size()); }
  int local_dim() const {
    switch (kind) {
      case BlockKind::kRotation:
        return 3;
      case BlockKind::kGravity:
        return 2;
      default:
        return global_dim();
    }
  }
  bool fully_frozen() const {
    for (std::uint8_t f : frozen) {
      if (!f) return false;
    }
    return true;
  }
  Rotation as_rotation() const {
    return Rotation(Eigen::Quaterniond(value[3], value[0], value[1], value[2]));
  }
  void set_rotation(const Rotation& R) { value = R.quaternion().coeffs(); }
};

/// Applies a full local-dimension tangent step through the block's retraction.
/// Frozen coordinates of `delta` are zeroed before application.
void retract_block(ParameterBlock& block, const VecX& delta);

enum class LossType { kNone, kHuber, kCauchy };

/// Robust loss on the squared whitened residual norm s = ||r||^2.
struct Loss {
  LossType type = LossType::kNone;
  double scale = 1.0;  // Huber delta or Cauchy c, whitened units

  static Loss none() { return {}; }
  static Loss huber(double delta) { return {LossType::kHuber, delta}; }
  static Loss cauchy(double c) { return {LossType::kCauchy, c}; }

  /// rho(s) and rho'(s).
  void evaluate(double s, double* rho, double* drho) const;
};

class Factor {
 public:
  Factor(std::string category, std::vector<int> block_ids, int residual_dim, Loss loss)
      : category_(std::move(category)),
        blocks_(std::move(block_ids)),
        residual_dim_(residual_dim),
        loss_(loss) {}
  virtual ~Factor() = default;

  const std::string& category() const { return category_; }
  const std::vector<int>& blocks() const { return blocks_; }
  int residual_dim() const { return residual_dim_; }
  const Loss& loss() const { return loss_; }

  /// Evaluates the (whitened) residual and, when requested, the Jacobians with
  /// respect to each block's tangent coordinates (residual_dim x local_dim).
  /// Returning false drops the factor from the current iteration; the solver
  /// counts drops per category.
  virtual bool evaluate(const std::vector<const ParameterBlock*>& blocks, VecX* residual,
                        std::vector<MatX>* jacobians) const = 0;

 private:
  std::string category_;
  std::vector<int> blocks_;
  int residual_dim_;
  Loss loss_;
};

/// Wraps a scalar-generic functor into a Factor, computing Jacobians by
/// forward-mode autodiff directly in each block's tangent space. The functor
/// sees global block representations (Euclidean coords, quaternion xyzw, or a
/// gravity 3-vector) already perturbed through the retraction:
///
///   template <typename T> bool operator()(const T* const* params, T* residual) const;
///
/// TotalLocalDim must equal the sum of the bound blocks' local dimensions.
template <int TotalLocalDim, typename Functor>
class AutoDiffFactor final : public Factor {
 public:
  AutoDiffFactor(std::string category, std::vector<int> block_ids, int residual_dim, Loss loss,
                 Functor f)
      : Factor(std::move(category), std::move(block_ids), residual_dim, loss),
        functor_(std::move(f)) {}

  bool evaluate(const std::vector<const ParameterBlock*>& blocks, VecX* residual,
                std::vector<MatX>* jacobians) const override;

 private:
  Functor functor_;
};

class Problem {
 public:
  int add_block(BlockKind kind, VecX value, std::string name = {});
  int add_euclidean_block(const VecX& value, std::string name = {}) {
    return add_block(BlockKind::kEuclidean, value, std::move(name));
  }
  int add_rotation_block(const Rotation& R, std::string name = {}) {
    return add_block(BlockKind::kRotation, R.quaternion().coeffs(), std::move(name));
  }
  int add_gravity_block(const Vec3& g, std::string name = {}) {
    return add_block(BlockKind::kGravity, g, std::move(name));
  }

  ParameterBlock& block(int id) { return blocks_[id]; }
  const ParameterBlock& block(int id) const { return blocks_[id]; }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }

  void set_frozen(int id, bool frozen);
  void set_coord_frozen(int id, int coord, bool frozen) {
    blocks_[id].frozen[coord] = frozen ? 1 : 0;
  }
  void set_eliminable(int id, bool eliminable);

  void add_factor(std::unique_ptr<Factor> f) { factors_.push_back(std::move(f)); }
  const std::vector<std::unique_ptr<Factor>>& factors() const { return factors_; }

  std::vector<const ParameterBlock*> factor_blocks(const Factor& f) const;

 private:
  std::vector<ParameterBlock> blocks_;
  std::vector<std::unique_ptr<Factor>> factors_;
};

struct FactorClassStats {
  int count = 0;
  int dropped = 0;
  double cost = 0.0;
  double rms = 0.0;  // whitened, per residual element
};

struct ProblemEvaluation {
  double cost = 0.0;
  int dropped = 0;
  std::map<std::string, FactorClassStats> per_class;
};

/// Evaluates the full objective at the current state. Deterministic (factor
/// insertion order). Throws SolverError on a non-finite residual, identifying
/// the offending factor. Optionally returns every factor's residual vector
/// (empty vectors mark dropped factors).
ProblemEvaluation evaluate_problem(const Problem& problem,
                                   std::vector<VecX>* per_factor_residuals = nullptr);

enum class LinearSolverType { kAuto, kDense, kSparse, kSchur };

struct SolveOptions {
  int max_iterations = 50;
  double initial_damping = 1e-4;
  double damping_increase = 10.0;
  double damping_decrease = 0.5;
  double max_damping = 1e12;
  double gradient_tolerance = 1e-10;
  double relative_cost_tolerance = 1e-8;
  LinearSolverType linear_solver = LinearSolverType::kAuto;
  // kAuto picks Schur when eliminable tangent dims outnumber the rest by this
  // factor, otherwise dense below the dense cutoff and sparse above it.
  double schur_ratio = 10.0;
  int dense_cutoff = 600;
  int num_threads = 1;
  std::ostream* log = nullptr;
};

enum class TerminationReason {
  kGradientTolerance,
  kRelativeCostTolerance,
  kMaxIterations,
  kDampingLimit,
  kLinearSolverFailure,
  kNumericalFailure,
};

struct SolveSummary {
  TerminationReason termination = TerminationReason::kMaxIterations;
  int iterations = 0;
  int accepted_steps = 0;
  int rejected_steps = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double final_gradient_norm = 0.0;
  double final_damping = 0.0;
  int dropped_factors = 0;
  std::map<std::string, FactorClassStats> factor_stats;
  std::string message;

  bool converged() const {
    return termination == TerminationReason::kGradientTolerance ||
           termination == TerminationReason::kRelativeCostTolerance ||
           termination == TerminationReason::kMaxIterations ||
           termination == TerminationReason::kDampingLimit;
  }
};

SolveSummary solve(Problem& problem, const SolveOptions& options = {});

// ---------------------------------------------------------------------------

template <int TotalLocalDim, typename Functor>
bool AutoDiffFactor<TotalLocalDim, Functor>::evaluate(
    const std::vector<const ParameterBlock*>& blocks, VecX* residual,
    std::vector<MatX>* jacobians) const {
  const int n_blocks = static_cast<int>(blocks.size());
  const int res_dim = residual_dim();

  if (!jacobians) {
    std::vector<const double*> params(n_blocks);
    for (int b = 0; b < n_blocks; ++b) params[b] = blocks[b]->value.data();
    residual->resize(res_dim);
    return functor_(params.data(), residual->data());
  }

  using T = Jet<TotalLocalDim>;
  // Perturb each block through its retraction with tangent jets seeded at the
  // block's offset, so residual gradients are exactly the local Jacobians.
  std::vector<std::vector<T>> storage(n_blocks);
  std::vector<const T*> params(n_blocks);
  std::vector<int> offsets(n_blocks);
  int offset = 0;
  for (int b = 0; b < n_blocks; ++b) {
    const ParameterBlock& blk = *blocks[b];
    offsets[b] = offset;
    auto& buf = storage[b];
    switch (blk.kind) {
      case BlockKind::kEuclidean: {
        buf.resize(blk.global_dim());
        for (int i = 0; i < blk.global_dim(); ++i) buf[i] = T(blk.value[i], offset + i);
        break;
      }
      case BlockKind::kRotation: {
        Eigen::Matrix<T, 3, 1> delta;
        for (int i = 0; i < 3; ++i) delta[i] = T(0.0, offset + i);
        const Eigen::Quaternion<T> q =
            quat_cast<T>(Eigen::Quaterniond(blk.value[3], blk.value[0], blk.value[1],
                                            blk.value[2])) *
            quat_exp(delta);
        buf = {q.x(), q.y(), q.z(), q.w()};
        break;
      }
      case BlockKind::kGravity: {
        Eigen::Matrix<T, 2, 1> delta;
        for (int i = 0; i < 2; ++i) delta[i] = T(0.0, offset + i);
        const Eigen::Matrix<double, 3, 2> B = sphere_tangent_basis(blk.value);
        Eigen::Matrix<T, 3, 1> g;
        for (int i = 0; i < 3; ++i) {
          g[i] = T(blk.value[i]) + B(i, 0) * delta[0] + B(i, 1) * delta[1];
        }
        const T scale = T(kGravityMagnitude) / sqrt(g.squaredNorm());
        buf = {g[0] * scale, g[1] * scale, g[2] * scale};
        break;
      }
    }
    params[b] = buf.data();
    offset += blk.local_dim();
  }

  std::vector<T> r(res_dim);
  if (!functor_(params.data(), r.data())) return false;

  residual->resize(res_dim);
  jacobians->resize(n_blocks);
  for (int k = 0; k < res_dim; ++k) (*residual)[k] = r[k].a;
  for (int b = 0; b < n_blocks; ++b) {
    const int ld = blocks[b]->local_dim();
    MatX& J = (*jacobians)[b];
    J.resize(res_dim, ld);
    for (int k = 0; k < res_dim; ++k) {
      for (int i = 0; i < ld; ++i) J(k, i) = r[k].v[offsets[b] + i];
    }
  }
  return true;
}

}  // namespace rigcal
