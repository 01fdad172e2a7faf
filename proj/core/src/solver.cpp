#include "rigcal/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <thread>

namespace rigcal {

void Loss::evaluate(double s, double* rho, double* drho) const {
  switch (type) {
    case LossType::kNone:
      *rho = s;
      *drho = 1.0;
      return;
    case LossType::kHuber: {
      const double d2 = scale * scale;
      if (s <= d2) {
        *rho = s;
        *drho = 1.0;
      } else {
        const double sq = std::sqrt(s);
        *rho = 2.0 * scale * sq - d2;
        *drho = scale / sq;
      }
      return;
    }
    case LossType::kCauchy: {
      const double c2 = scale * scale;
      *rho = c2 * std::log1p(s / c2);
      *drho = 1.0 / (1.0 + s / c2);
      return;
    }
  }
}

void retract_block(ParameterBlock& block, const VecX& delta_in) {
  if (block.fully_frozen()) return;
  VecX delta = delta_in;
  bool all_zero = true;
  for (int i = 0; i < block.local_dim(); ++i) {
    if (block.frozen[i]) delta[i] = 0.0;
    if (delta[i] != 0.0) all_zero = false;
  }
  if (all_zero) return;
  switch (block.kind) {
    case BlockKind::kEuclidean:
      block.value += delta;
      return;
    case BlockKind::kRotation:
      block.set_rotation(block.as_rotation() * Rotation::exp(delta));
      return;
    case BlockKind::kGravity: {
      const Vec3 g = Vec3(block.value) + sphere_tangent_basis(block.value) * delta;
      block.value = kGravityMagnitude * g.normalized();
      return;
    }
  }
}

int Problem::add_block(BlockKind kind, VecX value, std::string name) {
  ParameterBlock b;
  b.kind = kind;
  b.value = std::move(value);
  b.name = std::move(name);
  if (b.kind == BlockKind::kRotation && b.global_dim() != 4) {
    throw ValidationError("rotation blocks store quaternion xyzw (4 values)");
  }
  if (b.kind == BlockKind::kGravity && b.global_dim() != 3) {
    throw ValidationError("gravity blocks store a 3-vector");
  }
  b.frozen.assign(b.local_dim(), 0);
  blocks_.push_back(std::move(b));
  return static_cast<int>(blocks_.size()) - 1;
}

void Problem::set_frozen(int id, bool frozen) {
  auto& f = blocks_[id].frozen;
  std::fill(f.begin(), f.end(), frozen ? 1 : 0);
}

void Problem::set_eliminable(int id, bool eliminable) {
  ParameterBlock& b = blocks_[id];
  if (eliminable && (b.kind != BlockKind::kEuclidean || b.global_dim() != 3)) {
    throw ValidationError("only 3-d Euclidean blocks can be eliminated");
  }
  b.eliminable = eliminable;
}

std::vector<const ParameterBlock*> Problem::factor_blocks(const Factor& f) const {
  std::vector<const ParameterBlock*> out;
  out.reserve(f.blocks().size());
  for (int id : f.blocks()) out.push_back(&blocks_[id]);
  return out;
}

namespace {

constexpr int kChunkSize = 512;  // fixed so results do not depend on thread count
constexpr double kMinDiagonal = 1e-12;
constexpr double kMaxDiagonal = 1e16;

struct Index {
  std::vector<int> start;                    // first tangent column, -1 if absent
  std::vector<std::vector<int>> free_coords;  // local coordinates with columns
  std::vector<int> lm;                       // landmark ordinal, -1 if none
  std::vector<int> lm_block;                 // block id per landmark ordinal
  int num_cols = 0;
};

Index build_index(const Problem& p, bool schur) {
  Index idx;
  const int nb = p.num_blocks();
  idx.start.assign(nb, -1);
  idx.free_coords.resize(nb);
  idx.lm.assign(nb, -1);
  for (int b = 0; b < nb; ++b) {
    const ParameterBlock& blk = p.block(b);
    bool any_frozen = false;
    for (std::uint8_t f : blk.frozen) any_frozen |= (f != 0);
    if (schur && blk.eliminable && !any_frozen) {
      idx.lm[b] = static_cast<int>(idx.lm_block.size());
      idx.lm_block.push_back(b);
      continue;
    }
    std::vector<int>& fc = idx.free_coords[b];
    for (int i = 0; i < blk.local_dim(); ++i) {
      if (!blk.frozen[i]) fc.push_back(i);
    }
    if (fc.empty()) continue;
    idx.start[b] = idx.num_cols;
    idx.num_cols += static_cast<int>(fc.size());
  }
  return idx;
}

struct LmData {
  Mat3 Hpp = Mat3::Zero();
  Vec3 gp = Vec3::Zero();
  std::map<int, MatX> W;  // block id -> (n_free x 3)
};

struct FactorResult {
  bool ok = false;
  VecX r;
  std::vector<MatX> J;
};

struct Assembly {
  double cost = 0.0;
  int dropped = 0;
  MatX H;  // dense upper triangle (including diagonal)
  VecX g;
  std::vector<LmData> lms;
  std::map<std::string, FactorClassStats> stats;
  double squared_residual_sum = 0.0;
  int bad_factor = -1;  // first factor with non-finite output
};

class Evaluator {
 public:
  Evaluator(const Problem& p, const Index& idx, int num_threads)
      : p_(p), idx_(idx), threads_(std::max(1, num_threads)) {}

  /// Chunked factor sweep; evaluation may run on several threads, reduction is
  /// serial in chunk order so results are independent of the thread count.
  template <typename Reduce>
  void sweep(bool with_jacobians, const Reduce& reduce) const {
    const auto& factors = p_.factors();
    const int n = static_cast<int>(factors.size());
    const int num_chunks = (n + kChunkSize - 1) / kChunkSize;
    std::vector<std::vector<FactorResult>> wave(threads_);

    for (int wave_begin = 0; wave_begin < num_chunks; wave_begin += threads_) {
      const int wave_chunks = std::min(threads_, num_chunks - wave_begin);
      auto eval_chunk = [&](int w) {
        const int chunk = wave_begin + w;
        const int begin = chunk * kChunkSize;
        const int end = std::min(n, begin + kChunkSize);
        auto& results = wave[w];
        results.resize(end - begin);
        for (int i = begin; i < end; ++i) {
          FactorResult& res = results[i - begin];
          if (!active_.empty() && !active_[i]) {
            res.ok = false;  // pinned out of the solve; reducers skip it
            continue;
          }
          const auto blocks = p_.factor_blocks(*factors[i]);
          if (with_jacobians) {
            res.ok = factors[i]->evaluate(blocks, &res.r, &res.J);
          } else {
            res.ok = factors[i]->evaluate(blocks, &res.r, nullptr);
          }
        }
      };
      if (wave_chunks == 1) {
        eval_chunk(0);
      } else {
        std::vector<std::thread> pool;
        pool.reserve(wave_chunks);
        for (int w = 0; w < wave_chunks; ++w) pool.emplace_back(eval_chunk, w);
        for (auto& t : pool) t.join();
      }
      for (int w = 0; w < wave_chunks; ++w) {
        const int chunk = wave_begin + w;
        const int begin = chunk * kChunkSize;
        const int end = std::min(n, begin + kChunkSize);
        for (int i = begin; i < end; ++i) {
          reduce(i, wave[w][i - begin]);
        }
      }
    }
  }

  /// Full normal-equation assembly at the current state.
  ///
  /// The first assembly pins the active factor set: factors that fail to
  /// evaluate at the entry state are excluded for the whole solve. Keeping the
  /// set fixed keeps the objective continuous across iterations — otherwise a
  /// step that pushes a measurement over a validity boundary (e.g. a point
  /// leaving the camera's field of view) would look artificially cheaper.
  Assembly assemble() const {
    Assembly a;
    a.H = MatX::Zero(idx_.num_cols, idx_.num_cols);
    a.g = VecX::Zero(idx_.num_cols);
    a.lms.resize(idx_.lm_block.size());
    const bool first_pass = active_.empty();
    if (first_pass) active_.assign(p_.factors().size(), 1);

    sweep(true, [&](int i, FactorResult& res) {
      if (a.bad_factor >= 0) return;
      const Factor& f = *p_.factors()[i];
      FactorClassStats& st = a.stats[f.category()];
      ++st.count;
      if (!active_[i]) {
        ++st.dropped;
        ++a.dropped;
        return;
      }
      if (!res.ok) {
        if (first_pass) {
          active_[i] = 0;
          ++st.dropped;
          ++a.dropped;
        } else {
          a.bad_factor = i;  // was evaluable at the accepted state; cannot recur
        }
        return;
      }
      if (!res.r.allFinite()) {
        a.bad_factor = i;
        return;
      }
      const double s = res.r.squaredNorm();
      double rho = 0.0, drho = 0.0;
      f.loss().evaluate(s, &rho, &drho);
      a.cost += rho;
      st.cost += rho;
      st.rms += s;  // accumulate squared norm; normalized later
      a.squared_residual_sum += s;
      const double w = std::sqrt(drho);

      const auto& bids = f.blocks();
      const int nb = static_cast<int>(bids.size());
      // Gather the scaled free-column Jacobian of every participating block.
      int lm_ordinal = -1;
      MatX Jp;
      std::vector<std::pair<int, MatX>> jt;  // (block id, scaled free-col jacobian)
      jt.reserve(nb);
      for (int b = 0; b < nb; ++b) {
        const int bid = bids[b];
        if (!res.J[b].allFinite()) {
          a.bad_factor = i;
          return;
        }
        if (idx_.lm[bid] >= 0) {
          if (lm_ordinal >= 0) {
            throw SolverError("factor '" + f.category() +
                              "' binds more than one eliminable block");
          }
          lm_ordinal = idx_.lm[bid];
          Jp = w * res.J[b];
          continue;
        }
        if (idx_.start[bid] < 0) continue;
        const auto& fc = idx_.free_coords[bid];
        MatX Jf(f.residual_dim(), fc.size());
        for (size_t c = 0; c < fc.size(); ++c) Jf.col(c) = res.J[b].col(fc[c]);
        jt.emplace_back(bid, w * Jf);
      }
      const VecX rw = w * res.r;

      for (size_t bi = 0; bi < jt.size(); ++bi) {
        const int ci = idx_.start[jt[bi].first];
        const MatX& Ji = jt[bi].second;
        a.g.segment(ci, Ji.cols()) += Ji.transpose() * rw;
        for (size_t bj = bi; bj < jt.size(); ++bj) {
          const int cj = idx_.start[jt[bj].first];
          const MatX& Jj = jt[bj].second;
          if (ci <= cj) {
            a.H.block(ci, cj, Ji.cols(), Jj.cols()) += Ji.transpose() * Jj;
          } else {
            a.H.block(cj, ci, Jj.cols(), Ji.cols()) += Jj.transpose() * Ji;
          }
        }
      }
      if (lm_ordinal >= 0) {
        LmData& lm = a.lms[lm_ordinal];
        lm.Hpp += Jp.transpose() * Jp;
        lm.gp += Jp.transpose() * rw;
        for (auto& [bid, Ji] : jt) {
          auto it = lm.W.find(bid);
          if (it == lm.W.end()) {
            it = lm.W.emplace(bid, MatX::Zero(Ji.cols(), 3)).first;
          }
          it->second += Ji.transpose() * Jp;
        }
      }
    });

    return a;
  }

  /// Objective value only. Returns false when the state is not admissible:
  /// a non-finite residual, or an active factor that can no longer be
  /// evaluated here (so candidate costs stay comparable with the reference).
  bool cost_only(double* cost, int* dropped) const {
    double c = 0.0;
    int drop = 0;
    bool valid = true;
    sweep(false, [&](int i, FactorResult& res) {
      if (!valid) return;
      if (!active_.empty() && !active_[i]) {
        ++drop;
        return;
      }
      if (!res.ok || !res.r.allFinite()) {
        valid = false;
        return;
      }
      double rho = 0.0, drho = 0.0;
      p_.factors()[i]->loss().evaluate(res.r.squaredNorm(), &rho, &drho);
      c += rho;
    });
    *cost = c;
    if (dropped) *dropped = drop;
    return valid;
  }

 private:
  const Problem& p_;
  const Index& idx_;
  int threads_;
  // Active factor mask, pinned by the first assembly (empty until then).
  // Mutable because activity is evaluation bookkeeping, not problem state.
  mutable std::vector<signed char> active_;
};

double clamp_diag(double d) { return std::clamp(d, kMinDiagonal, kMaxDiagonal); }

/// Dense damped solve of the (upper-stored) system; returns false on failure.
bool solve_dense_damped(const MatX& H_upper, const VecX& g, double mu, VecX* delta) {
  MatX Hd = H_upper.selfadjointView<Eigen::Upper>();
  for (int i = 0; i < Hd.rows(); ++i) Hd(i, i) += mu * clamp_diag(Hd(i, i));
  Eigen::LLT<MatX> llt(Hd);
  if (llt.info() == Eigen::Success) {
    *delta = llt.solve(-g);
    return delta->allFinite();
  }
  Eigen::LDLT<MatX> ldlt(Hd);
  if (ldlt.info() != Eigen::Success) return false;
  *delta = ldlt.solve(-g);
  return delta->allFinite();
}

bool solve_sparse_damped(const MatX& H_upper, const VecX& g, double mu, VecX* delta) {
  const int n = static_cast<int>(g.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(n) * 16);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double v = H_upper(i, j);
      if (i == j) v += mu * clamp_diag(v);
      if (v != 0.0) {
        trip.emplace_back(i, j, v);
        if (i != j) trip.emplace_back(j, i, v);
      }
    }
  }
  Eigen::SparseMatrix<double> H(n, n);
  H.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(H);
  if (ldlt.info() != Eigen::Success) return false;
  *delta = ldlt.solve(-g);
  return delta->allFinite();
}

/// Schur complement: eliminate landmark blocks, solve the reduced dense
/// system, then back-substitute the landmark steps.
bool solve_schur_damped(const Assembly& a, const Index& idx, double mu, VecX* delta_t,
                        std::vector<Vec3>* delta_p) {
  MatX R = a.H.selfadjointView<Eigen::Upper>();
  for (int i = 0; i < R.rows(); ++i) R(i, i) += mu * clamp_diag(a.H(i, i));
  VecX gr = a.g;

  std::vector<Mat3> inv(a.lms.size());
  for (size_t l = 0; l < a.lms.size(); ++l) {
    const LmData& lm = a.lms[l];
    Mat3 Hpp = lm.Hpp;
    for (int i = 0; i < 3; ++i) Hpp(i, i) += mu * clamp_diag(Hpp(i, i));
    const double det = Hpp.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) return false;
    inv[l] = Hpp.inverse();
    for (auto it_i = lm.W.begin(); it_i != lm.W.end(); ++it_i) {
      const int ci = idx.start[it_i->first];
      const MatX Wi_inv = it_i->second * inv[l];
      gr.segment(ci, Wi_inv.rows()) -= Wi_inv * lm.gp;
      for (auto it_j = it_i; it_j != lm.W.end(); ++it_j) {
        const int cj = idx.start[it_j->first];
        const MatX d = Wi_inv * it_j->second.transpose();
        R.block(ci, cj, d.rows(), d.cols()) -= d;
        if (it_j != it_i) {
          R.block(cj, ci, d.cols(), d.rows()) -= d.transpose();
        }
      }
    }
  }

  Eigen::LLT<MatX> llt(R);
  if (llt.info() == Eigen::Success) {
    *delta_t = llt.solve(-gr);
  } else {
    Eigen::LDLT<MatX> ldlt(R);
    if (ldlt.info() != Eigen::Success) return false;
    *delta_t = ldlt.solve(-gr);
  }
  if (!delta_t->allFinite()) return false;

  delta_p->resize(a.lms.size());
  for (size_t l = 0; l < a.lms.size(); ++l) {
    const LmData& lm = a.lms[l];
    Vec3 rhs = lm.gp;
    for (const auto& [bid, Wi] : lm.W) {
      rhs += Wi.transpose() * delta_t->segment(idx.start[bid], Wi.rows());
    }
    (*delta_p)[l] = -(inv[l] * rhs);
    if (!(*delta_p)[l].allFinite()) return false;
  }
  return true;
}

}  // namespace

ProblemEvaluation evaluate_problem(const Problem& problem, std::vector<VecX>* per_factor_residuals) {
  ProblemEvaluation ev;
  if (per_factor_residuals) {
    per_factor_residuals->assign(problem.factors().size(), VecX());
  }
  std::map<std::string, int> surviving_dims;
  int i = -1;
  for (const auto& f : problem.factors()) {
    ++i;
    FactorClassStats& st = ev.per_class[f->category()];
    ++st.count;
    VecX r;
    if (!f->evaluate(problem.factor_blocks(*f), &r, nullptr)) {
      ++st.dropped;
      ++ev.dropped;
      continue;
    }
    if (!r.allFinite()) {
      throw SolverError("non-finite residual in factor '" + f->category() + "' (index " +
                        std::to_string(i) + ")");
    }
    const double s = r.squaredNorm();
    double rho = 0.0, drho = 0.0;
    f->loss().evaluate(s, &rho, &drho);
    ev.cost += rho;
    st.cost += rho;
    st.rms += s;
    surviving_dims[f->category()] += f->residual_dim();
    if (per_factor_residuals) (*per_factor_residuals)[i] = r;
  }
  for (auto& [cat, st] : ev.per_class) {
    const int dims = surviving_dims[cat];
    st.rms = dims > 0 ? std::sqrt(st.rms / dims) : 0.0;
  }
  return ev;
}

SolveSummary solve(Problem& problem, const SolveOptions& options) {
  SolveSummary summary;

  // Resolve the linear solver choice.
  LinearSolverType mode = options.linear_solver;
  if (mode == LinearSolverType::kAuto) {
    const Index probe = build_index(problem, true);
    const int lm_dims = 3 * static_cast<int>(probe.lm_block.size());
    if (lm_dims > 0 && lm_dims >= options.schur_ratio * std::max(1, probe.num_cols)) {
      mode = LinearSolverType::kSchur;
    } else if (probe.num_cols + lm_dims <= options.dense_cutoff) {
      mode = LinearSolverType::kDense;
    } else {
      mode = LinearSolverType::kSparse;
    }
  }
  const bool schur = mode == LinearSolverType::kSchur;
  const Index idx = build_index(problem, schur);
  const Evaluator evaluator(problem, idx, options.num_threads);

  Assembly a = evaluator.assemble();
  if (a.bad_factor >= 0) {
    summary.termination = TerminationReason::kNumericalFailure;
    summary.message = "factor '" + problem.factors()[a.bad_factor]->category() +
                      "' (index " + std::to_string(a.bad_factor) +
                      ") produced non-finite values";
    return summary;
  }
  summary.initial_cost = a.cost;
  summary.final_cost = a.cost;

  const int total_movable = idx.num_cols + 3 * static_cast<int>(idx.lm_block.size());
  if (total_movable == 0 || problem.factors().empty()) {
    summary.termination = TerminationReason::kGradientTolerance;
    summary.message = "nothing to optimize";
    const ProblemEvaluation ev = evaluate_problem(problem);
    summary.factor_stats = ev.per_class;
    summary.dropped_factors = ev.dropped;
    return summary;
  }

  auto gradient_norm = [&](const Assembly& asm_) {
    double gn = 2.0 * (asm_.g.size() > 0 ? asm_.g.lpNorm<Eigen::Infinity>() : 0.0);
    for (const LmData& lm : asm_.lms) {
      gn = std::max(gn, 2.0 * lm.gp.lpNorm<Eigen::Infinity>());
    }
    return gn;
  };

  double mu = options.initial_damping;
  double cost = a.cost;
  bool fresh_assembly = true;

  const auto movable_blocks = [&]() {
    std::vector<int> ids;
    for (int b = 0; b < problem.num_blocks(); ++b) {
      if (idx.start[b] >= 0 || idx.lm[b] >= 0) ids.push_back(b);
    }
    return ids;
  }();
  std::vector<VecX> snapshot(movable_blocks.size());

  int iter = 0;
  while (iter < options.max_iterations) {
    if (fresh_assembly) {
      const double gn = gradient_norm(a);
      summary.final_gradient_norm = gn;
      if (gn <= options.gradient_tolerance) {
        summary.termination = TerminationReason::kGradientTolerance;
        break;
      }
      fresh_assembly = false;
    }
    ++iter;
    summary.iterations = iter;

    VecX delta_t;
    std::vector<Vec3> delta_p;
    bool ok;
    if (schur) {
      ok = solve_schur_damped(a, idx, mu, &delta_t, &delta_p);
    } else if (mode == LinearSolverType::kDense) {
      ok = solve_dense_damped(a.H, a.g, mu, &delta_t);
    } else {
      ok = solve_sparse_damped(a.H, a.g, mu, &delta_t);
    }
    if (!ok) {
      ++summary.rejected_steps;
      mu *= options.damping_increase;
      if (mu > options.max_damping) {
        summary.termination = TerminationReason::kLinearSolverFailure;
        summary.message = "linear solver failed at maximum damping";
        break;
      }
      continue;
    }

    // Candidate step.
    for (size_t k = 0; k < movable_blocks.size(); ++k) {
      snapshot[k] = problem.block(movable_blocks[k]).value;
    }
    for (int b = 0; b < problem.num_blocks(); ++b) {
      if (idx.start[b] >= 0) {
        ParameterBlock& blk = problem.block(b);
        VecX step = VecX::Zero(blk.local_dim());
        const auto& fc = idx.free_coords[b];
        for (size_t c = 0; c < fc.size(); ++c) step[fc[c]] = delta_t[idx.start[b] + c];
        retract_block(blk, step);
      } else if (idx.lm[b] >= 0) {
        problem.block(b).value += delta_p[idx.lm[b]];
      }
    }

    double new_cost;
    const bool finite = evaluator.cost_only(&new_cost, nullptr);
    const bool accept = finite && new_cost < cost;
    if (options.log) {
      (*options.log) << "iter " << iter << (accept ? "  accept" : "  reject")
                     << "  cost " << cost << " -> " << new_cost << "  mu " << mu << "\n";
    }
    if (!accept) {
      for (size_t k = 0; k < movable_blocks.size(); ++k) {
        problem.block(movable_blocks[k]).value = snapshot[k];
      }
      ++summary.rejected_steps;
      mu *= options.damping_increase;
      if (mu > options.max_damping) {
        summary.termination = TerminationReason::kDampingLimit;
        break;
      }
      continue;
    }

    ++summary.accepted_steps;
    mu = std::max(mu * options.damping_decrease, 1e-18);
    const double change = cost - new_cost;
    cost = new_cost;
    summary.final_cost = cost;
    if (change <= options.relative_cost_tolerance * std::max(cost, 1e-300)) {
      summary.termination = TerminationReason::kRelativeCostTolerance;
      break;
    }

    a = evaluator.assemble();
    if (a.bad_factor >= 0) {
      summary.termination = TerminationReason::kNumericalFailure;
      summary.message = "factor '" + problem.factors()[a.bad_factor]->category() +
                        "' failed to evaluate after an accepted step";
      break;
    }
    cost = a.cost;
    summary.final_cost = cost;
    fresh_assembly = true;
  }

  summary.final_damping = mu;
  const ProblemEvaluation ev = evaluate_problem(problem);
  summary.final_cost = ev.cost;
  summary.factor_stats = ev.per_class;
  summary.dropped_factors = ev.dropped;
  return summary;
}

}  // namespace rigcal
