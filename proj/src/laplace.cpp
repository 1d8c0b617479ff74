#include "srlab/laplace.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <random>
#include <sstream>

#include "srlab/branches.hpp"
#include "srlab/errors.hpp"

namespace srlab {

namespace {
double eval_at(const Expr& e, const Eigen::VectorXd& x) {
  return e.eval(std::span<const double>(x.data(), static_cast<size_t>(x.size())));
}
}  // namespace

Eigen::VectorXd Grid::coords(long idx) const {
  Eigen::VectorXd x(d);
  for (int l = d - 1; l >= 0; --l) {
    x[l] = (idx % n) * dx(l);
    idx /= n;
  }
  return x;
}

long Grid::neighbor(long idx, int axis, int shift) const {
  long stride = 1;
  for (int l = d - 1; l > axis; --l) stride *= n;
  long digit = (idx / stride) % n;
  long wrapped = ((digit + shift) % n + n) % n;
  return idx + (wrapped - digit) * stride;
}

Grid make_grid(const Domain& domain, int n) {
  if (domain.kind != Domain::Kind::kTorus)
    throw DomainError("grids are periodic; the domain must be a torus");
  if (n < 4) throw DomainError("grid needs at least 4 points per axis");
  Grid g;
  g.d = domain.dim();
  g.n = n;
  g.periods = domain.periods;
  return g;
}

Eigen::SparseMatrix<double> discretize_field(const VectorField& field, const Grid& grid) {
  const int d = grid.d;
  if (field.dim() != d) throw DomainError("field dimension does not match the grid");
  const long total = grid.total();

  // wraparound sampling: shifting any coordinate by a full period must not
  // change the coefficients
  long stride = std::max<long>(1, total / 16);
  for (long idx = 0; idx < total; idx += stride) {
    Eigen::VectorXd x = grid.coords(idx);
    for (int a = 0; a < d; ++a) {
      Eigen::VectorXd y = x;
      y[a] += grid.periods[static_cast<size_t>(a)];
      for (int c = 0; c < d; ++c) {
        double f0 = eval_at(field.components[static_cast<size_t>(c)], x);
        double f1 = eval_at(field.components[static_cast<size_t>(c)], y);
        if (std::abs(f1 - f0) > 1e-8 * (1.0 + std::abs(f0)))
          throw DomainError("field " + field.label + " component " + std::to_string(c + 1) +
                            " is not periodic along axis " + std::to_string(a + 1));
      }
    }
  }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(total) * 2 * static_cast<size_t>(d));
  for (long idx = 0; idx < total; ++idx) {
    Eigen::VectorXd x = grid.coords(idx);
    for (int l = 0; l < d; ++l) {
      double c = eval_at(field.components[static_cast<size_t>(l)], x);
      if (c == 0.0) continue;
      double s = c / (2.0 * grid.dx(l));
      trip.emplace_back(idx, grid.neighbor(idx, l, +1), s);
      trip.emplace_back(idx, grid.neighbor(idx, l, -1), -s);
    }
  }
  Eigen::SparseMatrix<double> m(total, total);
  m.setFromTriplets(trip.begin(), trip.end());  // duplicates (n=4 wrap) summed
  return m;
}

double DiscreteOperator::asymmetry() const {
  Eigen::SparseMatrix<double> diff = Eigen::SparseMatrix<double>(form.transpose()) - form;
  double scale = 0.0;
  for (int k = 0; k < form.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(form, k); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  double worst = 0.0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(diff, k); it; ++it)
      worst = std::max(worst, std::abs(it.value()));
  return scale > 0.0 ? worst / scale : 0.0;
}

DiscreteOperator assemble(const BracketTable& t, const Grid& grid, double h, VolumeMode mode) {
  const int d = t.structure.d;
  if (grid.d != d) throw DomainError("grid dimension does not match the structure");
  if (h < 0.0) throw DomainError("negative scale parameter");
  const long total = grid.total();

  DiscreteOperator op;
  op.grid = grid;
  op.h = h;
  op.mode = mode;
  op.weights.resize(total);

  if (mode == VolumeMode::kFixed) {
    for (long p = 0; p < total; ++p) {
      double w = eval_at(t.structure.omega_density, grid.coords(p));
      if (!(w > 0.0))
        throw NumericError("volume density is not positive at a grid node");
      op.weights[p] = w;
    }
  } else {
    // the h-scaled Riemannian volume needs one growth vector across the grid
    GrowthData ref = growth_at(t, grid.coords(0), 1e-9, 0);
    for (long p = 1; p < total; ++p) {
      GrowthData g = growth_at(t, grid.coords(p), 1e-9, 0);
      if (g.n != ref.n) {
        std::ostringstream os;
        os << "riemannian volume weights need an equiregular structure; node at (";
        Eigen::VectorXd x = grid.coords(p);
        for (int i = 0; i < d; ++i) os << (i ? ", " : "") << x[i];
        os << ") has a different growth vector than the first node";
        throw DomainError(os.str());
      }
    }
    int excess = ref.Q - d;
    for (long p = 0; p < total; ++p) {
      Eigen::VectorXd x = grid.coords(p);
      if (h > 0.0) {
        Eigen::MatrixXd ginv = Eigen::MatrixXd::Zero(d, d);
        double w = 1.0;
        for (int i = 0; i <= t.r(); ++i) {
          Eigen::MatrixXd ai = t.layer_matrix(i, x);
          ginv.noalias() += w * ai.transpose() * ai;
          w *= h * h;
        }
        double det = ginv.determinant();
        if (!(det > 0.0))
          throw NumericError("scaled metric degenerated at a grid node");
        op.weights[p] = std::pow(h, excess) / std::sqrt(det);
      } else {
        op.weights[p] = limit_density(t, x).density;
      }
    }
  }

  Eigen::SparseMatrix<double> form(total, total);
  double layer_weight = 1.0;
  for (int i = 0; i <= t.r(); ++i) {
    if (i > 0 && h == 0.0) break;
    for (const BracketEntry& e : t.layers[static_cast<size_t>(i)]) {
      Eigen::SparseMatrix<double> dm = discretize_field(e.field, grid);
      form += layer_weight * Eigen::SparseMatrix<double>(dm.transpose()) *
              op.weights.asDiagonal() * dm;
    }
    layer_weight *= h * h;
  }
  op.form = 0.5 * (form + Eigen::SparseMatrix<double>(form.transpose()));
  op.form.makeCompressed();
  return op;
}

namespace {

Eigen::VectorXd dense_eigs(const DiscreteOperator& op, int k) {
  Eigen::VectorXd s = op.weights.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd b = s.asDiagonal() * Eigen::MatrixXd(op.form) * s.asDiagonal();
  b = 0.5 * (b + b.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("dense eigensolver failed");
  return es.eigenvalues().head(k);
}

// W-orthonormalize the columns of y in place
void w_orthonormalize(Eigen::MatrixXd& y, const Eigen::VectorXd& wsqrt) {
  Eigen::MatrixXd z = wsqrt.asDiagonal() * y;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(z.rows(), z.cols());
  y = wsqrt.cwiseInverse().asDiagonal() * q;
}

Eigen::VectorXd iterative_eigs(const DiscreteOperator& op, int k) {
  const long n = op.form.rows();
  const long q = std::min<long>(n, k + 12);
  const Eigen::VectorXd& w = op.weights;
  Eigen::VectorXd wsqrt = w.cwiseSqrt();

  // shift keeps the factored matrix positive definite despite the kernel
  double ref = op.form.diagonal().sum() / w.sum();
  double tau = std::max(1e-12, 1e-3 * ref);
  Eigen::SparseMatrix<double> shifted = op.form;
  Eigen::VectorXd taud = tau * w;
  Eigen::SparseMatrix<double> diag(n, n);
  diag.reserve(Eigen::VectorXi::Constant(static_cast<int>(n), 1));
  for (long p = 0; p < n; ++p) diag.insert(p, p) = taud[p];
  shifted += diag;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
  if (solver.info() != Eigen::Success)
    throw NumericError("sparse factorization failed in the eigensolver");

  std::mt19937 rng(20240801u);  // fixed seed: identical runs give identical output
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::MatrixXd y(n, q);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < q; ++j) y(i, j) = unif(rng);
  w_orthonormalize(y, wsqrt);

  Eigen::VectorXd theta;
  double worst = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 400; ++it) {
    Eigen::MatrixXd x = solver.solve(w.asDiagonal() * y);
    w_orthonormalize(x, wsqrt);
    Eigen::MatrixXd ly = op.form * x;
    Eigen::MatrixXd hr = x.transpose() * ly;
    hr = 0.5 * (hr + hr.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hr);
    if (es.info() != Eigen::Success) throw NumericError("projected eigensolver failed");
    theta = es.eigenvalues();
    y = x * es.eigenvectors();
    ly = ly * es.eigenvectors();

    // Backward-error residual of the symmetrized problem: the top captured
    // Ritz value supplies the operator scale, so zero modes register as
    // converged instead of dividing roundoff by roundoff.
    double scale = std::abs(theta[q - 1]);
    worst = 0.0;
    for (int j = 0; j < k; ++j) {
      Eigen::VectorXd resid = ly.col(j) - theta[j] * (w.asDiagonal() * y.col(j));
      resid = wsqrt.cwiseInverse().asDiagonal() * resid;
      worst = std::max(worst, resid.norm() / (scale + std::abs(theta[j]) + 1e-300));
    }
    if (worst <= 1e-10) return theta.head(k);
  }
  throw NumericError("eigensolver did not converge in 400 iterations (worst relative residual " +
                     std::to_string(worst) + ")");
}

}  // namespace

Eigen::VectorXd lowest_eigs(const DiscreteOperator& op, int k, EigMethod method) {
  const long n = op.form.rows();
  if (k < 1) throw DomainError("need at least one eigenvalue");
  if (k > n) throw DomainError("asked for more eigenvalues than the matrix size");
  if (method == EigMethod::kAuto)
    method = n <= 1500 ? EigMethod::kDense : EigMethod::kIterative;
  return method == EigMethod::kDense ? dense_eigs(op, k) : iterative_eigs(op, k);
}

SpectrumStudy convergence_study(const BracketTable& t, const Grid& grid,
                                const std::vector<double>& h_list, int k, VolumeMode mode) {
  if (h_list.empty()) throw DomainError("empty scale list");
  for (size_t i = 0; i + 1 < h_list.size(); ++i)
    if (h_list[i] <= h_list[i + 1])
      throw DomainError("scale list must be strictly descending");

  SpectrumStudy study;
  study.mode = mode;
  study.k = k;
  study.grid_n = grid.n;
  study.h = h_list;

  struct Slot {
    std::vector<double> lambda, lambda_tilde;
    double a = 0.0, psi_lo = 0.0, psi_hi = 0.0;
  };
  auto run_one = [&](double h) {
    Slot s;
    DiscreteOperator fixed = assemble(t, grid, h, VolumeMode::kFixed);
    Eigen::VectorXd lam = lowest_eigs(fixed, k);
    s.lambda.assign(lam.data(), lam.data() + lam.size());
    if (mode == VolumeMode::kRiemannian) {
      DiscreteOperator riem = assemble(t, grid, h, VolumeMode::kRiemannian);
      Eigen::VectorXd lamt = lowest_eigs(riem, k);
      s.lambda_tilde.assign(lamt.data(), lamt.data() + lamt.size());
      Eigen::VectorXd psi = riem.weights.cwiseQuotient(fixed.weights);
      s.psi_lo = psi.minCoeff();
      s.psi_hi = psi.maxCoeff();
      double up = (psi.array() - 1.0).abs().maxCoeff();
      double down = (psi.array().inverse() - 1.0).abs().maxCoeff();
      s.a = (1.0 + up) * (1.0 + down);
    }
    return s;
  };

  std::vector<std::future<Slot>> tasks;
  for (double h : h_list)
    tasks.push_back(std::async(std::launch::async, run_one, h));
  std::vector<Slot> slots;
  for (auto& f : tasks) slots.push_back(f.get());

  for (Slot& s : slots) {
    study.lambda.push_back(std::move(s.lambda));
    if (mode == VolumeMode::kRiemannian) {
      study.lambda_tilde.push_back(std::move(s.lambda_tilde));
      study.a.push_back(s.a);
      study.psi_lo.push_back(s.psi_lo);
      study.psi_hi.push_back(s.psi_hi);
    }
  }

  // diagnostics on the fixed-volume table: eigenvalues may only go down as h
  // shrinks, and never below the h=0 row
  for (size_t i = 0; i + 1 < h_list.size(); ++i)
    for (int j = 0; j < k; ++j)
      study.max_monotonicity_violation = std::max(
          study.max_monotonicity_violation, study.lambda[i + 1][static_cast<size_t>(j)] -
                                                study.lambda[i][static_cast<size_t>(j)]);
  if (h_list.back() == 0.0)
    for (size_t i = 0; i + 1 < h_list.size(); ++i)
      for (int j = 0; j < k; ++j)
        study.max_barrier_violation = std::max(
            study.max_barrier_violation, study.lambda.back()[static_cast<size_t>(j)] -
                                             study.lambda[i][static_cast<size_t>(j)]);
  if (mode == VolumeMode::kRiemannian)
    for (size_t i = 0; i < h_list.size(); ++i)
      for (int j = 0; j < k; ++j) {
        double lam = study.lambda[i][static_cast<size_t>(j)];
        double tilde = study.lambda_tilde[i][static_cast<size_t>(j)];
        double a = study.a[i];
        study.max_sandwich_violation =
            std::max({study.max_sandwich_violation, tilde - a * lam, lam / a - tilde});
      }

  std::vector<std::pair<size_t, size_t>> positive_pairs;
  for (size_t i = 0; i + 1 < h_list.size(); ++i)
    if (h_list[i] > 0.0 && h_list[i + 1] > 0.0) positive_pairs.emplace_back(i, i + 1);
  if (!positive_pairs.empty())
    for (int j = 0; j < k; ++j) {
      auto [f0, f1] = positive_pairs.front();
      auto [l0, l1] = positive_pairs.back();
      study.first_decrement.push_back(
          std::abs(study.lambda[f1][static_cast<size_t>(j)] - study.lambda[f0][static_cast<size_t>(j)]));
      study.last_decrement.push_back(
          std::abs(study.lambda[l1][static_cast<size_t>(j)] - study.lambda[l0][static_cast<size_t>(j)]));
    }
  return study;
}

std::vector<double> flat_torus_symbol_eigs(const Grid& grid, int count) {
  const long total = grid.total();
  if (count < 1 || count > total) throw DomainError("symbol eigenvalue count out of range");
  const double pi = std::acos(-1.0);
  std::vector<double> vals;
  vals.reserve(static_cast<size_t>(total));
  for (long idx = 0; idx < total; ++idx) {
    long rest = idx;
    double sum = 0.0;
    for (int l = grid.d - 1; l >= 0; --l) {
      long j = rest % grid.n;
      rest /= grid.n;
      double s = std::sin(2.0 * pi * static_cast<double>(j) / grid.n) / grid.dx(l);
      sum += s * s;
    }
    vals.push_back(sum);
  }
  std::sort(vals.begin(), vals.end());
  vals.resize(static_cast<size_t>(count));
  return vals;
}

}  // namespace srlab
