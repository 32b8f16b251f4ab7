#include "dualsep/iva.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dualsep/error.hpp"

namespace dualsep {
namespace {

using Matrices = std::vector<Eigen::MatrixXcd>;

// Per-bin observation matrices, M x T.
Matrices to_bins(const ComplexSpectrogram& spec) {
  const auto T = static_cast<Eigen::Index>(spec.frames());
  const auto M = static_cast<Eigen::Index>(spec.channels());
  Matrices X(spec.bins(), Eigen::MatrixXcd(M, T));
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    for (std::size_t f = 0; f < spec.bins(); ++f) {
      for (std::size_t c = 0; c < spec.channels(); ++c) {
        X[f](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = cdouble(spec.at(t, f, c));
      }
    }
  }
  return X;
}

Matrices to_bins(const std::vector<std::vector<cfloat>>& frames, std::size_t bins, std::size_t channels) {
  const auto T = static_cast<Eigen::Index>(frames.size());
  Matrices X(bins, Eigen::MatrixXcd(static_cast<Eigen::Index>(channels), T));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (std::size_t f = 0; f < bins; ++f) {
      for (std::size_t c = 0; c < channels; ++c) {
        X[f](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = cdouble(frames[t][f * channels + c]);
      }
    }
  }
  return X;
}

Matrices unmix(const Matrices& W, const Matrices& X) {
  Matrices Y(X.size());
  for (std::size_t f = 0; f < X.size(); ++f) Y[f].noalias() = W[f] * X[f];
  return Y;
}

// ||y_{k,t}|| over all bins, M x T.
Eigen::ArrayXXd source_norms(const Matrices& Y) {
  Eigen::ArrayXXd power = Eigen::ArrayXXd::Zero(Y.front().rows(), Y.front().cols());
  for (const auto& Yf : Y) power += Yf.array().abs2();
  return power.sqrt();
}

double log_abs_det(const Eigen::MatrixXcd& W) { return std::log(std::abs(W.partialPivLu().determinant())); }

double objective(const Matrices& W, const Eigen::ArrayXXd& norms) {
  const double T = static_cast<double>(norms.cols());
  double value = T > 0 ? norms.sum() / T : 0.0;
  for (const auto& Wf : W) value -= log_abs_det(Wf);
  return value;
}

// Regularizes singular matrices in place; returns false if any stays singular.
bool guard_invertible(Matrices& W, double epsilon, bool& flagged) {
  for (auto& Wf : W) {
    double det = std::abs(Wf.partialPivLu().determinant());
    if (std::isfinite(det) && det > std::numeric_limits<double>::min()) continue;
    flagged = true;
    Wf += epsilon * Eigen::MatrixXcd::Identity(Wf.rows(), Wf.cols());
    det = std::abs(Wf.partialPivLu().determinant());
    if (!(std::isfinite(det) && det > std::numeric_limits<double>::min())) return false;
  }
  return true;
}

Matrices natural_step(const Matrices& W, const Matrices& Y, const Eigen::ArrayXXd& norms, double eta, double epsilon) {
  const auto M = W.front().rows();
  const double T = static_cast<double>(norms.cols());
  const Eigen::ArrayXXd inv = 1.0 / norms.max(epsilon);
  Matrices next(W.size());
  for (std::size_t f = 0; f < W.size(); ++f) {
    const Eigen::MatrixXcd G = (Y[f].array() * inv).matrix();
    Eigen::MatrixXcd C = (G * Y[f].adjoint()) / T;
    C -= Eigen::MatrixXcd::Identity(M, M);
    next[f] = W[f] - eta * (C * W[f]);
  }
  return next;
}

bool all_finite(const Matrices& W) {
  for (const auto& Wf : W) {
    if (!Wf.allFinite()) return false;
  }
  return true;
}

struct SolveOutcome {
  Matrices W;
  std::vector<double> trace;
  std::size_t iterations = 0;
  bool converged = false;
  bool regularized = false;
};

// Iterates the natural-gradient update with step halving.
SolveOutcome solve(const Matrices& X, Matrices W, double eta, std::size_t max_iter, double tol, double epsilon,
                   std::size_t max_halvings) {
  const std::size_t F = X.size();
  const double T = static_cast<double>(X.front().cols());
  SolveOutcome out;
  if (T == 0) {
    out.W = std::move(W);
    return out;
  }

  // Rescale each output row to mean power F per bin. The contrast is not
  // scale invariant and this puts every bin on the same footing; the row
  // scale is free and minimal-distortion scaling removes it afterwards.
  for (std::size_t f = 0; f < F; ++f) {
    const Eigen::MatrixXcd Yf = W[f] * X[f];
    for (Eigen::Index k = 0; k < Yf.rows(); ++k) {
      const double power = Yf.row(k).squaredNorm() / T;
      if (power > 0.0 && std::isfinite(power)) W[f].row(k) *= std::sqrt(static_cast<double>(F) / power);
    }
  }

  if (!guard_invertible(W, epsilon, out.regularized)) throw NumericalError("IVA unmixing matrix is singular", 0);
  Matrices Y = unmix(W, X);
  Eigen::ArrayXXd norms = source_norms(Y);
  double J = objective(W, norms);
  if (!std::isfinite(J)) throw NumericalError("IVA objective is not finite at iteration 0", 0);
  out.trace.push_back(J);

  for (std::size_t it = 0; it < max_iter; ++it) {
    double step = eta;
    bool accepted = false;
    Matrices candidate;
    Matrices Yc;
    Eigen::ArrayXXd norms_c;
    double Jc = 0.0;
    for (std::size_t h = 0; h <= max_halvings; ++h, step *= 0.5) {
      candidate = natural_step(W, Y, norms, step, epsilon);
      if (!all_finite(candidate)) throw NumericalError("IVA produced non-finite values at iteration " + std::to_string(it + 1), it + 1);
      bool flagged = false;
      if (!guard_invertible(candidate, epsilon, flagged)) {
        throw NumericalError("IVA unmixing matrix stayed singular at iteration " + std::to_string(it + 1), it + 1);
      }
      out.regularized = out.regularized || flagged;
      Yc = unmix(candidate, X);
      norms_c = source_norms(Yc);
      Jc = objective(candidate, norms_c);
      if (std::isfinite(Jc) && Jc <= J) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.converged = true;
      break;
    }
    double delta = 0.0, base = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      delta += (candidate[f] - W[f]).squaredNorm();
      base += W[f].squaredNorm();
    }
    W = std::move(candidate);
    Y = std::move(Yc);
    norms = std::move(norms_c);
    J = Jc;
    out.trace.push_back(J);
    out.iterations = it + 1;
    if (std::sqrt(delta / base) < tol) {
      out.converged = true;
      break;
    }
  }

  out.W = std::move(W);
  return out;
}

ComplexSpectrogram unmix_spectrogram(const Matrices& W, const ComplexSpectrogram& spec) {
  ComplexSpectrogram out(spec.frames(), spec.channels(), spec.config(), spec.signal_length(), spec.sample_rate());
  const auto M = static_cast<Eigen::Index>(spec.channels());
  Eigen::VectorXcd x(M);
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    for (std::size_t f = 0; f < spec.bins(); ++f) {
      for (Eigen::Index c = 0; c < M; ++c) x(c) = cdouble(spec.at(t, f, static_cast<std::size_t>(c)));
      const Eigen::VectorXcd y = W[f] * x;
      for (Eigen::Index c = 0; c < M; ++c) out.at(t, f, static_cast<std::size_t>(c)) = cfloat(y(c));
    }
  }
  return out;
}

std::vector<std::size_t> match_on_bins(const Matrices& Y, const Matrices& X) {
  const auto M = static_cast<std::size_t>(X.front().rows());
  std::vector<std::vector<double>> mag_y(M), mag_x(M);
  for (std::size_t f = 0; f < X.size(); ++f) {
    for (Eigen::Index t = 0; t < X[f].cols(); ++t) {
      for (std::size_t c = 0; c < M; ++c) {
        mag_y[c].push_back(std::abs(Y[f](static_cast<Eigen::Index>(c), t)));
        mag_x[c].push_back(std::abs(X[f](static_cast<Eigen::Index>(c), t)));
      }
    }
  }
  auto pearson = [](const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    return (saa > 0 && sbb > 0) ? sab / std::sqrt(saa * sbb) : 0.0;
  };
  std::vector<std::vector<double>> corr(M, std::vector<double>(M));
  for (std::size_t k = 0; k < M; ++k) {
    for (std::size_t z = 0; z < M; ++z) corr[k][z] = pearson(mag_y[k], mag_x[z]);
  }

  std::vector<std::size_t> assignment(M, M);
  std::vector<bool> used_out(M, false), used_zone(M, false);
  for (std::size_t round = 0; round < M; ++round) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t bk = M, bz = M;
    for (std::size_t k = 0; k < M; ++k) {
      if (used_out[k]) continue;
      for (std::size_t z = 0; z < M; ++z) {
        if (used_zone[z]) continue;
        const double v = corr[k][z];
        // Ties prefer the identity pairing, then the lowest indices.
        const bool better = v > best || (v == best && k == z && bk != bz);
        if (better) {
          best = v;
          bk = k;
          bz = z;
        }
      }
    }
    used_out[bk] = used_zone[bz] = true;
    assignment[bz] = bk;
  }
  return assignment;
}

Matrices permute_rows(const Matrices& W, const std::vector<std::size_t>& assignment) {
  Matrices out(W.size());
  for (std::size_t f = 0; f < W.size(); ++f) {
    out[f].resize(W[f].rows(), W[f].cols());
    for (std::size_t z = 0; z < assignment.size(); ++z) {
      out[f].row(static_cast<Eigen::Index>(z)) = W[f].row(static_cast<Eigen::Index>(assignment[z]));
    }
  }
  return out;
}

void minimal_distortion(Matrices& W) {
  for (auto& Wf : W) {
    const Eigen::MatrixXcd inv = Wf.inverse();
    Wf = inv.diagonal().asDiagonal() * Wf;
  }
}

void check_shape(const UnmixingState& state, const ComplexSpectrogram& spec) {
  if (state.bins() != spec.bins() || state.channels() != spec.channels()) {
    throw ContractError("unmixing state is " + std::to_string(state.bins()) + " bins x " + std::to_string(state.channels()) +
                        " channels, spectrogram is " + std::to_string(spec.bins()) + " x " + std::to_string(spec.channels()));
  }
}

}  // namespace

UnmixingState init_identity(std::size_t bins, std::size_t channels, double eta, double epsilon) {
  if (bins < 1 || channels < 1) throw ValidationError("IVA needs at least one bin and one channel");
  UnmixingState state;
  const auto M = static_cast<Eigen::Index>(channels);
  state.W.assign(bins, Eigen::MatrixXcd::Identity(M, M));
  state.eta = eta;
  state.epsilon = epsilon;
  return state;
}

ComplexSpectrogram apply_unmixing(const UnmixingState& state, const ComplexSpectrogram& spec) {
  check_shape(state, spec);
  return unmix_spectrogram(state.W, spec);
}

UnmixingState gradient_step(const UnmixingState& state, const ComplexSpectrogram& spec) {
  check_shape(state, spec);
  if (spec.frames() < 1) throw ContractError("gradient_step needs at least one frame");
  UnmixingState next = state;
  bool flagged = false;
  if (!guard_invertible(next.W, state.epsilon, flagged)) throw NumericalError("IVA unmixing matrix is singular", state.iterations);
  const Matrices X = to_bins(spec);
  const Matrices Y = unmix(next.W, X);
  next.W = natural_step(next.W, Y, source_norms(Y), state.eta, state.epsilon);
  if (!all_finite(next.W)) throw NumericalError("IVA step produced non-finite values", state.iterations + 1);
  next.regularized = state.regularized || flagged;
  ++next.iterations;
  return next;
}

double iva_objective(const UnmixingState& state, const ComplexSpectrogram& spec) {
  check_shape(state, spec);
  const Matrices X = to_bins(spec);
  return objective(state.W, source_norms(unmix(state.W, X)));
}

void apply_minimal_distortion(UnmixingState& state) { minimal_distortion(state.W); }

std::vector<std::size_t> match_zones(const ComplexSpectrogram& separated, const ComplexSpectrogram& reference) {
  if (separated.bins() != reference.bins() || separated.channels() != reference.channels() ||
      separated.frames() != reference.frames()) {
    throw ContractError("zone matching needs spectrograms of identical shape");
  }
  return match_on_bins(to_bins(separated), to_bins(reference));
}

IvaResult run_iva(const ComplexSpectrogram& spec, const IvaParams& params) {
  if (spec.channels() < 1 || spec.bins() < 1) throw ContractError("run_iva needs a non-empty spectrogram");
  IvaResult result;
  result.state = init_identity(spec.bins(), spec.channels(), params.eta, params.epsilon);
  if (spec.frames() == 0) {
    result.separated = spec;
    result.permutation.resize(spec.channels());
    for (std::size_t i = 0; i < spec.channels(); ++i) result.permutation[i] = i;
    return result;
  }
  const Matrices X = to_bins(spec);
  SolveOutcome solved =
      solve(X, result.state.W, params.eta, params.max_iter, params.tol, params.epsilon, params.max_halvings);

  std::vector<std::size_t> perm(spec.channels());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  if (params.match_zones) perm = match_on_bins(unmix(solved.W, X), X);
  Matrices W = permute_rows(solved.W, perm);
  minimal_distortion(W);

  result.state.W = std::move(W);
  result.state.iterations = solved.iterations;
  result.state.regularized = solved.regularized;
  result.objective_trace = std::move(solved.trace);
  result.iterations = solved.iterations;
  result.converged = solved.converged;
  result.permutation = std::move(perm);
  result.separated = unmix_spectrogram(result.state.W, spec);
  return result;
}

BlockOnlineIva::BlockOnlineIva(std::size_t bins, std::size_t channels, const OnlineIvaParams& params)
    : bins_(bins), channels_(channels), params_(params) {
  if (params.block_frames < 1) throw ValidationError("block_frames must be at least 1");
  reset();
}

void BlockOnlineIva::reset() {
  state_ = init_identity(bins_, channels_, params_.eta, params_.epsilon);
  pending_.clear();
  blocks_ = 0;
}

std::vector<std::vector<cfloat>> BlockOnlineIva::push_frame(std::span<const cfloat> frame) {
  if (frame.size() != bins_ * channels_) throw ContractError("IVA frame has the wrong size");
  pending_.emplace_back(frame.begin(), frame.end());
  if (pending_.size() < params_.block_frames) return {};
  return process_block();
}

std::vector<std::vector<cfloat>> BlockOnlineIva::flush() {
  if (pending_.empty()) return {};
  return process_block();
}

std::vector<std::vector<cfloat>> BlockOnlineIva::process_block() {
  const Matrices X = to_bins(pending_, bins_, channels_);
  SolveOutcome solved =
      solve(X, state_.W, params_.eta, params_.inner_iters, params_.tol, params_.epsilon, params_.max_halvings);

  std::vector<std::size_t> perm(channels_);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  if (params_.match_zones) perm = match_on_bins(unmix(solved.W, X), X);
  state_.W = permute_rows(solved.W, perm);
  state_.iterations += solved.iterations;
  state_.regularized = state_.regularized || solved.regularized;

  Matrices scaled = state_.W;
  minimal_distortion(scaled);
  const Matrices Y = unmix(scaled, X);

  std::vector<std::vector<cfloat>> out(pending_.size(), std::vector<cfloat>(bins_ * channels_));
  for (std::size_t t = 0; t < pending_.size(); ++t) {
    for (std::size_t f = 0; f < bins_; ++f) {
      for (std::size_t c = 0; c < channels_; ++c) {
        out[t][f * channels_ + c] = cfloat(Y[f](static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)));
      }
    }
  }
  pending_.clear();
  ++blocks_;
  return out;
}

ComplexSpectrogram run_block_online(const ComplexSpectrogram& spec, const OnlineIvaParams& params) {
  BlockOnlineIva iva(spec.bins(), spec.channels(), params);
  ComplexSpectrogram out(0, spec.channels(), spec.config(), spec.signal_length(), spec.sample_rate());
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    for (const auto& frame : iva.push_frame(spec.frame(t))) out.append_frame(frame);
  }
  for (const auto& frame : iva.flush()) out.append_frame(frame);
  return out;
}

}  // namespace dualsep
