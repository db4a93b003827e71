"""In-repo convex solver for the PSD-cone subproblems.

Every problem here optimizes over an M x M Hermitian PSD transmit covariance
``W`` with a trace (power) budget, plus a handful of scalar variables.  ``W``
is parameterized by its M^2 real coordinates in an orthonormal Hermitian
basis, and each problem is solved with a logarithmic-barrier Newton method
(barrier parameter grows by 10x per stage, damped Newton inside each stage).
All solvers are batched: a leading axis runs over independent problem
instances (channel samples), which is what makes the sample-approximation
loops affordable.  Per-instance line searches and convergence masks keep
each instance's trajectory independent of how instances are grouped into
batches.

Solvers
-------
* max-min beamforming at fixed cache sizes: certified bisection on the
  common scaled rate; the returned value carries a strictly feasible witness
  and the value ``(1 + 10 tol)`` above it a negative-margin certificate,
* the per-sample proximal subproblem used by the consensus ADMM sweep,
* the per-channel dynamic bound where cache sizes are re-optimized jointly
  with the beamformer, and
* a single-shot reference solve of the full linearized trust-region problem
  for small instances (the ADMM decomposition is validated against it).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NumericalError, ValidationError
from .linalg import hermitian_eig
from .rates import CacheAllocation, SystemConfig

LN2 = math.log(2.0)

_NEWTON_CAP = 80
_LS_CAP = 60
_ARMIJO = 1e-4
_STAGE_DEC2 = 1e-4
_FINAL_DEC2 = 1e-9
_T_GROWTH = 10.0


# ---------------------------------------------------------------------------
# Hermitian parameterization
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def hermitian_basis(m: int) -> np.ndarray:
    """Orthonormal basis of the real vector space of m x m Hermitian
    matrices, shape (m*m, m, m): the m diagonal elements first, then the
    real/imaginary off-diagonal pairs."""
    basis = np.zeros((m * m, m, m), dtype=complex)
    a = 0
    for i in range(m):
        basis[a, i, i] = 1.0
        a += 1
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for i in range(m):
        for j in range(i + 1, m):
            basis[a, i, j] = inv_sqrt2
            basis[a, j, i] = inv_sqrt2
            a += 1
            basis[a, i, j] = 1j * inv_sqrt2
            basis[a, j, i] = -1j * inv_sqrt2
            a += 1
    basis.setflags(write=False)
    return basis


def mat_from_params(x: np.ndarray, m: int) -> np.ndarray:
    """(..., m*m) real coordinates -> (..., m, m) Hermitian matrices."""
    return np.tensordot(x, hermitian_basis(m), axes=([-1], [0]))


def params_from_mat(w: np.ndarray) -> np.ndarray:
    """(..., m, m) Hermitian matrices -> (..., m*m) real coordinates."""
    m = w.shape[-1]
    basis = hermitian_basis(m)
    return np.einsum("aij,...ij->...a", basis.conj(), w).real


def rate_coefficients(channels: np.ndarray, sigma2: float) -> np.ndarray:
    """Linear SNR coefficients ``c[..., l, a]`` such that
    ``tr(H_l W)/sigma2 = c[..., l, :] @ x_w``.  ``channels`` holds channel
    vectors (..., L, M) or, with 4+ axes, Hermitian matrices (..., L, M, M).
    """
    channels = np.asarray(channels, dtype=complex)
    m = channels.shape[-1]
    basis = hermitian_basis(m)
    if channels.ndim >= 4:
        c = np.einsum("aij,...ji->...a", basis, channels).real
    else:
        c = np.einsum("...i,aij,...j->...a", channels.conj(), basis, channels).real
    return c / sigma2


def channel_gain_bounds(channels: np.ndarray, sigma2: float) -> np.ndarray:
    """Largest achievable SNR per unit transmit power, per BS."""
    channels = np.asarray(channels, dtype=complex)
    if channels.ndim >= 4:
        return np.linalg.eigvalsh(channels)[..., -1] / sigma2
    return np.sum(np.abs(channels) ** 2, axis=-1) / sigma2


def _as_vector_batch(channels) -> np.ndarray:
    """Normalize channel input to a batched array.

    2-D input is one instance of channel vectors -> (1, L, M); 3-D input
    with equal trailing axes is one instance of rank-one channel matrices ->
    (1, L, M, M), otherwise a (B, L, M) batch of vectors; 4-D input is a
    batch of matrices.
    """
    h = np.asarray(channels, dtype=complex)
    if h.ndim == 2:
        return h[None]
    if h.ndim == 3:
        if h.shape[-1] == h.shape[-2] and h.shape[0] != h.shape[-1]:
            return h[None]
        return h
    if h.ndim == 4:
        return h
    raise ValidationError(f"unsupported channel array shape {h.shape}")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class SolveReport:
    objective: float
    iterations: int
    kkt_residual: float
    status: str  # "optimal" | "max-iter" | "infeasible"


# ---------------------------------------------------------------------------
# Batched damped-Newton barrier machinery
# ---------------------------------------------------------------------------


def _solve_batch_linear(h: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve symmetric systems H dx = rhs with a ridge fallback."""
    h = 0.5 * (h + np.swapaxes(h, -1, -2))
    ridge = 0.0
    for _ in range(8):
        try:
            if ridge:
                scale = np.maximum(
                    np.einsum("...ii->...", np.abs(h)), 1.0
                )[..., None, None]
                hh = h + ridge * scale * np.eye(h.shape[-1])
            else:
                hh = h
            return np.linalg.solve(hh, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            ridge = 1e-12 if ridge == 0.0 else ridge * 100.0
    raise NumericalError("Newton system remained singular after regularization")


def _newton_stage(problem, x, t0, dec2_tol, max_iter=_NEWTON_CAP):
    """Damped Newton on the barrier objective for one barrier parameter."""
    B = x.shape[0]
    done = np.zeros(B, dtype=bool)
    total_iters = 0
    for _ in range(max_iter):
        g, h = problem.grad_hess(x, t0)
        dx = _solve_batch_linear(h, -g)
        dec2 = np.einsum("bd,bd->b", g, -dx)
        dec2 = np.where(np.isfinite(dec2), dec2, np.inf)
        done |= dec2 <= dec2_tol
        if done.all():
            break
        total_iters += 1
        f_cur = problem.phi(x, t0)
        step = np.where(done, 0.0, 1.0)
        active = ~done
        for _ in range(_LS_CAP):
            x_trial = x + step[:, None] * dx
            f_trial = problem.phi(x_trial, t0)
            ok = f_trial <= f_cur - _ARMIJO * step * dec2
            need = active & ~ok
            if not need.any():
                break
            step[need] *= 0.5
            active = need
        moved = step > 1e-15
        x = np.where(((~done) & moved)[:, None], x + step[:, None] * dx, x)
        done |= ~moved  # stalled line search: keep the current point
    return x, done, total_iters


def _barrier_solve(problem, x0, t_init, kkt_tol, max_stages=24):
    """Follow the barrier path until the scaled duality gap
    ``m / (t0 * (1 + |f|))`` drops below ``kkt_tol``.  Returns
    ``(x, kkt (B,), iterations, converged mask)``."""
    x = x0
    t0 = float(t_init)
    iters = 0
    conv = np.zeros(x.shape[0], dtype=bool)
    for _ in range(max_stages):
        f_abs = np.abs(problem.objective(x))
        gap = problem.num_constraints / (t0 * (1.0 + f_abs))
        last = bool(np.all(gap <= kkt_tol))
        x, conv, it = _newton_stage(
            problem, x, t0, _FINAL_DEC2 if last else _STAGE_DEC2
        )
        iters += it
        if last:
            break
        t0 *= _T_GROWTH
    f_abs = np.abs(problem.objective(x))
    kkt = problem.num_constraints / (t0 * (1.0 + f_abs))
    return x, kkt, iters, conv


# ---------------------------------------------------------------------------
# Shared covariance-block barrier pieces
# ---------------------------------------------------------------------------


class _PsdPowerBlock:
    """Barrier terms for {W Hermitian PSD, tr W <= P} living in the first
    ``A = m*m`` coordinates of the parameter vector."""

    def __init__(self, m: int, power: float):
        self.m = m
        self.A = m * m
        self.power = power
        self.basis = hermitian_basis(m)
        tvec = np.zeros(self.A)
        tvec[:m] = 1.0
        self.trace_vec = tvec

    def matrices(self, xw):
        return mat_from_params(xw, self.m)

    def trace(self, xw):
        return xw[..., : self.m].sum(axis=-1)

    def phi_terms(self, xw):
        w = self.matrices(xw)
        evals = np.linalg.eigvalsh(w)
        slack = self.power - self.trace(xw)
        ok = (evals[..., 0] > 0.0) & (slack > 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logdet = np.sum(np.log(np.maximum(evals, 1e-300)), axis=-1)
            phi = -logdet - np.log(np.maximum(slack, 1e-300))
        return np.where(ok, phi, np.inf), ok

    def grad_hess_terms(self, xw):
        w = self.matrices(xw)
        evals, vecs = np.linalg.eigh(w)
        r = vecs * (1.0 / np.sqrt(evals))[..., None, :]  # W^{-1} = R R^H
        s = r @ np.conj(np.swapaxes(r, -1, -2))
        grad = -params_from_mat(s)
        t = np.einsum("...ik,aij,...jl->...akl", np.conj(r), self.basis, r)
        tf = t.reshape(t.shape[0], self.A, -1)
        hess = np.einsum("bax,bcx->bac", tf, np.conj(tf)).real
        slack = self.power - self.trace(xw)
        grad = grad + self.trace_vec[None, :] / slack[..., None]
        hess = hess + (
            np.outer(self.trace_vec, self.trace_vec)[None, :, :]
            / (slack**2)[..., None, None]
        )
        return grad, hess


def _isotropic_start(block: _PsdPowerBlock, batch: int) -> np.ndarray:
    x = np.zeros((batch, block.A))
    x[:, : block.m] = 0.5 * block.power / block.m
    return x


def _accumulate_linear_barrier(values, rows, grad, hess):
    """Barrier derivatives for affine constraints ``g_c(x) >= 0`` given
    values (B, C) and gradient rows (B, C, d)."""
    inv = 1.0 / values
    grad -= np.einsum("bc,bcd->bd", inv, rows)
    hess += np.einsum("bc,bcd,bce->bde", inv**2, rows, rows)


# ---------------------------------------------------------------------------
# Feasibility margin problem (bisection inner solve)
# ---------------------------------------------------------------------------


class _MarginProblem:
    """maximize t  s.t.  c_l . x_w >= s_l + t (1 + s_l) on active rows,
    tr W <= P, W PSD.  The optimum is the relative feasibility margin of the
    SNR targets ``s``; they are feasible iff it is >= 0."""

    def __init__(self, block, coeffs, targets, active):
        self.block = block
        self.c = coeffs
        self.s = targets
        self.active = active
        self.d = block.A + 1
        self.num_constraints = int(active.sum(axis=1).max()) + 1 + block.m

    def margins(self, x):
        tau = np.einsum("bla,ba->bl", self.c, x[:, : self.block.A])
        return (tau - self.s) / (1.0 + self.s)

    def achieved(self, x):
        return np.where(self.active, self.margins(x), np.inf).min(axis=1)

    def objective(self, x):
        return -x[:, self.block.A]

    def phi(self, x, t0):
        phi_w, ok = self.block.phi_terms(x[:, : self.block.A])
        g = np.where(self.active, self.margins(x) - x[:, self.block.A][:, None], 1.0)
        ok &= np.all(g > 0.0, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = (
                t0 * self.objective(x)
                + phi_w
                - np.sum(
                    np.where(self.active, np.log(np.maximum(g, 1e-300)), 0.0), axis=1
                )
            )
        return np.where(ok, phi, np.inf)

    def grad_hess(self, x, t0):
        B = x.shape[0]
        A = self.block.A
        grad = np.zeros((B, self.d))
        hess = np.zeros((B, self.d, self.d))
        gw, hw = self.block.grad_hess_terms(x[:, :A])
        grad[:, :A] += gw
        hess[:, :A, :A] += hw
        grad[:, A] -= t0

        g = np.where(self.active, self.margins(x) - x[:, A][:, None], 1.0)
        rows = np.zeros((B, self.s.shape[1], self.d))
        rows[:, :, :A] = self.c / (1.0 + self.s)[:, :, None]
        rows[:, :, A] = -1.0
        rows[~self.active] = 0.0
        _accumulate_linear_barrier(g, rows, grad, hess)
        return grad, hess


def _margin_start(prob: _MarginProblem, w_coords=None) -> np.ndarray:
    B = prob.c.shape[0]
    x = np.zeros((B, prob.d))
    x[:, : prob.block.A] = (
        _isotropic_start(prob.block, B) if w_coords is None else w_coords
    )
    mg = prob.achieved(x)
    x[:, prob.block.A] = mg - 0.5 * (1.0 + np.abs(mg))
    return x


def _margin_solve(coeffs, targets, active, power, w_coords=None, kkt_tol=1e-9):
    """Batched feasibility-margin solve.  ``w_coords`` optionally warm-starts
    the covariance block.  Returns (achieved margin (B,), x, iterations)."""
    m = int(round(math.sqrt(coeffs.shape[-1])))
    block = _PsdPowerBlock(m, power)
    prob = _MarginProblem(block, coeffs, targets, active)
    x0 = _margin_start(prob, w_coords)
    bad = ~np.isfinite(prob.phi(x0, 1.0))
    if bad.any():
        x0[bad] = _margin_start(prob)[bad]
    t_init = 1e3 if w_coords is not None else 1.0
    x, _, iters, _ = _barrier_solve(prob, x0, t_init, kkt_tol)
    return prob.achieved(x), x, iters


# ---------------------------------------------------------------------------
# Joint (W, xi) interior solve of the fixed-cache problem
# ---------------------------------------------------------------------------


class _JointRateProblem:
    """maximize xi  s.t.  log2(1 + c_l . x_w) >= xi * w_l on active rows,
    tr W <= P, W PSD.  Iterates are strictly feasible, so the achieved min
    ratio of the current W always lower-bounds the optimum."""

    def __init__(self, block, coeffs, weights, active):
        self.block = block
        self.c = coeffs
        self.w = weights
        self.active = active
        self.d = block.A + 1
        self.num_constraints = int(active.sum(axis=1).max()) + 1 + block.m

    def rates_tau(self, x):
        tau = np.einsum("bla,ba->bl", self.c, x[:, : self.block.A])
        rates = np.log1p(np.maximum(tau, -0.999999999999)) / LN2
        return rates, tau

    def achieved(self, x):
        rates, _ = self.rates_tau(x)
        safe_w = np.where(self.active, self.w, 1.0)
        return np.where(self.active, rates / safe_w, np.inf).min(axis=1)

    def objective(self, x):
        return -x[:, self.block.A]

    def phi(self, x, t0):
        phi_w, ok = self.block.phi_terms(x[:, : self.block.A])
        rates, _ = self.rates_tau(x)
        g = np.where(self.active, rates - self.w * x[:, self.block.A][:, None], 1.0)
        ok &= np.all(g > 0.0, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = (
                t0 * self.objective(x)
                + phi_w
                - np.sum(
                    np.where(self.active, np.log(np.maximum(g, 1e-300)), 0.0), axis=1
                )
            )
        return np.where(ok, phi, np.inf)

    def grad_hess(self, x, t0):
        B = x.shape[0]
        A = self.block.A
        grad = np.zeros((B, self.d))
        hess = np.zeros((B, self.d, self.d))
        gw, hw = self.block.grad_hess_terms(x[:, :A])
        grad[:, :A] += gw
        hess[:, :A, :A] += hw
        grad[:, A] -= t0

        rates, tau = self.rates_tau(x)
        g = np.where(self.active, rates - self.w * x[:, A][:, None], 1.0)
        rows = np.zeros((B, self.w.shape[1], self.d))
        rows[:, :, :A] = self.c / ((1.0 + tau) * LN2)[:, :, None]
        rows[:, :, A] = -self.w
        rows[~self.active] = 0.0
        _accumulate_linear_barrier(g, rows, grad, hess)
        wgt = np.where(self.active, 1.0 / ((1.0 + tau) ** 2 * LN2 * g), 0.0)
        hess[:, :A, :A] += np.einsum("bl,bla,blc->bac", wgt, self.c, self.c)
        return grad, hess


def _joint_rate_solve(coeffs, weights, active, power, kkt_tol=1e-8):
    """Returns (achieved xi (B,), x, iterations, kkt)."""
    B = coeffs.shape[0]
    m = int(round(math.sqrt(coeffs.shape[-1])))
    block = _PsdPowerBlock(m, power)
    prob = _JointRateProblem(block, coeffs, weights, active)
    x0 = np.zeros((B, prob.d))
    x0[:, : block.A] = _isotropic_start(block, B)
    x0[:, block.A] = 0.5 * prob.achieved(x0)
    x, kkt, iters, _ = _barrier_solve(prob, x0, 1.0, kkt_tol)
    return prob.achieved(x), x, iters, kkt


# ---------------------------------------------------------------------------
# Public fixed-cache beamforming solver (certified bisection)
# ---------------------------------------------------------------------------


def _cache_vector(cache) -> np.ndarray:
    if isinstance(cache, CacheAllocation):
        if cache.sizes.shape[1] != 1:
            raise ValidationError("fixed-cache solver takes a single-file allocation")
        return cache.sizes[:, 0].copy()
    return np.asarray(cache, dtype=float).reshape(-1).copy()


def solve_beamforming_fixed_cache_batch(
    channels,
    cache,
    config: SystemConfig,
    tol: float = 1e-5,
    margin_tol: float = 1e-7,
):
    """Certified max-min solve over a batch of channel realizations.

    For every realization, finds the largest ``xi`` such that every BS with
    residual file content can decode: ``log2(1 + SNR_l(W)) >= xi (F - C_l)``.
    A direct interior-point solve seeds a bisection whose lower end always
    carries a strictly feasible witness ``W`` and whose upper end is
    certified infeasible (margin below ``-margin_tol``).

    Returns ``(W (B, M, M), xi (B,), margins (B,), reports)``.
    """
    h = _as_vector_batch(channels)
    B, L = h.shape[0], h.shape[1]
    m = h.shape[-1]
    c_vec = _cache_vector(cache)
    if c_vec.size != L:
        raise ValidationError(f"cache vector has {c_vec.size} entries for {L} BSs")
    F, P = config.file_size, config.power
    weights = F - c_vec
    active = weights > 1e-12 * max(F, 1.0)

    if not active.any():
        reports = [SolveReport(math.inf, 0, 0.0, "optimal") for _ in range(B)]
        return (
            np.zeros((B, m, m), dtype=complex),
            np.full(B, math.inf),
            np.full(B, math.inf),
            reports,
        )

    coeffs = rate_coefficients(h, config.sigma2)
    gains = channel_gain_bounds(h, config.sigma2)
    act = np.broadcast_to(active, (B, L))
    alive = ~((gains <= 0.0) & act).any(axis=1)

    xi_out = np.zeros(B)
    w_out = np.zeros((B, m, m), dtype=complex)
    margins_out = np.zeros(B)
    its = np.zeros(B, dtype=int)
    kkt_out = np.zeros(B)
    status = np.array(["optimal"] * B, dtype=object)

    idx = np.where(alive)[0]
    if idx.size:
        cs = coeffs[idx]
        acts = act[idx]
        wts = np.broadcast_to(weights, (idx.size, L)).copy()
        xi_hat, x_joint, it_j, kkt_j = _joint_rate_solve(
            cs, wts, acts, P, kkt_tol=min(1e-8, 0.01 * tol)
        )
        its[idx] += it_j
        kkt_out[idx] = kkt_j
        lo = xi_hat.copy()
        witness = x_joint[:, : m * m].copy()
        hi = lo * (1.0 + 50.0 * tol) + 1e-9 * (1.0 + lo)

        def margin_at(xi_vals, w_coords):
            zw = np.minimum(xi_vals[:, None] * wts, 60.0)
            s = np.where(acts, np.exp2(zw) - 1.0, 0.0)
            return _margin_solve(cs, s, acts, P, w_coords=w_coords, kkt_tol=1e-9)

        # certify the upper end (expand geometrically if necessary)
        wcur = witness
        for _ in range(120):
            mg_hi, x_hi, it_m = margin_at(hi, wcur)
            its[idx] += it_m
            bad = mg_hi >= -margin_tol
            if not bad.any():
                break
            hi[bad] *= 1.0 + 100.0 * tol
        else:
            status[idx[bad]] = "max-iter"

        need = hi - lo > 5.0 * tol * np.maximum(lo, 1e-300)
        rounds = 0
        while need.any() and rounds < 200:
            rounds += 1
            mid = np.where(need, 0.5 * (lo + hi), lo)
            mg, x_m, it_m = margin_at(mid, wcur)
            its[idx] += it_m
            wcur = x_m[:, : m * m]
            feas = mg >= 0.0
            take = need & feas
            lo = np.where(take, mid, lo)
            witness[take] = wcur[take]
            hi = np.where(need & ~feas, mid, hi)
            need = hi - lo > 5.0 * tol * np.maximum(lo, 1e-300)

        xi_out[idx] = lo
        w_out[idx] = mat_from_params(witness, m)
        taus = np.einsum("bla,ba->bl", cs, witness)
        rts = np.log1p(np.maximum(taus, 0.0)) / LN2
        margins_out[idx] = np.where(acts, rts - lo[:, None] * wts, np.inf).min(axis=1)

    reports = []
    for b in range(B):
        if not alive[b]:
            reports.append(SolveReport(0.0, 0, 0.0, "optimal"))
        else:
            reports.append(
                SolveReport(float(xi_out[b]), int(its[b]), float(kkt_out[b]), str(status[b]))
            )
    return w_out, xi_out, margins_out, reports


def solve_beamforming_fixed_cache(channels, cache, config: SystemConfig, tol: float = 1e-5):
    """Single-instance fixed-cache solve; ``channels`` is (L, M) vectors or
    (L, M, M) rank-one matrices.  Returns ``(W, xi, SolveReport)`` with
    ``xi = +inf`` when everything is cached and ``xi = 0`` for dead
    channels."""
    w, xi, _, reports = solve_beamforming_fixed_cache_batch(
        channels, cache, config, tol=tol
    )
    return w[0], float(xi[0]), reports[0]


def feasibility_margin(channels, cache, config: SystemConfig, xi: float) -> float:
    """Certified relative feasibility margin of the SNR targets implied by
    ``xi``.  Negative means infeasible; below -1e-7 is the declared
    infeasibility threshold."""
    h = _as_vector_batch(channels)
    c_vec = _cache_vector(cache)
    F, P = config.file_size, config.power
    weights = F - c_vec
    active = weights > 1e-12 * max(F, 1.0)
    if not active.any():
        return math.inf
    coeffs = rate_coefficients(h, config.sigma2)
    act = np.broadcast_to(active, coeffs.shape[:2])
    wts = np.broadcast_to(weights, coeffs.shape[:2])
    zw = np.minimum(xi * wts, 60.0)
    s = np.where(act, np.exp2(zw) - 1.0, 0.0)
    mg, _, _ = _margin_solve(coeffs, s, act, P, kkt_tol=1e-9)
    return float(mg[0])


def extract_rank_one(w: np.ndarray, power: float) -> np.ndarray:
    """Rank-one beamformer: the principal eigenvector of ``w`` scaled so its
    squared norm equals ``power``."""
    evals, vecs = hermitian_eig(w)
    if evals[0] <= 0.0:
        warnings.warn("covariance is numerically zero; returning the zero beamformer")
        return np.zeros(w.shape[0], dtype=complex)
    return math.sqrt(power) * vecs[:, 0]


# ---------------------------------------------------------------------------
# ADMM per-sample proximal subproblem
# ---------------------------------------------------------------------------


class _SubproblemProblem:
    """minimize  pk/xi (or -pk xi) + sum_l [lam_l (C_l - a_l) + rho/2 (C_l - a_l)^2]
    s.t.  log2(1 + c_l . x_w) >= xi_bar (F - C_l) + (F - cbar_l)(xi - xi_bar),
          tr W <= P, W PSD, |xi - xi_bar| <= r.

    Layout: x = [w coords (A), xi, C_1..C_L]; the C_l here are the local
    (per-sample) cache copies, unconstrained apart from the linearized rate
    rows."""

    def __init__(self, block, coeffs, xi_bar, cbar, radius, rho, anchors, lam, sense, pk, F):
        self.block = block
        self.c = coeffs
        self.xi_bar = xi_bar
        self.cbar = cbar
        self.r = float(radius)
        self.rho = float(rho)
        self.anchors = anchors
        self.lam = lam
        self.sense = sense
        self.pk = pk
        self.F = float(F)
        B, L, A = coeffs.shape
        self.L = L
        self.d = A + 1 + L
        self.num_constraints = L + 1 + block.m + 2

    def split(self, x):
        A = self.block.A
        return x[:, :A], x[:, A], x[:, A + 1 :]

    def rate_constraints(self, x):
        xw, xi, cl = self.split(x)
        tau = np.einsum("bla,ba->bl", self.c, xw)
        rates = np.log1p(np.maximum(tau, -0.999999999999)) / LN2
        rhs = self.xi_bar[:, None] * (self.F - cl) + (self.F - self.cbar) * (
            xi[:, None] - self.xi_bar[:, None]
        )
        return rates - rhs, tau

    def objective(self, x):
        _, xi, cl = self.split(x)
        pen = np.sum(
            self.lam * (cl - self.anchors) + 0.5 * self.rho * (cl - self.anchors) ** 2,
            axis=1,
        )
        if self.sense == "time":
            with np.errstate(divide="ignore"):
                base = np.where(xi > 0.0, self.pk / np.maximum(xi, 1e-300), np.inf)
        else:
            base = -self.pk * xi
        return base + pen

    def phi(self, x, t0):
        xw, xi, _ = self.split(x)
        phi_w, ok = self.block.phi_terms(xw)
        g, _ = self.rate_constraints(x)
        rad_lo = self.r + (xi - self.xi_bar)
        rad_hi = self.r - (xi - self.xi_bar)
        ok &= np.all(g > 0.0, axis=1) & (rad_lo > 0.0) & (rad_hi > 0.0)
        if self.sense == "time":
            ok &= xi > 0.0
        obj = self.objective(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = (
                t0 * obj
                + phi_w
                - np.sum(np.log(np.maximum(g, 1e-300)), axis=1)
                - np.log(np.maximum(rad_lo, 1e-300))
                - np.log(np.maximum(rad_hi, 1e-300))
            )
        return np.where(ok & np.isfinite(obj), phi, np.inf)

    def grad_hess(self, x, t0):
        B = x.shape[0]
        A = self.block.A
        L = self.L
        grad = np.zeros((B, self.d))
        hess = np.zeros((B, self.d, self.d))
        xw, xi, cl = self.split(x)

        gw, hw = self.block.grad_hess_terms(xw)
        grad[:, :A] += gw
        hess[:, :A, :A] += hw

        if self.sense == "time":
            grad[:, A] += t0 * (-self.pk / xi**2)
            hess[:, A, A] += t0 * (2.0 * self.pk / xi**3)
        else:
            grad[:, A] += -t0 * self.pk
        grad[:, A + 1 :] += t0 * (self.lam + self.rho * (cl - self.anchors))
        ii = np.arange(A + 1, self.d)
        hess[:, ii, ii] += t0 * self.rho

        g, tau = self.rate_constraints(x)
        rows = np.zeros((B, L, self.d))
        rows[:, :, :A] = self.c / ((1.0 + tau) * LN2)[:, :, None]
        rows[:, :, A] = -(self.F - self.cbar)
        jj = np.arange(L)
        rows[:, jj, A + 1 + jj] = self.xi_bar[:, None]
        _accumulate_linear_barrier(g, rows, grad, hess)
        wgt = 1.0 / ((1.0 + tau) ** 2 * LN2 * g)
        hess[:, :A, :A] += np.einsum("bl,bla,blc->bac", wgt, self.c, self.c)

        rad_lo = self.r + (xi - self.xi_bar)
        rad_hi = self.r - (xi - self.xi_bar)
        grad[:, A] += -1.0 / rad_lo + 1.0 / rad_hi
        hess[:, A, A] += 1.0 / rad_lo**2 + 1.0 / rad_hi**2
        return grad, hess


def _subproblem_start(prob: _SubproblemProblem) -> np.ndarray:
    B, L, A = prob.c.shape
    x = np.zeros((B, prob.d))
    x[:, :A] = _isotropic_start(prob.block, B)
    x[:, A] = prob.xi_bar
    tau = np.einsum("bla,ba->bl", prob.c, x[:, :A])
    rates = np.log1p(np.maximum(tau, 0.0)) / LN2
    slack = max(1.0, 0.05 * prob.F)
    c_needed = prob.F - (rates - slack) / prob.xi_bar[:, None]
    x[:, A + 1 :] = np.maximum(prob.anchors, c_needed)
    return x


def solve_admm_subproblem_batch(
    channels,
    xi_bar,
    cbar,
    radius: float,
    rho: float,
    anchors,
    lam,
    config: SystemConfig,
    objective_sense: str = "time",
    pk=1.0,
    warm=None,
    kkt_tol: float = 1e-8,
):
    """Batched proximal subproblem of the consensus ADMM sweep.

    Shapes: ``channels`` (B, L, M); ``xi_bar``/``pk`` broadcastable to (B,);
    ``cbar``/``anchors``/``lam`` broadcastable to (B, L).  ``warm`` is a
    previous solution's ``x`` array.  Returns
    ``(xi (B,), W (B, M, M), C_local (B, L), x, kkt (B,), iterations)``.
    """
    if objective_sense not in ("time", "rate"):
        raise ValidationError("objective_sense must be 'time' or 'rate'")
    if radius <= 0.0 or rho <= 0.0:
        raise ValidationError("radius and rho must be positive")
    h = _as_vector_batch(channels)
    B, L = h.shape[0], h.shape[1]
    m = h.shape[-1]
    coeffs = rate_coefficients(h, config.sigma2)
    xi_bar = np.broadcast_to(np.asarray(xi_bar, dtype=float), (B,)).copy()
    if np.any(xi_bar <= 0.0):
        raise ValidationError("linearization point xi must be positive")
    cbar = np.broadcast_to(np.asarray(cbar, dtype=float), (B, L)).copy()
    anchors = np.broadcast_to(np.asarray(anchors, dtype=float), (B, L)).copy()
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (B, L)).copy()
    pk = np.broadcast_to(np.asarray(pk, dtype=float), (B,)).copy()

    block = _PsdPowerBlock(m, config.power)
    prob = _SubproblemProblem(
        block, coeffs, xi_bar, cbar, radius, rho, anchors, lam, objective_sense, pk,
        config.file_size,
    )
    x0 = _subproblem_start(prob)
    t_init = 1.0
    if warm is not None:
        good = np.isfinite(prob.phi(warm, 1.0))
        x0[good] = warm[good]
        if good.all():
            t_init = 1e3
    x, kkt, iters, _ = _barrier_solve(prob, x0, t_init, kkt_tol)
    xw, xi, cl = prob.split(x)
    return xi.copy(), mat_from_params(xw, m), cl.copy(), x, kkt, iters


def solve_admm_subproblem(
    channels,
    linearization: tuple,
    radius: float,
    rho: float,
    anchors,
    lam,
    config: SystemConfig,
    objective_sense: str = "time",
    pk: float = 1.0,
):
    """Single-instance proximal subproblem; ``linearization = (xi_bar,
    cache_point)``.  Returns ``(xi, W, C_local, SolveReport)``."""
    xi_bar, cbar = linearization
    xi, w, cl, x, kkt, iters = solve_admm_subproblem_batch(
        np.asarray(channels, dtype=complex)[None],
        np.asarray([xi_bar], dtype=float),
        np.asarray(cbar, dtype=float)[None],
        radius,
        rho,
        np.asarray(anchors, dtype=float)[None],
        np.asarray(lam, dtype=float)[None],
        config,
        objective_sense,
        np.asarray([pk], dtype=float),
    )
    # report the minimized proximal objective
    pen = float(
        np.sum(
            np.asarray(lam) * (cl[0] - np.asarray(anchors))
            + 0.5 * rho * (cl[0] - np.asarray(anchors)) ** 2
        )
    )
    base = pk / xi[0] if objective_sense == "time" else -pk * xi[0]
    status = "optimal" if kkt[0] <= 1e-7 else "max-iter"
    return float(xi[0]), w[0], cl[0], SolveReport(base + pen, int(iters), float(kkt[0]), status)


# ---------------------------------------------------------------------------
# Dynamic per-channel bound (caches re-optimized per realization)
# ---------------------------------------------------------------------------


class _MinCacheProblem:
    """minimize sum_l u_l  s.t.  u_l >= 0,
    u_l >= F - log2(1 + c_l . x_w)/xi, tr W <= P, W PSD."""

    def __init__(self, block, coeffs, xi, F):
        self.block = block
        self.c = coeffs
        self.xi = xi
        self.F = float(F)
        B, L, A = coeffs.shape
        self.L = L
        self.d = A + L
        self.num_constraints = 2 * L + 1 + block.m

    def split(self, x):
        return x[:, : self.block.A], x[:, self.block.A :]

    def deficits(self, x):
        xw, u = self.split(x)
        tau = np.einsum("bla,ba->bl", self.c, xw)
        rates = np.log1p(np.maximum(tau, -0.999999999999)) / LN2
        return u - (self.F - rates / self.xi[:, None]), tau

    def objective(self, x):
        return x[:, self.block.A :].sum(axis=1)

    def phi(self, x, t0):
        xw, u = self.split(x)
        phi_w, ok = self.block.phi_terms(xw)
        g, _ = self.deficits(x)
        ok &= np.all(g > 0.0, axis=1) & np.all(u > 0.0, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = (
                t0 * u.sum(axis=1)
                + phi_w
                - np.sum(np.log(np.maximum(g, 1e-300)), axis=1)
                - np.sum(np.log(np.maximum(u, 1e-300)), axis=1)
            )
        return np.where(ok, phi, np.inf)

    def grad_hess(self, x, t0):
        B = x.shape[0]
        A = self.block.A
        L = self.L
        grad = np.zeros((B, self.d))
        hess = np.zeros((B, self.d, self.d))
        xw, u = self.split(x)
        gw, hw = self.block.grad_hess_terms(xw)
        grad[:, :A] += gw
        hess[:, :A, :A] += hw
        grad[:, A:] += t0

        g, tau = self.deficits(x)
        rows = np.zeros((B, L, self.d))
        rows[:, :, :A] = self.c / ((1.0 + tau) * LN2 * self.xi[:, None])[:, :, None]
        jj = np.arange(L)
        rows[:, jj, A + jj] = 1.0
        _accumulate_linear_barrier(g, rows, grad, hess)
        wgt = 1.0 / ((1.0 + tau) ** 2 * LN2 * self.xi[:, None] * g)
        hess[:, :A, :A] += np.einsum("bl,bla,blc->bac", wgt, self.c, self.c)

        grad[:, A:] += -1.0 / u
        ii = np.arange(A, self.d)
        hess[:, ii, ii] += 1.0 / u**2
        return grad, hess


def _min_cache_solve(coeffs, xi, F, P, warm=None, kkt_tol=1e-8):
    """Smallest total cache that supports targets ``xi``, batched.  Returns
    (total (B,), per-BS deficits (B, L), x, iterations)."""
    B = coeffs.shape[0]
    m = int(round(math.sqrt(coeffs.shape[-1])))
    block = _PsdPowerBlock(m, P)
    prob = _MinCacheProblem(block, coeffs, xi, F)
    x0 = np.zeros((B, prob.d))
    x0[:, : block.A] = _isotropic_start(block, B)
    g0, _ = prob.deficits(x0)
    x0[:, block.A :] = np.maximum(-np.minimum(g0, 0.0), 0.0) + 1.0 + 0.05 * F
    t_init = 1.0
    if warm is not None:
        good = np.isfinite(prob.phi(warm, 1.0))
        x0[good] = warm[good]
        if good.all():
            t_init = 1e2
    x, _, iters, _ = _barrier_solve(prob, x0, t_init, kkt_tol)
    xw, _ = prob.split(x)
    tau = np.einsum("bla,ba->bl", coeffs, xw)
    rates = np.log1p(np.maximum(tau, 0.0)) / LN2
    deficit = np.maximum(0.0, F - rates / xi[:, None])
    return deficit.sum(axis=1), deficit, x, iters


def solve_dynamic_bound_batch(channels, config: SystemConfig, tol: float = 1e-5):
    """Per-realization bound with the caches re-optimized per channel:
    bisection on the common scaled rate, feasible when the smallest total
    cache supporting it fits the budget.  Returns ``(W, C (B, L), xi (B,))``.
    """
    h = _as_vector_batch(channels)
    B, L = h.shape[0], h.shape[1]
    m = h.shape[-1]
    F, P, c_tot = config.file_size, config.power, config.total_cache
    if c_tot >= L * F - 1e-9 * max(F, 1.0):
        return (
            np.zeros((B, m, m), dtype=complex),
            np.full((B, L), F),
            np.full(B, math.inf),
        )
    coeffs = rate_coefficients(h, config.sigma2)
    gains = channel_gain_bounds(h, config.sigma2)
    best = np.log1p(P * np.maximum(gains, 0.0)) / LN2

    uni = np.broadcast_to(F - c_tot / L, (B, L)).copy()
    active = np.ones((B, L), dtype=bool)
    xi_lo, _, _, _ = _joint_rate_solve(coeffs, uni, active, P, kkt_tol=min(1e-8, 0.01 * tol))
    lo = np.maximum(xi_lo, 1e-12)
    hi = np.maximum(L * best.max(axis=1) / (L * F - c_tot), lo * (1.0 + 10.0 * tol))

    warm = None
    for _ in range(120):
        need = hi - lo > tol * np.maximum(lo, 1e-300)
        if not need.any():
            break
        mid = np.where(need, 0.5 * (lo + hi), lo)
        total, _, x, _ = _min_cache_solve(coeffs, mid, F, P, warm=warm)
        warm = x
        feas = total <= c_tot + 1e-7 * max(F, 1.0)
        lo = np.where(need & feas, mid, lo)
        hi = np.where(need & ~feas, mid, hi)

    _, deficit, x, _ = _min_cache_solve(coeffs, lo, F, P, warm=warm)
    w = mat_from_params(x[:, : m * m], m)
    return w, deficit, lo


def solve_dynamic_bound(
    channels, config: SystemConfig, objective_sense: str = "time", tol: float = 1e-5
):
    """Single-instance dynamic bound; returns ``(W, C, xi, SolveReport)``.

    With the time objective this lower-bounds any fixed allocation's
    per-channel downloading time; with the rate objective it upper-bounds the
    rate (the optimization itself is identical).
    """
    if objective_sense not in ("time", "rate"):
        raise ValidationError("objective_sense must be 'time' or 'rate'")
    h = _as_vector_batch(channels)
    if config.total_cache <= 1e-12:
        w, xi, _, reports = solve_beamforming_fixed_cache_batch(
            h, np.zeros(h.shape[1]), config, tol=tol
        )
        return w[0], np.zeros(h.shape[1]), float(xi[0]), reports[0]
    w, c, xi = solve_dynamic_bound_batch(h, config, tol=tol)
    return w[0], c[0], float(xi[0]), SolveReport(float(xi[0]), 0, 0.0, "optimal")


# ---------------------------------------------------------------------------
# Single-shot reference solve of the linearized trust-region problem
# ---------------------------------------------------------------------------


class _DirectLinearizedProblem:
    """The full linearized problem over (W^1..W^B, xi^1..xi^B, shared C) in
    one barrier pass.  Small instances only; the ADMM path is validated
    against this.  Layout: x = [w^1.., w^B.., xi^1..xi^B, C_1..C_L]."""

    def __init__(self, block, coeffs, xi_bar, cbar, radius, sense, pk, F, budget, lo, hi):
        self.block = block
        self.c = coeffs
        self.xi_bar = xi_bar
        self.cbar = cbar  # (L,) shared linearization cache
        self.r = float(radius)
        self.sense = sense
        self.pk = pk
        self.F = float(F)
        self.budget = float(budget)
        self.lo = lo
        self.hi = hi
        B, L, A = coeffs.shape
        self.B, self.L, self.A = B, L, A
        self.d = B * A + B + L
        self.num_constraints = B * (L + 1 + block.m + 2) + 2 * L + 1

    def split(self, x):
        B, A = self.B, self.A
        return x[: B * A].reshape(B, A), x[B * A : B * A + B], x[B * A + B :]

    def objective_vec(self, x):
        _, xi, _ = self.split(x)
        if self.sense == "time":
            with np.errstate(divide="ignore"):
                return np.where(xi > 0, self.pk / np.maximum(xi, 1e-300), np.inf)
        return -self.pk * xi

    def objective(self, x):
        return np.array([self.objective_vec(x[0]).sum()])

    def rate_constraints(self, x):
        xw, xi, cl = self.split(x)
        tau = np.einsum("bla,ba->bl", self.c, xw)
        rates = np.log1p(np.maximum(tau, -0.999999999999)) / LN2
        rhs = self.xi_bar[:, None] * (self.F - cl[None, :]) + (
            self.F - self.cbar[None, :]
        ) * (xi[:, None] - self.xi_bar[:, None])
        return rates - rhs, tau

    def phi(self, x2, t0):
        x = x2[0]
        xw, xi, cl = self.split(x)
        phi_w, ok_w = self.block.phi_terms(xw)
        g, _ = self.rate_constraints(x)
        dxi = xi - self.xi_bar
        rad_lo, rad_hi = self.r + dxi, self.r - dxi
        box_lo, box_hi = cl - self.lo, self.hi - cl
        slack = self.budget - cl.sum()
        ok = bool(
            np.all(ok_w)
            and np.all(g > 0)
            and np.all(rad_lo > 0)
            and np.all(rad_hi > 0)
            and np.all(box_lo > 0)
            and np.all(box_hi > 0)
            and slack > 0
        )
        if self.sense == "time":
            ok = ok and bool(np.all(xi > 0))
        obj = self.objective_vec(x)
        if not ok or not np.all(np.isfinite(obj)):
            return np.array([np.inf])
        val = (
            t0 * obj.sum()
            + phi_w.sum()
            - np.log(g).sum()
            - np.log(rad_lo).sum()
            - np.log(rad_hi).sum()
            - np.log(box_lo).sum()
            - np.log(box_hi).sum()
            - math.log(slack)
        )
        return np.array([val])

    def grad_hess(self, x2, t0):
        x = x2[0]
        B, A, L, d = self.B, self.A, self.L, self.d
        grad = np.zeros(d)
        hess = np.zeros((d, d))
        xw, xi, cl = self.split(x)

        gw, hw = self.block.grad_hess_terms(xw)
        for b in range(B):
            sl = slice(b * A, (b + 1) * A)
            grad[sl] += gw[b]
            hess[sl, sl] += hw[b]

        oxi, ocl = B * A, B * A + B
        di = np.arange(oxi, oxi + B)
        if self.sense == "time":
            grad[di] += t0 * (-self.pk / xi**2)
            hess[di, di] += t0 * (2.0 * self.pk / xi**3)
        else:
            grad[di] += -t0 * self.pk

        g, tau = self.rate_constraints(x)
        for b in range(B):
            for l in range(L):
                row = np.zeros(d)
                row[b * A : (b + 1) * A] = self.c[b, l] / ((1.0 + tau[b, l]) * LN2)
                row[oxi + b] = -(self.F - self.cbar[l])
                row[ocl + l] = self.xi_bar[b]
                grad -= row / g[b, l]
                hess += np.outer(row, row) / g[b, l] ** 2
                hess[b * A : (b + 1) * A, b * A : (b + 1) * A] += np.outer(
                    self.c[b, l], self.c[b, l]
                ) / ((1.0 + tau[b, l]) ** 2 * LN2 * g[b, l])

        dxi = xi - self.xi_bar
        rad_lo, rad_hi = self.r + dxi, self.r - dxi
        grad[di] += -1.0 / rad_lo + 1.0 / rad_hi
        hess[di, di] += 1.0 / rad_lo**2 + 1.0 / rad_hi**2

        ci = np.arange(ocl, d)
        box_lo, box_hi = cl - self.lo, self.hi - cl
        grad[ci] += -1.0 / box_lo + 1.0 / box_hi
        hess[ci, ci] += 1.0 / box_lo**2 + 1.0 / box_hi**2
        slack = self.budget - cl.sum()
        grad[ci] += 1.0 / slack
        hess[ocl:, ocl:] += 1.0 / slack**2
        return grad[None], hess[None]


def solve_linearized_direct(
    channels,
    xi_bar,
    cache_point,
    radius: float,
    config: SystemConfig,
    objective_sense: str = "time",
    pk=None,
    kkt_tol: float = 1e-9,
):
    """Reference single-shot solve of the linearized trust-region problem:
    all samples plus the shared cache vector in one barrier pass.

    ``channels`` is (B, L, M) (the batch may stack sample/file pairs whose
    objective terms are weighted by ``pk``); ``cache_point`` is the shared
    (L,) linearization cache.  Returns ``(C (L,), xi (B,), W (B, M, M),
    objective)``.
    """
    h = _as_vector_batch(channels)
    B, L = h.shape[0], h.shape[1]
    m = h.shape[-1]
    coeffs = rate_coefficients(h, config.sigma2)
    xi_bar = np.broadcast_to(np.asarray(xi_bar, dtype=float), (B,)).copy()
    cbar = np.asarray(cache_point, dtype=float).reshape(-1).copy()
    pk = (
        np.ones(B)
        if pk is None
        else np.broadcast_to(np.asarray(pk, dtype=float), (B,)).copy()
    )
    F = config.file_size
    lo = np.maximum(cbar - radius, 0.0)
    hi = np.minimum(cbar + radius, F)

    block = _PsdPowerBlock(m, config.power)
    prob = _DirectLinearizedProblem(
        block, coeffs, xi_bar, cbar, radius, objective_sense, pk, F,
        config.total_cache, lo, hi,
    )
    x0 = np.zeros(prob.d)
    xw0 = _isotropic_start(block, B)
    x0[: B * block.A] = xw0.reshape(-1)
    span = hi - lo
    c0 = lo + np.minimum(0.5 * span, np.maximum(1e-3 * span, cbar - lo))
    if c0.sum() >= config.total_cache:
        c0 = lo + (c0 - lo) * 0.95 * max(config.total_cache - lo.sum(), 0.0) / max(
            (c0 - lo).sum(), 1e-300
        )
    x0[B * block.A + B :] = c0
    tau0 = np.einsum("bla,ba->bl", coeffs, xw0)
    rates0 = np.log1p(np.maximum(tau0, 0.0)) / LN2
    head = (
        xi_bar[:, None]
        + (rates0 - xi_bar[:, None] * (F - c0[None, :])) / (F - cbar[None, :])
    ).min(axis=1)
    hi_cap = np.minimum(head - 1e-6 * (1.0 + np.abs(head)), xi_bar + 0.999 * radius)
    lo_cap = xi_bar - 0.999 * radius
    if objective_sense == "time":
        lo_cap = np.maximum(lo_cap, 1e-6 * xi_bar)
    if np.any(hi_cap <= lo_cap):
        raise NumericalError(
            "could not build a strictly feasible start for the direct solve",
            diagnostics={"hi_cap": hi_cap, "lo_cap": lo_cap},
        )
    x0[B * block.A : B * block.A + B] = 0.5 * (lo_cap + hi_cap)
    if not np.isfinite(prob.phi(x0[None], 1.0)[0]):
        raise NumericalError("direct solve start point infeasible")
    x, _, _, _ = _barrier_solve(prob, x0[None], 1.0, kkt_tol)
    xw, xi, cl = prob.split(x[0])
    return cl.copy(), xi.copy(), mat_from_params(xw, m), float(
        prob.objective_vec(x[0]).sum()
    )
