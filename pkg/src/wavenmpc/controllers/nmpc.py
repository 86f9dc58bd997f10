"""Preview NMPC transcribed by direct multiple shooting and solved by SQP.

Decision vector: states ``x_1..x_N`` followed by controls ``mu_0..mu_{N-1}``.
Stages are linked by RK4 defects ``x_{k+1} - F(x_k, mu_k; d_k)`` where
``d_k`` is the stage disturbance: either a previewed body-frame load, or the
previewed earth-frame particle kinematics, which the model turns into a load
at the planned attitude (positions stay frozen at the solve-time pose).

The SQP linearises the defects (finite-difference Jacobians batched over all
stages), condenses the QP onto the controls and solves it with the dual
active-set solver in :mod:`.qp`. The Lagrangian Hessian is the exact
objective Hessian plus the dynamics curvature weighted by the defect
multipliers (second differences, again batched); after condensing, its
eigenvalues are floored to keep the QP convex. Globalisation is an l1 merit
line search with a rollout-based second-order correction.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ..dswp import DisturbancePreview
from ..vehicle import (CONTROL_DIM, STATE_DIM, VehicleParams, actuator_limits, body_wave_load,
                       hover_force, rk4_step, rk4_step_single)
from .qp import QPInfeasibleError, QPIterationLimitError, solve_qp

log = logging.getLogger(__name__)

NX, NU = STATE_DIM, CONTROL_DIM


def _diag3(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.diag(v) if v.ndim == 1 else v


@dataclass
class NmpcConfig:
    horizon: int = 20
    dt: float = 0.1
    Q: np.ndarray = field(default_factory=lambda: np.diag([250.0, 250.0, 250.0]))
    P: np.ndarray = field(default_factory=lambda: np.diag([250.0, 250.0, 250.0]))
    R: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 1.0]))
    terminal_radius: tuple[float, float, float] = (0.25, 0.25, 0.15)
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    tol_kkt: float = 1e-6
    tol_feas: float = 1e-8
    max_iter: int = 30
    warm_start: bool = True
    # weight R on mu / mu_max instead of on raw forces
    normalized_control: bool = True
    # penalise mu - hover force rather than mu, so holding station costs nothing
    effort_about_hover: bool = True
    max_relaxations: int = 3
    # merit history length for the nonmonotone line search (1 = monotone)
    nonmonotone: int = 1
    fd_step: float = 1e-6
    # "exact" adds the dynamics curvature by finite differences; "gauss_newton" drops it
    hessian: str = "exact"
    # evaluate the previewed load at each stage's planned pitch when the preview carries kinematics
    attitude_preview: bool = True
    # False plans against a calm sea whatever the preview says (ablation)
    use_preview: bool = True

    def __post_init__(self):
        self.Q, self.P, self.R = _diag3(self.Q), _diag3(self.P), _diag3(self.R)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        for name in ("Q", "P"):
            m = getattr(self, name)
            if m.shape not in ((3, 3), (6, 6)) or np.any(np.diag(m) < 0) or np.any(m != np.diag(np.diag(m))):
                raise ValueError(f"{name} must be a nonnegative diagonal 3x3 or 6x6 matrix")
        if np.any(np.linalg.eigvalsh(self.R) < 0):
            raise ValueError("R must be positive semidefinite")
        if np.any(np.asarray(self.terminal_radius) <= 0):
            raise ValueError("terminal radius must be positive")
        if self.hessian not in ("exact", "gauss_newton"):
            raise ValueError(f"unknown hessian mode {self.hessian!r}")

    def with_bounds(self, p: VehicleParams) -> "NmpcConfig":
        lo, hi = actuator_limits(p)
        return replace(self, lower=lo, upper=hi)

    def state_weight(self, terminal: bool) -> np.ndarray:
        m = self.P if terminal else self.Q
        if m.shape == (6, 6):
            return m
        W = np.zeros((NX, NX))
        W[:3, :3] = m
        return W

    def control_weight(self) -> np.ndarray:
        if not self.normalized_control:
            return self.R
        if self.upper is None:
            raise ValueError("normalized_control needs control bounds")
        s = 1.0 / np.asarray(self.upper, dtype=float)
        return self.R * np.outer(s, s)


StepFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def vehicle_step(p: VehicleParams, dt: float) -> StepFn:
    """RK4 stage map ``F(x, mu, d)``, batched over leading dimensions.

    ``d`` with 3 columns is a body-frame load held over the step. A longer
    row is flattened earth-frame kinematics (see :func:`stage_data`), rotated
    into the body frame at the pitch of every RK4 sub-stage.
    """
    def step(x, mu, d):
        d = np.asarray(d, dtype=float)
        if np.ndim(x) == 1 and d.ndim == 1:
            if len(d) == NU:
                return rk4_step_single(x, mu, dt, p, tau=d)
            return rk4_step_single(x, mu, dt, p, kin=d.reshape(-1, 4))
        if d.shape[-1] == NU:
            return rk4_step(x, mu, d, dt, p, wrap=False)
        kin = d.reshape(d.shape[:-1] + (-1, 4))
        return rk4_step(x, mu, lambda t, xx: body_wave_load(p, kin, xx[..., 2]), dt, p,
                        wrap=False)
    # F(x + (a, b, 0, ...)) = F(x) + (a, b, 0, ...): the load is exogenous, so the
    # map does not depend on position and derivatives can be taken at the origin
    step.translation_invariant = True
    return step


def stage_data(preview: DisturbancePreview | np.ndarray, attitude: bool = True) -> np.ndarray:
    """Per-stage disturbance rows for the NLP, shape (n, 3) or (n, 4 * (1 + n_strip))."""
    if isinstance(preview, DisturbancePreview):
        if attitude and preview.kinematics is not None:
            return preview.kinematics.reshape(len(preview), -1)
        return preview.loads
    d = np.asarray(preview, dtype=float)
    return d if d.ndim == 2 else d.reshape(-1, NU)


@dataclass
class NlpProblem:
    """One multiple-shooting instance."""

    x0: np.ndarray
    refs: np.ndarray          # (N+1, 6) reference states at stage times
    taus: np.ndarray          # (N, D) stage disturbance, see vehicle_step
    mu_prev: np.ndarray       # last applied control, for the first rate term
    step: StepFn
    cfg: NmpcConfig
    radius: np.ndarray = None
    mu_ref: np.ndarray = None  # control the effort term is measured from

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.refs = np.asarray(self.refs, dtype=float)
        self.taus = np.asarray(self.taus, dtype=float)
        if self.taus.ndim != 2:
            raise ValueError("stage disturbance must be a 2-D array")
        self.mu_prev = np.asarray(self.mu_prev, dtype=float)
        self.mu_ref = np.zeros(NU) if self.mu_ref is None else np.asarray(self.mu_ref, dtype=float)
        if self.radius is None:
            self.radius = np.asarray(self.cfg.terminal_radius, dtype=float)
        if self.refs.shape != (self.N + 1, NX):
            raise ValueError(f"refs must have shape {(self.N + 1, NX)}, got {self.refs.shape}")
        lo = self.cfg.lower if self.cfg.lower is not None else np.full(NU, -np.inf)
        hi = self.cfg.upper if self.cfg.upper is not None else np.full(NU, np.inf)
        self.lower = np.tile(np.asarray(lo, dtype=float), self.N)
        self.upper = np.tile(np.asarray(hi, dtype=float), self.N)
        self.W_stage = self.cfg.state_weight(False)
        self.W_term = self.cfg.state_weight(True)
        self.Rc = self.cfg.control_weight()

    @property
    def N(self) -> int:
        return len(self.taus)

    @property
    def n_vars(self) -> int:
        return self.N * (NX + NU)

    def pack(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(X)[1:].ravel(), np.asarray(U).ravel()])

    def unpack(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        N = self.N
        X = np.vstack([self.x0, w[:N * NX].reshape(N, NX)])
        return X, w[N * NX:].reshape(N, NU)

    def objective(self, X: np.ndarray, U: np.ndarray) -> float:
        E = X - self.refs
        J = float(np.einsum("ki,ij,kj->", E[:-1], self.W_stage, E[:-1]))
        J += float(E[-1] @ self.W_term @ E[-1])
        dU = np.diff(np.vstack([self.mu_prev, U]), axis=0)
        Ue = U - self.mu_ref
        J += float(np.einsum("ki,ij,kj->", Ue, self.Rc, Ue))
        J += float(np.einsum("ki,ij,kj->", dU, self.Rc, dU))
        return J

    def defects(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        return X[1:] - self.step(X[:-1], U, self.taus)

    def terminal_violation(self, X: np.ndarray, radius=None) -> np.ndarray:
        r = self.radius if radius is None else radius
        e = X[-1, :3] - self.refs[-1, :3]
        return np.maximum(np.abs(e) - r, 0.0)

    def rollout(self, U: np.ndarray) -> np.ndarray:
        X = [self.x0]
        for k in range(self.N):
            X.append(self.step(X[-1], U[k], self.taus[k]))
        return np.array(X)

    def _local(self, xs: np.ndarray) -> np.ndarray:
        """States moved to the origin in position when the stage map allows it.

        Differencing around x ~ 50 m would otherwise lose about three digits
        to cancellation.
        """
        if not getattr(self.step, "translation_invariant", False):
            return xs
        out = np.array(xs, dtype=float)
        out[..., :2] = 0.0
        return out

    def linearize(self, X: np.ndarray, U: np.ndarray, h: float = 1e-6):
        """Batched central differences: (F, A, B) for every stage."""
        N = self.N
        xs, us, ts = self._local(X[:-1]), U, self.taus
        hx = h * np.maximum(1.0, np.abs(xs))            # (N, 6)
        hu = h * np.maximum(1.0, np.abs(us))            # (N, 3)
        nz = NX + NU
        Xb = np.repeat(xs[:, None, :], 2 * nz + 1, axis=1)
        Ub = np.repeat(us[:, None, :], 2 * nz + 1, axis=1)
        idx = np.arange(NX)
        Xb[:, 1 + idx, idx] += hx
        Xb[:, 1 + nz + idx, idx] -= hx
        jdx = np.arange(NU)
        Ub[:, 1 + NX + jdx, jdx] += hu
        Ub[:, 1 + nz + NX + jdx, jdx] -= hu
        Tb = np.repeat(ts[:, None, :], 2 * nz + 1, axis=1)
        out = self.step(Xb, Ub, Tb)                      # (N, 2nz+1, 6)
        F = out[:, 0] + (X[:-1] - xs)
        plus, minus = out[:, 1:1 + nz], out[:, 1 + nz:]
        steps = np.concatenate([hx, hu], axis=1)         # (N, nz)
        Jac = (plus - minus) / (2.0 * steps[:, :, None])  # (N, nz, 6)
        Jac = np.transpose(Jac, (0, 2, 1))               # (N, 6, nz)
        return F, Jac[:, :, :NX], Jac[:, :, NX:]

    def defect_curvature(self, X: np.ndarray, U: np.ndarray, lam: np.ndarray,
                         h: float = 1e-4) -> np.ndarray:
        """Hessians of ``lam_k' F(x_k, mu_k)`` in ``(x_k, mu_k)``, shape (N, 9, 9).

        Four-point second differences; all stages and perturbations in one batch.
        """
        nz = NX + NU
        z = np.concatenate([self._local(X[:-1]), U], axis=1)
        hz = h * np.maximum(1.0, np.abs(z))
        ii, jj = np.triu_indices(nz)
        m = len(ii)
        Zb = np.repeat(z[:, None, None, :], 4, axis=1).repeat(m, axis=2)   # (N, 4, m, nz)
        ar = np.arange(m)
        for s_idx, (si, sj) in enumerate(((1, 1), (1, -1), (-1, 1), (-1, -1))):
            Zb[:, s_idx, ar, ii] += si * hz[:, ii]
            Zb[:, s_idx, ar, jj] += sj * hz[:, jj]
        Zb = Zb.reshape(len(z), 4 * m, nz)
        T = np.repeat(self.taus[:, None, :], 4 * m, axis=1)
        out = self.step(Zb[..., :NX], Zb[..., NX:], T)
        psi = np.einsum("kmi,ki->km", out, lam).reshape(len(z), 4, m)
        d2 = (psi[:, 0] - psi[:, 1] - psi[:, 2] + psi[:, 3]) / (4.0 * hz[:, ii] * hz[:, jj])
        Hs = np.zeros((len(z), nz, nz))
        Hs[:, ii, jj] = d2
        Hs[:, jj, ii] = d2
        return Hs


@dataclass
class ControlSolution:
    U: np.ndarray
    X: np.ndarray
    cost: float
    iterations: int
    kkt_residual: float
    max_defect: float
    solve_time: float
    status: str = "optimal"
    relaxations: int = 0
    radius: np.ndarray = None
    rollout_error: float = 0.0   # max |open-loop rollout of U - X|

    @property
    def mu0(self) -> np.ndarray:
        return self.U[0]

    def shifted(self, steps: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Warm start: drop the first ``steps`` stages and repeat the last one."""
        U = np.vstack([self.U[steps:]] + [self.U[-1:]] * steps)
        X = np.vstack([self.X[steps:]] + [self.X[-1:]] * steps)
        return X, U


def transcribe(x0, refs, preview: DisturbancePreview | np.ndarray, cfg: NmpcConfig,
               step: StepFn, mu_prev=None, mu_ref=None) -> NlpProblem:
    """Build the NLP for a horizon of ``cfg.horizon`` stages.

    ``refs`` must cover ``horizon + 1`` stage times and the preview
    ``horizon`` stages; a shorter preview is an error here (the caller
    truncates the horizon first).
    """
    taus = stage_data(preview, cfg.attitude_preview)
    N = cfg.horizon
    if len(taus) < N:
        raise ValueError(f"preview covers {len(taus)} stages, horizon needs {N}")
    refs = np.asarray(refs, dtype=float)
    if len(refs) < N + 1:
        raise ValueError(f"reference window covers {len(refs)} samples, need {N + 1}")
    mu_prev = np.zeros(NU) if mu_prev is None else mu_prev
    return NlpProblem(x0, refs[:N + 1], taus[:N], mu_prev, step, cfg, mu_ref=mu_ref)


class SqpSolver:
    def __init__(self, cfg: NmpcConfig):
        self.cfg = cfg

    def _condense(self, prob: NlpProblem, A, B, c):
        N = prob.N
        G = np.zeros((N + 1, NX, N * NU))
        h = np.zeros((N + 1, NX))
        for k in range(N):
            G[k + 1] = A[k] @ G[k]
            G[k + 1][:, k * NU:(k + 1) * NU] += B[k]
            h[k + 1] = A[k] @ h[k] - c[k]
        return G, h

    def _control_quadratic(self, prob: NlpProblem):
        """Hessian and linear term of the control and rate penalties in U."""
        N = prob.N
        R = prob.Rc
        Hc = np.zeros((N * NU, N * NU))
        for k in range(N):
            s = slice(k * NU, (k + 1) * NU)
            Hc[s, s] += 2.0 * R + 2.0 * R
            if k + 1 < N:
                s2 = slice((k + 1) * NU, (k + 2) * NU)
                Hc[s, s] += 2.0 * R
                Hc[s, s2] -= 2.0 * R
                Hc[s2, s] -= 2.0 * R
        gc = np.tile(-2.0 * R @ prob.mu_ref, N)
        gc[:NU] += -2.0 * R @ prob.mu_prev
        return Hc, gc

    def _curvature(self, prob: NlpProblem, X, U, lam, G, h):
        """Condensed dynamics curvature of the Lagrangian."""
        N = prob.N
        K = -prob.defect_curvature(X, U, lam)
        Hadd = np.zeros((N * NU, N * NU))
        gadd = np.zeros(N * NU)
        for k in range(N):
            T = np.zeros((NX + NU, N * NU))
            T[:NX] = G[k]
            T[NX:, k * NU:(k + 1) * NU] = np.eye(NU)
            Hadd += T.T @ K[k] @ T
            gadd += T.T @ (K[k][:, :NX] @ h[k])
        return Hadd, gadd

    def _qp(self, prob: NlpProblem, X, U, Hc, gc, radius, lam=None):
        N = prob.N
        F, A, B = prob.linearize(X, U, self.cfg.fd_step)
        c = X[1:] - F
        G, h = self._condense(prob, A, B, c)
        E = X - prob.refs
        Hq = Hc.copy()
        gq = Hc @ U.ravel() + gc
        if lam is not None and self.cfg.hessian == "exact":
            Hadd, gadd = self._curvature(prob, X, U, lam, G, h)
            Hq += Hadd
            gq += gadd
        for k in range(1, N + 1):
            W = prob.W_term if k == N else prob.W_stage
            rows = np.flatnonzero(np.diag(W))
            if rows.size == 0:
                continue
            Gk = G[k][rows]
            Wk = W[np.ix_(rows, rows)]
            Hq += 2.0 * Gk.T @ Wk @ Gk
            gq += 2.0 * Gk.T @ Wk @ (E[k, rows] + h[k, rows])
        Hq = 0.5 * (Hq + Hq.T)
        floor = 1e-9 * max(1.0, np.abs(Hq).max())
        if lam is not None and self.cfg.hessian == "exact":
            w, V = np.linalg.eigh(Hq)
            if w.min() < floor:
                Hq = (V * np.maximum(w, floor)) @ V.T
        else:
            # keep the QP strictly convex when weights vanish
            Hq += floor * np.eye(N * NU)
        lb = prob.lower - U.ravel()
        ub = prob.upper - U.ravel()
        eN = E[N, :3] + h[N, :3]
        GN = G[N][:3]
        C = np.vstack([GN, -GN])
        d = np.concatenate([-radius - eN, -radius + eN])
        res = solve_qp(Hq, gq, C, d, lb, ub)
        lam = self._defect_multipliers(prob, A, G, h, E, res)
        return res, G, h, c, Hq, gq, lam

    @staticmethod
    def _defect_multipliers(prob: NlpProblem, A, G, h, E, res) -> np.ndarray:
        """Costates of the linearised defects, by backward recursion.

        Uses the convention L = J + sum lam_k' (dx_{k+1} - A dx_k - B du_k + c_k).
        """
        N = prob.N
        dX = np.einsum("kij,j->ki", G, res.x) + h
        lam = np.zeros((N, NX))
        t_mult = res.mult_general[:3] - res.mult_general[3:]
        gN = 2.0 * prob.W_term @ (E[N] + dX[N])
        gN[:3] -= t_mult
        lam[N - 1] = -gN
        for k in range(N - 1, 0, -1):
            gk = 2.0 * prob.W_stage @ (E[k] + dX[k])
            lam[k - 1] = A[k].T @ lam[k] - gk
        return lam

    def _merit(self, prob: NlpProblem, X, U, rho, radius):
        viol = np.abs(prob.defects(X, U)).sum() + prob.terminal_violation(X, radius).sum()
        return prob.objective(X, U) + rho * viol, viol

    def solve(self, prob: NlpProblem, X0=None, U0=None) -> ControlSolution:
        t_start = time.perf_counter()
        cfg = self.cfg
        N = prob.N
        if U0 is None:
            U = np.zeros((N, NU))
        else:
            U = np.array(U0, dtype=float).reshape(N, NU)
        U = np.clip(U, prob.lower.reshape(N, NU), prob.upper.reshape(N, NU))
        if X0 is None:
            X = prob.rollout(U)
        else:
            X = np.array(X0, dtype=float).reshape(N + 1, NX)
            X[0] = prob.x0
        Hc, gc = self._control_quadratic(prob)
        radius = np.asarray(prob.radius, dtype=float).copy()
        relaxations = 0
        rho = 1.0
        status = "optimal"
        kkt = np.inf
        it = 0
        best = None
        lam = None
        history: list[tuple[np.ndarray, np.ndarray]] = []
        while True:
            try:
                res, G, h, c, Hq, gq, lam = self._qp(prob, X, U, Hc, gc, radius, lam)
            except QPInfeasibleError:
                if status == "terminal_dropped":
                    # infeasible even without an effective terminal set: keep the best iterate
                    status = "qp_failure"
                    X, U, kkt = self._fallback(prob, best, U)
                    break
                if relaxations >= cfg.max_relaxations:
                    radius = radius * 1e6
                    status = "terminal_dropped"
                else:
                    radius = radius * 2.0
                    relaxations += 1
                    log.info("terminal set infeasible; radius relaxed to %s", radius)
                continue
            except QPIterationLimitError:
                status = "qp_failure"
                X, U, kkt = self._fallback(prob, best, U)
                break
            dU = res.x.reshape(N, NU)
            kkt = float(np.abs(Hq @ res.x).max())
            viol = max(float(np.abs(c).max()), float(prob.terminal_violation(X, radius).max()))
            if viol <= cfg.tol_feas:
                cost = prob.objective(X, U)
                if best is None or cost <= best[0]:
                    best = (cost, X.copy(), U.copy(), kkt, viol)
            if kkt <= cfg.tol_kkt and viol <= cfg.tol_feas:
                break
            if it >= cfg.max_iter:
                status = "suboptimal"
                X, U, kkt = self._fallback(prob, best, U)
                break
            it += 1
            dX = np.einsum("kij,j->ki", G, res.x) + h
            lam_max = max(float(np.abs(res.mult_general).max(initial=0.0)),
                          float(np.abs(lam).max(initial=0.0)))
            # exact l1 penalty: rho must dominate every multiplier; it is reset from the
            # current estimates so one bad early QP does not freeze the objective out
            rho = max(2.0 * lam_max, 1.0)
            phi0, viol0 = self._merit(prob, X, U, rho, radius)
            # nonmonotone reference: worst merit over the last few iterates at the current rho
            history = (history + [(X, U)])[-cfg.nonmonotone:]
            phi_ref = max([phi0] + [self._merit(prob, Xh, Uh, rho, radius)[0]
                                    for Xh, Uh in history[:-1]])
            E = X - prob.refs
            grad_dir = self._objective_directional(prob, X, U, E, dX, dU)
            dphi = grad_dir - rho * viol0
            alpha = 1.0
            for _ in range(30):
                Un = U + alpha * dU
                target = phi_ref + 1e-4 * alpha * min(dphi, 0.0)
                Xn = X + alpha * dX
                phi, _ = self._merit(prob, Xn, Un, rho, radius)
                if phi <= target:
                    break
                # second-order correction: project the states onto the dynamics
                Xs = prob.rollout(Un)
                phi_s, _ = self._merit(prob, Xs, Un, rho, radius)
                if phi_s <= target:
                    Xn = Xs
                    break
                if abs(min(phi, phi_s) - phi0) <= 1e-14 * max(1.0, abs(phi0)):
                    break
                alpha *= 0.5
            log.debug("sqp it %d kkt %.3e viol %.3e rho %.3e alpha %.3g", it, kkt, viol, rho, alpha)
            X, U = Xn, Un
            U = np.clip(U, prob.lower.reshape(N, NU), prob.upper.reshape(N, NU))
        cost = prob.objective(X, U)
        return ControlSolution(U=U, X=X, cost=cost, iterations=it, kkt_residual=kkt,
                               max_defect=float(np.abs(prob.defects(X, U)).max()),
                               solve_time=time.perf_counter() - t_start, status=status,
                               relaxations=relaxations, radius=radius,
                               rollout_error=float(np.abs(prob.rollout(U) - X).max()))

    @staticmethod
    def _fallback(prob: NlpProblem, best, U):
        """Best dynamically feasible iterate, else the rollout of the clipped ``U``."""
        if best is not None:
            return best[1], best[2], best[3]
        U = np.clip(U, prob.lower.reshape(prob.N, NU), prob.upper.reshape(prob.N, NU))
        return prob.rollout(U), U, np.inf

    @staticmethod
    def _objective_directional(prob: NlpProblem, X, U, E, dX, dU) -> float:
        gX = 2.0 * np.einsum("ij,kj->ki", prob.W_stage, E[:-1])
        gX = np.vstack([gX, 2.0 * prob.W_term @ E[-1]])
        dUfull = np.diff(np.vstack([prob.mu_prev, U]), axis=0)
        gU = 2.0 * (U - prob.mu_ref) @ prob.Rc.T + 2.0 * dUfull @ prob.Rc.T
        gU[:-1] -= 2.0 * dUfull[1:] @ prob.Rc.T
        return float(np.sum(gX[1:] * dX[1:]) + np.sum(gU * dU))


def solve_nlp(prob: NlpProblem, warm_start: Optional[tuple[np.ndarray, np.ndarray]] = None,
              cfg: Optional[NmpcConfig] = None) -> ControlSolution:
    solver = SqpSolver(cfg or prob.cfg)
    if warm_start is None:
        return solver.solve(prob)
    X0, U0 = warm_start
    return solver.solve(prob, X0, U0)


class NMPC:
    """Receding-horizon controller with disturbance preview."""

    name = "NMPC"

    def __init__(self, params: VehicleParams, cfg: NmpcConfig | None = None):
        cfg = cfg or NmpcConfig()
        if cfg.lower is None or cfg.upper is None:
            cfg = cfg.with_bounds(params)
        self.params = params
        self.cfg = cfg
        self.step_fn = vehicle_step(params, cfg.dt)
        self.solver = SqpSolver(cfg)
        self.mu_ref = hover_force(params) if cfg.effort_about_hover else np.zeros(NU)
        self.prev: Optional[ControlSolution] = None
        self.mu_prev = self.mu_ref.copy()
        self.last: Optional[ControlSolution] = None

    def reset(self, mu_prev=None) -> None:
        self.prev = None
        self.mu_prev = self.mu_ref.copy() if mu_prev is None else np.asarray(mu_prev, float).copy()

    def warm_start_for(self, N: int) -> Optional[tuple[np.ndarray, np.ndarray]]:
        if not self.cfg.warm_start or self.prev is None:
            return None
        X, U = self.prev.shifted(1)
        if len(U) >= N:
            return X[:N + 1], U[:N]
        pad = N - len(U)
        return (np.vstack([X] + [X[-1:]] * pad), np.vstack([U] + [U[-1:]] * pad))

    def step(self, x_hat, refs, preview) -> tuple[np.ndarray, ControlSolution]:
        """Solve and return the first control of the optimal sequence.

        ``refs`` holds at least ``horizon + 1`` reference states from the
        current time on. The horizon is shortened to the preview length if
        the preview was truncated at the end of the predictable region.
        """
        if preview is None or not self.cfg.use_preview:
            preview = np.zeros((self.cfg.horizon, NU))
        taus = stage_data(preview, self.cfg.attitude_preview)
        N = min(self.cfg.horizon, len(taus))
        if N < self.cfg.horizon:
            log.warning("preview covers %d of %d stages; horizon truncated", N, self.cfg.horizon)
        if N < 1:
            # nothing previewed: plan against a calm sea
            N = self.cfg.horizon
            taus = np.zeros((N, NU))
        else:
            taus = taus[:N]
        cfg = self.cfg if N == self.cfg.horizon else replace(self.cfg, horizon=N)
        prob = transcribe(x_hat, refs, taus, cfg, self.step_fn, self.mu_prev, self.mu_ref)
        warm = self.warm_start_for(N)
        if warm is not None:
            warm[0][0] = prob.x0
        sol = solve_nlp(prob, warm, cfg)
        mu = np.clip(sol.mu0, cfg.lower, cfg.upper)
        self.prev = sol
        self.last = sol
        self.mu_prev = mu.copy()
        return mu, sol

    def __call__(self, x_hat, refs, preview) -> np.ndarray:
        return self.step(x_hat, refs, preview)[0]
