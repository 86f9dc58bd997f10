"""Square-mission reference trajectory."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import MissionSpec

_LEG_DIRECTIONS = {
    "forward": (1.0, 0.0),
    "up": (0.0, 1.0),
    "back": (-1.0, 0.0),
    "down": (0.0, -1.0),
}


@dataclass
class Reference:
    """Reference pose and its rate on the simulation time grid.

    Attributes
    ----------
    t : ndarray, shape (n,)
    eta : ndarray, shape (n, 3)
        Reference (x, z, theta).
    eta_dot : ndarray, shape (n, 3)
        Earth-frame rate by finite difference.
    corners : ndarray, shape (len(legs) + 1, 2)
    waypoints : ndarray, shape (m, 2)
        Uniformly spaced points along the legs.
    """

    t: np.ndarray
    eta: np.ndarray
    eta_dot: np.ndarray
    corners: np.ndarray
    waypoints: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def state(self, k: int) -> np.ndarray:
        """Reference as a 6-vector; with theta_r = 0 the body velocity equals ``eta_dot``."""
        k = min(k, len(self.t) - 1)
        return np.concatenate([self.eta[k], self.eta_dot[k]])

    def window(self, k: int, n: int) -> np.ndarray:
        """``n`` consecutive reference states from step k, held at the final value."""
        idx = np.minimum(np.arange(k, k + n), len(self.t) - 1)
        return np.hstack([self.eta[idx], self.eta_dot[idx]])

    @property
    def path_length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.corners, axis=0), axis=1)))


def square_corners(spec: MissionSpec) -> np.ndarray:
    pts = [np.array(spec.start[:2], dtype=float)]
    for leg in spec.legs:
        pts.append(pts[-1] + spec.side * np.asarray(_LEG_DIRECTIONS[leg]))
    return np.array(pts)


def _waypoints(corners: np.ndarray, spacing: float) -> np.ndarray:
    out = [corners[:1]]
    for a, b in zip(corners[:-1], corners[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing - 1e-9)))
        s = np.arange(1, n + 1) / n
        out.append(a + s[:, None] * (b - a))
    return np.vstack(out)


def generate_reference(spec: MissionSpec) -> Reference:
    """Hold the start pose while the wave record accumulates, then run the square.

    Waypoints are uniformly spaced along the legs and visited at a constant
    rate so the square closes exactly at the end of the mission. Pitch
    reference is zero throughout.
    """
    n = spec.n_steps
    t = spec.dt * np.arange(n)
    corners = square_corners(spec)
    wps = _waypoints(corners, spec.spacing)
    k0 = spec.n_record
    # waypoint index as a continuous function of time during phase 2
    s = np.clip((np.arange(n) - k0) / max(n - 1 - k0, 1), 0.0, 1.0) * (len(wps) - 1)
    i = np.minimum(np.floor(s).astype(int), len(wps) - 2)
    frac = (s - i)[:, None]
    xz = wps[i] * (1.0 - frac) + wps[i + 1] * frac
    eta = np.column_stack([xz, np.zeros(n)])
    eta_dot = np.gradient(eta, spec.dt, axis=0)
    return Reference(t, eta, eta_dot, corners, wps)
