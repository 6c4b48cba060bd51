"""Imaginary-time flow: integration, energy drift, and area preservation.

The flow is the first-order system dq/dtau = qtilde, dqtilde/dtau = -dV/dq,
integrated with classical RK4. The continuous flow preserves both the total
energy E = -L and the area element dqtilde dq; the checks here measure the
discrete residual of those statements (O(dtau^4) for RK4).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (BlowUpError, DomainError, NumericalError,
                     PreconditionError, SelfIntersectionWarning)
from .model import Observable, SystemSpec, TangentPoint


@dataclass(frozen=True)
class Trajectory:
    """Samples of one integrated path: taus (n,), qs and qtildes (n, d)."""

    taus: np.ndarray
    qs: np.ndarray
    qtildes: np.ndarray
    step: float
    final_step_partial: bool = False

    def __len__(self) -> int:
        return self.taus.shape[0]

    def point(self, i: int) -> TangentPoint:
        return TangentPoint(q=self.qs[i], qtilde=self.qtildes[i])

    def samples(self):
        """Iterate (tau, TangentPoint) pairs."""
        for i in range(len(self)):
            yield float(self.taus[i]), self.point(i)

    def energies(self, system: SystemSpec) -> np.ndarray:
        kin = 0.5 * np.sum(self.qtildes * self.qtildes, axis=1)
        pot = np.sum(system.potential.value(self.qs), axis=1)
        return kin + pot


def _check_step(dtau: float):
    if not (math.isfinite(dtau) and dtau > 0):
        raise PreconditionError("dtau must be positive and finite")


def _split_duration(tau_end: float, dtau: float) -> tuple[int, float]:
    """Number of full dtau steps plus the leftover partial step (>= 0)."""
    n_full = int(math.floor(tau_end / dtau + 1e-9))
    remainder = tau_end - n_full * dtau
    if remainder <= 1e-12 * max(1.0, abs(tau_end)):
        remainder = 0.0
    return n_full, remainder


def _raise_if_blowup(taus, qs, qts):
    ok = np.isfinite(qs).all(axis=1) & np.isfinite(qts).all(axis=1)
    if not ok.all():
        i = int(np.argmin(ok))
        raise BlowUpError(taus[i], qs[i], qts[i])


def flow_step(system: SystemSpec, x: TangentPoint, dtau: float) -> TangentPoint:
    """One RK4 step of the imaginary-time flow."""
    _check_step(dtau)
    kind, params = system.potential.kernel_args()
    q, qt = _kernels.rk4_advect(kind, params, x.q.reshape(1, -1),
                                x.qtilde.reshape(1, -1), dtau, 1)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qt))):
        raise BlowUpError(dtau, q[0], qt[0])
    return TangentPoint(q=q[0], qtilde=qt[0])


def integrate(system: SystemSpec, x0: TangentPoint, tau_end: float,
              dtau: float) -> Trajectory:
    """Integrate from tau=0 to tau_end, recording every step.

    dtau need not divide tau_end: a final partial step is taken and flagged
    on the returned trajectory.
    """
    if not (math.isfinite(tau_end) and tau_end > 0):
        raise PreconditionError("tau_end must be positive and finite")
    _check_step(dtau)
    if x0.d != system.dof:
        raise DomainError(f"x0 has {x0.d} coordinates, system has {system.dof}")
    kind, params = system.potential.kernel_args()
    n_full, remainder = _split_duration(tau_end, dtau)
    qs, qts = _kernels.rk4_path(kind, params, x0.q, x0.qtilde, dtau, n_full)
    taus = np.arange(n_full + 1) * dtau
    partial = remainder > 0.0
    if partial:
        q_last, qt_last = _kernels.rk4_advect(kind, params, qs[-1:], qts[-1:],
                                              remainder, 1)
        qs = np.vstack([qs, q_last])
        qts = np.vstack([qts, qt_last])
        taus = np.append(taus, tau_end)
    _raise_if_blowup(taus, qs, qts)
    return Trajectory(taus=taus, qs=qs, qtildes=qts, step=dtau,
                      final_step_partial=partial)


def energy_drift(system: SystemSpec, traj: Trajectory) -> float:
    """max over samples of |E(tau) - E(0)|."""
    if len(traj) == 0:
        raise PreconditionError("trajectory is empty")
    energies = traj.energies(system)
    return float(np.max(np.abs(energies - energies[0])))


def jacobian_determinant(system: SystemSpec, x0: TangentPoint, tau: float,
                         dtau: float) -> float:
    """det of the flow's tangent map after time tau (1 exactly for the
    continuous flow; the deviation measures the integrator residual)."""
    if tau < 0 or not math.isfinite(tau):
        raise PreconditionError("tau must be >= 0 and finite")
    if tau == 0:
        return 1.0
    _check_step(dtau)
    kind, params = system.potential.kernel_args()
    d = x0.d
    n_full, remainder = _split_duration(tau, dtau)
    q, qt, m = x0.q, x0.qtilde, np.eye(2 * d)
    if n_full > 0:
        q, qt, m = _kernels.rk4_tangent(kind, params, q, qt, m, dtau, n_full)
    if remainder > 0.0:
        q, qt, m = _kernels.rk4_tangent(kind, params, q, qt, m, remainder, 1)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qt)) and np.all(np.isfinite(m))):
        raise BlowUpError(tau, q, qt)
    return float(np.linalg.det(m))


def shoelace_area(qs: np.ndarray, qtildes: np.ndarray) -> float:
    """Signed polygon area in the (q, qtilde) plane (positive when CCW)."""
    x = np.asarray(qs, dtype=float)
    y = np.asarray(qtildes, dtype=float)
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect_any(x: np.ndarray, y: np.ndarray) -> bool:
    """True if any two non-adjacent closed-polygon edges properly cross.

    Candidate pairs come from a uniform spatial grid (cell ~ 4 median edge
    lengths), so the cost stays near-linear for well-resolved boundaries.
    """
    n = len(x)
    if n < 4:
        return False
    a = np.column_stack([x, y])
    b = np.roll(a, -1, axis=0)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    lengths = np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1])
    cell = 4.0 * max(float(np.median(lengths)), 1e-12)
    cx0 = np.floor(lo[:, 0] / cell).astype(np.int64)
    cx1 = np.floor(hi[:, 0] / cell).astype(np.int64)
    cy0 = np.floor(lo[:, 1] / cell).astype(np.int64)
    cy1 = np.floor(hi[:, 1] / cell).astype(np.int64)
    spans = (cx1 - cx0 + 1) * (cy1 - cy0 + 1)
    if float(spans.sum()) > 5e6:
        return False  # degenerate geometry; skip rather than stall
    cells = []
    edges = []
    for i in range(n):
        for cx in range(cx0[i], cx1[i] + 1):
            for cy in range(cy0[i], cy1[i] + 1):
                cells.append((cx << 32) ^ (cy & 0xFFFFFFFF))
                edges.append(i)
    cells = np.asarray(cells, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64)
    order = np.argsort(cells, kind="stable")
    cells = cells[order]
    edges = edges[order]
    pairs_i = []
    pairs_j = []
    start = 0
    for stop in np.append(np.nonzero(np.diff(cells))[0] + 1, len(cells)):
        m = stop - start
        if m > 1:
            grp = edges[start:stop]
            ii, jj = np.meshgrid(grp, grp, indexing="ij")
            keep = ii < jj
            pairs_i.append(ii[keep])
            pairs_j.append(jj[keep])
        start = stop
    if not pairs_i:
        return False
    i = np.concatenate(pairs_i)
    j = np.concatenate(pairs_j)
    # drop adjacent edges (shared endpoint) and duplicate candidates
    keep = (j - i > 1) & ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    if i.size == 0:
        return False
    # bounding-box overlap filter
    keep = ((lo[i, 0] <= hi[j, 0]) & (lo[j, 0] <= hi[i, 0])
            & (lo[i, 1] <= hi[j, 1]) & (lo[j, 1] <= hi[i, 1]))
    i, j = i[keep], j[keep]
    if i.size == 0:
        return False

    def cross(o, u, v):
        return ((u[:, 0] - o[:, 0]) * (v[:, 1] - o[:, 1])
                - (u[:, 1] - o[:, 1]) * (v[:, 0] - o[:, 0]))

    d1 = cross(a[j], b[j], a[i])
    d2 = cross(a[j], b[j], b[i])
    d3 = cross(a[i], b[i], a[j])
    d4 = cross(a[i], b[i], b[j])
    return bool(np.any((d1 * d2 < 0) & (d3 * d4 < 0)))


@dataclass(frozen=True)
class TangentPolygon:
    """A simple CCW polygon in the (q, qtilde) plane (1 degree of freedom)."""

    qs: np.ndarray
    qtildes: np.ndarray

    def __post_init__(self):
        qs = np.array(self.qs, dtype=float).reshape(-1)
        qts = np.array(self.qtildes, dtype=float).reshape(-1)
        if qs.shape != qts.shape or qs.shape[0] < 3:
            raise PreconditionError("polygon needs >= 3 (q, qtilde) vertices")
        if not (np.all(np.isfinite(qs)) and np.all(np.isfinite(qts))):
            raise DomainError("polygon vertices must be finite")
        if shoelace_area(qs, qts) <= 0:
            raise PreconditionError("polygon must be counterclockwise")
        if _segments_intersect_any(qs, qts):
            raise PreconditionError("polygon must be simple at tau = 0")
        qs.flags.writeable = False
        qts.flags.writeable = False
        object.__setattr__(self, "qs", qs)
        object.__setattr__(self, "qtildes", qts)

    @property
    def n_vertices(self) -> int:
        return self.qs.shape[0]

    def vertices(self) -> list[TangentPoint]:
        return [TangentPoint(q=[self.qs[i]], qtilde=[self.qtildes[i]])
                for i in range(self.n_vertices)]

    def area(self) -> float:
        return abs(shoelace_area(self.qs, self.qtildes))

    @classmethod
    def rectangle(cls, q_lo: float, q_hi: float, qt_lo: float, qt_hi: float,
                  per_side: int = 1) -> "TangentPolygon":
        """Axis-aligned CCW rectangle, each side split into per_side segments."""
        if not (q_hi > q_lo and qt_hi > qt_lo):
            raise PreconditionError("rectangle needs q_hi > q_lo and qt_hi > qt_lo")
        if per_side < 1:
            raise PreconditionError("per_side must be >= 1")
        t = np.linspace(0.0, 1.0, per_side + 1)[:-1]
        bottom = np.column_stack([q_lo + (q_hi - q_lo) * t, np.full_like(t, qt_lo)])
        right = np.column_stack([np.full_like(t, q_hi), qt_lo + (qt_hi - qt_lo) * t])
        top = np.column_stack([q_hi - (q_hi - q_lo) * t, np.full_like(t, qt_hi)])
        left = np.column_stack([np.full_like(t, q_lo), qt_hi - (qt_hi - qt_lo) * t])
        pts = np.vstack([bottom, right, top, left])
        return cls(qs=pts[:, 0], qtildes=pts[:, 1])

    @classmethod
    def unit_square(cls, per_side: int = 1) -> "TangentPolygon":
        return cls.rectangle(0.0, 1.0, 0.0, 1.0, per_side=per_side)


def _advect_batch(kind, params, pts: np.ndarray, dtau: float, n_steps: int,
                  remainder: float = 0.0) -> np.ndarray:
    """Advect (n, 2) points given as columns (q, qtilde)."""
    q, qt = pts[:, :1].copy(), pts[:, 1:].copy()
    if n_steps > 0:
        q, qt = _kernels.rk4_advect(kind, params, q, qt, dtau, n_steps)
    if remainder > 0.0:
        q, qt = _kernels.rk4_advect(kind, params, q, qt, remainder, 1)
    return np.column_stack([q[:, 0], qt[:, 0]])


def area_evolution(system: SystemSpec, poly: TangentPolygon, tau_end: float,
                   dtau: float, n_checkpoints: int = 33, refine: bool = True,
                   max_edge_factor: float = 10.0,
                   check_intersections: bool = True,
                   max_vertices: int = 200_000) -> list[tuple[float, float]]:
    """Advect a polygon's boundary and report its shoelace area over time.

    Every vertex is advected by the flow. When an advected edge grows past
    ``max_edge_factor`` times the largest initial edge length, the edge is
    split: the midpoint of the corresponding initial (tau = 0) edge is
    integrated up to the current time, so inserted vertices always lie on
    the true advected boundary. Chord crossings (an under-resolution
    symptom) are reported as SelfIntersectionWarning with the offending tau.
    """
    if system.dof != 1:
        raise PreconditionError("area tracking requires a 1-dof system")
    if not (math.isfinite(tau_end) and tau_end >= 0):
        raise PreconditionError("tau_end must be >= 0 and finite")
    if n_checkpoints < 2:
        raise PreconditionError("need at least 2 checkpoints")
    _check_step(dtau)
    kind, params = system.potential.kernel_args()

    pre = np.column_stack([poly.qs, poly.qtildes])  # tau = 0 preimages
    cur = pre.copy()
    edge0 = np.linalg.norm(np.roll(pre, -1, axis=0) - pre, axis=1)
    threshold = max_edge_factor * float(edge0.max())

    n_full, remainder = _split_duration(tau_end, dtau) if tau_end > 0 else (0, 0.0)
    ck = np.unique(np.round(np.linspace(0, n_full, n_checkpoints)).astype(int))
    events = [(int(i), 0.0) for i in ck]
    if remainder > 0.0:
        events.append((n_full, remainder))

    results: list[tuple[float, float]] = []
    warned = False
    prev_idx, prev_rem = 0, 0.0
    for idx, rem in events:
        n_seg = idx - prev_idx
        rem_seg = rem - prev_rem
        if n_seg > 0 or rem_seg > 0.0:
            cur = _advect_batch(kind, params, cur, dtau, n_seg, rem_seg)
        prev_idx, prev_rem = idx, rem
        tau_here = tau_end if (idx == n_full and rem == remainder and tau_end > 0) \
            else idx * dtau + rem
        if not np.all(np.isfinite(cur)):
            bad = int(np.argmin(np.isfinite(cur).all(axis=1)))
            raise BlowUpError(tau_here, [cur[bad, 0]], [cur[bad, 1]])
        if refine:
            cur, pre = _refine(kind, params, cur, pre, threshold, dtau, idx,
                               rem, max_vertices)
        area = abs(shoelace_area(cur[:, 0], cur[:, 1]))
        if check_intersections and not warned:
            if _segments_intersect_any(cur[:, 0], cur[:, 1]):
                warnings.warn(
                    f"advected polygon boundary self-intersects at tau={tau_here:.6g}"
                    " (refine more aggressively or reduce dtau)",
                    SelfIntersectionWarning)
                warned = True
        results.append((float(tau_here), float(area)))
    return results


def _refine(kind, params, cur, pre, threshold, dtau, idx, remainder,
            max_vertices):
    """Split over-stretched edges by advecting initial-edge midpoints."""
    for _ in range(40):
        nxt = np.roll(cur, -1, axis=0)
        lengths = np.linalg.norm(nxt - cur, axis=1)
        bad = np.nonzero(lengths > threshold)[0]
        if bad.size == 0:
            return cur, pre
        if cur.shape[0] + bad.size > max_vertices:
            raise NumericalError(
                f"polygon refinement exceeded {max_vertices} vertices")
        pre_next = np.roll(pre, -1, axis=0)
        mids_pre = 0.5 * (pre[bad] + pre_next[bad])
        mids_cur = _advect_batch(kind, params, mids_pre.copy(), dtau, idx, remainder)
        cur = _interleave(cur, mids_cur, bad)
        pre = _interleave(pre, mids_pre, bad)
    return cur, pre


def _interleave(arr, inserts, after_idx):
    """Insert rows of ``inserts`` after positions ``after_idx`` of ``arr``."""
    return np.insert(arr, after_idx + 1, inserts, axis=0)


def density_along_flow(system: SystemSpec, rho0: Observable, x0: TangentPoint,
                       tau: float, dtau: float) -> tuple[float, float]:
    """Evaluate a density at x0 and at the point advected by time tau.

    Under advection the transported density is constant along paths, so for
    an equilibrium (energy-function) density the two values agree; for a
    non-equilibrium density they generally do not.
    """
    if not (math.isfinite(tau) and tau >= 0):
        raise PreconditionError("tau must be >= 0 and finite")
    rho_start = rho0.evaluate(x0, system)
    if tau == 0:
        return rho_start, rho_start
    _check_step(dtau)
    kind, params = system.potential.kernel_args()
    n_full, remainder = _split_duration(tau, dtau)
    q, qt = x0.q.reshape(1, -1).copy(), x0.qtilde.reshape(1, -1).copy()
    if n_full > 0:
        q, qt = _kernels.rk4_advect(kind, params, q, qt, dtau, n_full)
    if remainder > 0.0:
        q, qt = _kernels.rk4_advect(kind, params, q, qt, remainder, 1)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qt))):
        raise BlowUpError(tau, q[0], qt[0])
    rho_end = rho0.evaluate(TangentPoint(q=q[0], qtilde=qt[0]), system)
    return rho_start, rho_end
