"""Learning the focus-sweep schedule by minimizing motion-kernel confusability.

The objective penalizes similarity (squared NCC) between the effective kernels
of opposite motions, which is what makes direction recoverable, and, with a
smaller weight, between kernels of different speeds.  The gradient is exact:
it chains the NCC derivative through the Fourier shifts (whose adjoint is the
opposite shift) into :func:`phasecode.optics.psf_stack` kernel derivatives.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .fourier import pad_centered, shift_multiplier
from .imaging import displacements, trace_size
from .optics import DefocusSchedule, OpticalConfig, PhaseMask, psf_stack


@dataclass(frozen=True)
class CodeObjective:
    velocity_set: tuple = tuple((float(s * v), 0.0) for v in (8, 16, 24) for s in (1, -1))
    direction_weight: float = 1.0
    speed_weight: float = 0.25

    def __post_init__(self):
        vs = tuple((float(a), float(b)) for a, b in self.velocity_set)
        if self.direction_weight < 0 or self.speed_weight < 0:
            raise ValueError("objective weights must be non-negative")
        for a, b in vs:
            if (-a, -b) not in vs:
                raise ValueError(f"velocity set is not closed under negation: missing {(-a, -b)}")
        object.__setattr__(self, "velocity_set", vs)

    def pairs(self):
        """Unordered distinct pairs of velocity indices, excluding opposite motions."""
        vs = self.velocity_set
        return [(i, j) for i, j in itertools.combinations(range(len(vs)), 2)
                if vs[j] != (-vs[i][0], -vs[i][1])]

    def opposite(self, i: int) -> int:
        a, b = self.velocity_set[i]
        return self.velocity_set.index((-a, -b))


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 200
    step: float = 0.05
    momentum: float = 0.9
    backtrack_factor: float = 0.5
    min_step: float = 1e-5

    def __post_init__(self):
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.step <= 0 or self.min_step <= 0:
            raise ValueError("step sizes must be positive")


def ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Mean-subtracted normalized cross-correlation of two equally shaped arrays."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("ncc is undefined for constant inputs")
    return float(a @ b / (na * nb))


def _ncc_and_grads(a, b):
    """NCC and its gradients with respect to both arguments."""
    a0, b0 = a - a.mean(), b - b.mean()
    na, nb = np.linalg.norm(a0), np.linalg.norm(b0)
    if na == 0 or nb == 0:
        raise ValueError("ncc is undefined for constant inputs")
    ah, bh = a0 / na, b0 / nb
    r = float(np.sum(ah * bh))
    return r, (bh - r * ah) / na, (ah - r * bh) / nb


@dataclass
class ObjectiveValue:
    total: float
    direction_term: float
    speed_term: float
    kernels: dict = field(default_factory=dict, repr=False)


class _Model:
    """Effective kernels for every objective velocity, with the data needed for adjoints."""

    def __init__(self, mask, config, obj):
        self.mask, self.config, self.obj = mask, config, obj
        v_max = max(math.hypot(*v) for v in obj.velocity_set)
        self.size = trace_size(config.kernel_size, v_max)
        n, s = config.time_samples, self.size
        # (V, N, S, S//2+1) shift multipliers; Hermitian, so half spectra suffice
        half = s // 2 + 1
        self.mult = np.stack([np.stack([shift_multiplier((s, s), dy, dx)[:, :half]
                                        for dy, dx in displacements(v, n)])
                              for v in obj.velocity_set])

    def kernels(self, kernels):
        spec = sfft.rfft2(pad_centered(kernels, self.size))  # (N, 3, S, S//2+1)
        acc = np.einsum("vnyx,ncyx->vcyx", self.mult, spec)
        return sfft.irfft2(acc, s=(self.size, self.size)) / kernels.shape[0]  # (V, 3, S, S)

    def adjoint(self, G, n):
        """Transpose of :meth:`kernels` applied to kernel-space gradients ``G`` (V, 3, S, S)."""
        acc = np.einsum("vnyx,vcyx->ncyx", np.conj(self.mult), sfft.rfft2(G))
        return sfft.irfft2(acc, s=(self.size, self.size)) / n


def _evaluate(K, obj: CodeObjective, want_grad=False):
    vs = obj.velocity_set
    d_terms, grads = [], np.zeros_like(K) if want_grad else None
    for i in range(len(vs)):
        j = obj.opposite(i)
        r, ga, gb = _ncc_and_grads(K[i].ravel(), K[j].ravel())
        d_terms.append(r * r)
        if want_grad:
            w = obj.direction_weight * 2 * r / len(vs)
            grads[i] += (w * ga).reshape(K[i].shape)
            grads[j] += (w * gb).reshape(K[j].shape)
    pairs = obj.pairs()
    s_terms = []
    for i, j in pairs:
        r, ga, gb = _ncc_and_grads(K[i].ravel(), K[j].ravel())
        s_terms.append(r * r)
        if want_grad:
            w = obj.speed_weight * 2 * r / len(pairs)
            grads[i] += (w * ga).reshape(K[i].shape)
            grads[j] += (w * gb).reshape(K[j].shape)
    d = float(np.mean(d_terms))
    s = float(np.mean(s_terms)) if s_terms else 0.0
    return obj.direction_weight * d + obj.speed_weight * s, d, s, grads


def _psi(psi):
    return psi.psi if isinstance(psi, DefocusSchedule) else np.asarray(psi, dtype=float)


def objective(psi, mask: PhaseMask, config: OpticalConfig, obj: CodeObjective | None = None,
              _model=None) -> ObjectiveValue:
    """Weighted confusability of the effective kernels for ``obj.velocity_set``."""
    obj = obj or CodeObjective()
    model = _model or _Model(mask, config, obj)
    stack = psf_stack(mask, config, _psi(psi))
    K = model.kernels(stack.kernels)
    total, d, s, _ = _evaluate(K, obj)
    return ObjectiveValue(total, d, s, {v: K[i] for i, v in enumerate(obj.velocity_set)})


def objective_grad(psi, mask: PhaseMask, config: OpticalConfig, obj: CodeObjective | None = None,
                   _model=None, _with_value=False):
    """Exact gradient of the objective with respect to every schedule sample."""
    obj = obj or CodeObjective()
    model = _model or _Model(mask, config, obj)
    stack, dk = psf_stack(mask, config, _psi(psi), with_grad=True)
    K = model.kernels(stack.kernels)
    total, d, s, G = _evaluate(K, obj, want_grad=True)
    n, k = stack.n, config.kernel_size
    # adjoint of the Fourier shift is the conjugate multiplier
    back = model.adjoint(G, n)
    o = model.size // 2 - k // 2
    back = back[..., o:o + k, o:o + k]
    grad = np.sum(back * dk, axis=(1, 2, 3))
    if _with_value:
        return grad, ObjectiveValue(total, d, s)
    return grad


@dataclass
class OptimizationHistory:
    rows: list = field(default_factory=list)  # (iter, J, direction, speed, step)
    stop_reason: str = ""

    @property
    def values(self) -> list[float]:
        return [r[1] for r in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "J", "direction_term", "speed_term", "step"])
            for row in self.rows:
                w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def optimize_schedule(init: DefocusSchedule, mask: PhaseMask, config: OpticalConfig,
                      obj: CodeObjective | None = None, opt: OptimizerConfig | None = None,
                      callback=None):
    """Projected heavy-ball descent with a strict-decrease line search.

    The update direction is the momentum buffer scaled to unit max-norm, so
    ``step`` is the largest per-sample change of psi in one iteration.  A
    candidate is accepted only if J strictly decreases; otherwise the step is
    multiplied by ``backtrack_factor`` (momentum is dropped) until acceptance
    or ``min_step``.  Every iterate is clipped to the schedule bounds.

    Returns ``(schedule, history)``; history row 0 is the initial point.
    """
    obj = obj or CodeObjective()
    opt = opt or OptimizerConfig()
    lo, hi = init.bounds
    model = _Model(mask, config, obj)
    x = np.clip(np.array(init.psi, dtype=float), lo, hi)
    grad, val = objective_grad(x, mask, config, obj, model, _with_value=True)
    hist = OptimizationHistory([(0, val.total, val.direction_term, val.speed_term, 0.0)])
    buf = np.zeros_like(x)
    step = opt.step
    it = 0
    while it < opt.max_iters:
        it += 1
        direction = opt.momentum * buf + grad
        accepted = False
        while step >= opt.min_step:
            scale = np.max(np.abs(direction))
            if scale == 0:
                break
            cand = np.clip(x - step * direction / scale, lo, hi)
            cval = objective(cand, mask, config, obj, model)
            if cval.total < val.total:
                accepted = True
                break
            step *= opt.backtrack_factor
            direction = grad
        if not accepted:
            hist.stop_reason = "min_step" if step < opt.min_step else "zero_gradient"
            break
        buf, x = direction, cand
        grad, val = objective_grad(x, mask, config, obj, model, _with_value=True)
        hist.rows.append((it, val.total, val.direction_term, val.speed_term, step))
        if callback is not None:
            callback(it, x, val)
    else:
        hist.stop_reason = "max_iters"
    return DefocusSchedule(x, init.bounds), hist
