"""Smoothed hinge loss and squared-L2 penalty with conjugates and subgradients.

The loss has a 1/gamma-Lipschitz gradient (quadratic middle piece on the
closed interval [1 - gamma, 1]); the penalty is lam-strongly convex and
separates over coordinates.  Both facts drive the enclosing-ball radii used
by the bound machinery, so the constants are exposed on the objects.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class Infeasible:
    """Tag for conjugate arguments outside the feasible domain.

    A singleton is used instead of +inf so that accidental arithmetic on an
    infeasible value raises instead of propagating silently.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INFEASIBLE"


INFEASIBLE = Infeasible()


@dataclass(frozen=True)
class SmoothedHingeLoss:
    """phi(r) = 0 for r > 1, 1 - r - gamma/2 for r < 1 - gamma, else (1-r)^2 / (2 gamma)."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    # Dual coordinates live in [0, 1]: phi*(-a) is finite exactly there.
    dual_range: tuple[float, float] = (0.0, 1.0)

    def eval(self, r: float) -> float:
        if r > 1.0:
            return 0.0
        if r < 1.0 - self.gamma:
            return 1.0 - r - self.gamma / 2.0
        return (1.0 - r) ** 2 / (2.0 * self.gamma)

    def eval_array(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        mid = (1.0 - r) ** 2 / (2.0 * self.gamma)
        out = np.where(r < 1.0 - self.gamma, 1.0 - r - self.gamma / 2.0, mid)
        return np.where(r > 1.0, 0.0, out)

    def conj(self, u: float):
        """phi*(u) = u + gamma/2 u^2 on [-1, 0], infeasible elsewhere."""
        if u < -1.0 or u > 0.0:
            return INFEASIBLE
        return u + 0.5 * self.gamma * u * u

    def conj_array(self, u: np.ndarray) -> np.ndarray:
        """Vectorized conjugate; caller must have checked feasibility."""
        return u + 0.5 * self.gamma * u * u

    def subgrad(self, r: float) -> tuple[float, float]:
        """The (closed) subdifferential as an interval; single-valued here."""
        g = self.grad(r)
        return (g, g)

    def grad(self, r: float) -> float:
        if r > 1.0:
            return 0.0
        if r < 1.0 - self.gamma:
            return -1.0
        return -(1.0 - r) / self.gamma

    def grad_array(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        out = np.where(r < 1.0 - self.gamma, -1.0, -(1.0 - r) / self.gamma)
        return np.where(r > 1.0, 0.0, out)


@dataclass(frozen=True)
class L2Penalty:
    """psi_j(w) = lam w^2 / 2 per coordinate; conjugate psi*_j(v) = v^2 / (2 lam)."""

    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")

    def component(self, w: float) -> float:
        return 0.5 * self.lam * w * w

    def component_array(self, w: np.ndarray) -> np.ndarray:
        return 0.5 * self.lam * w * w

    def eval(self, w: np.ndarray) -> float:
        """Sum of per-coordinate components (decomposes exactly)."""
        return float(np.sum(self.component_array(np.asarray(w, dtype=np.float64))))

    def conj_component(self, v: float) -> float:
        return v * v / (2.0 * self.lam)

    def conj_component_array(self, v: np.ndarray) -> np.ndarray:
        return v * v / (2.0 * self.lam)

    def conj_eval(self, v: np.ndarray) -> float:
        return float(np.sum(self.conj_component_array(np.asarray(v, dtype=np.float64))))

    def conj_subgrad(self, v: float) -> tuple[float, float]:
        g = v / self.lam
        return (g, g)

    def conj_grad_array(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) / self.lam


@dataclass(frozen=True)
class Objective:
    """Loss plus penalty; n^-1 sum_i phi(z_i.w) + sum_j psi_j(w_j)."""

    loss: SmoothedHingeLoss
    penalty: L2Penalty

    def to_json(self) -> str:
        return json.dumps(
            {
                "loss": "smoothed_hinge",
                "gamma": self.loss.gamma,
                "penalty": "l2",
                "lambda": self.penalty.lam,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Objective":
        cfg = json.loads(text)
        if cfg.get("loss") != "smoothed_hinge" or cfg.get("penalty") != "l2":
            raise ValueError(f"unsupported objective config: {cfg}")
        return cls(SmoothedHingeLoss(float(cfg["gamma"])), L2Penalty(float(cfg["lambda"])))


def make_objective(lam: float, gamma: float) -> Objective:
    return Objective(SmoothedHingeLoss(gamma), L2Penalty(lam))


def dual_domain_column_range(z_values: np.ndarray, n: int) -> tuple[float, float]:
    """Range of n^-1 z_col . a over the dual box a in [0, 1]^n.

    Only nonzero column entries matter: the infimum picks up every negative
    entry, the supremum every positive one.
    """
    z = np.asarray(z_values, dtype=np.float64)
    neg = float(z[z < 0].sum())
    pos = float(z[z > 0].sum())
    return neg / n, pos / n


# Functional aliases for the scalar pieces, convenient in tests and scripts.

def smoothed_hinge_eval(r: float, gamma: float) -> float:
    return SmoothedHingeLoss(gamma).eval(r)


def smoothed_hinge_conj(u: float, gamma: float):
    return SmoothedHingeLoss(gamma).conj(u)


def smoothed_hinge_subgrad(r: float, gamma: float) -> tuple[float, float]:
    return SmoothedHingeLoss(gamma).subgrad(r)


def l2_penalty_component(w: float, lam: float) -> float:
    return L2Penalty(lam).component(w)


def l2_conj_component(v: float, lam: float) -> float:
    return L2Penalty(lam).conj_component(v)


def l2_conj_subgrad(v: float, lam: float) -> tuple[float, float]:
    return L2Penalty(lam).conj_subgrad(v)
