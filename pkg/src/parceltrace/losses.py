"""Reference implementations of the candidate segmentation losses.

Pure float64 numpy; no autodiff. The region losses use the soft
macro-averaged forms

    jaccard = 1 - (1/3) sum_c (A + e) / (P + G - A + e)
    dice    = 1 - (1/3) sum_c (2A + e) / (P + G + e)
    tversky = 1 - (1/3) sum_c (A + e) / (A + alpha*(P-A) + beta*(G-A) + e)

with per-class sums A = sum(p*g), P = sum(p), G = sum(g), and the focal
loss is the per-pixel mean of -sum_c af * g * (1-p)^gamma * ln(p + e).
Combined kinds are w_region * region + w_focal * focal. Gradients are
analytic and composed with the softmax Jacobian; finite_diff_check verifies
them against central differences.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import ClassMask, ProbTensor


class LossKind(enum.Enum):
    JACCARD = "jaccard"
    DICE = "dice"
    TVERSKY = "tversky"
    FOCAL = "focal"
    JACCARD_FOCAL = "jaccard+focal"
    DICE_FOCAL = "dice+focal"
    TVERSKY_FOCAL = "tversky+focal"


_REGION_OF = {
    LossKind.JACCARD_FOCAL: LossKind.JACCARD,
    LossKind.DICE_FOCAL: LossKind.DICE,
    LossKind.TVERSKY_FOCAL: LossKind.TVERSKY,
}


@dataclass(frozen=True)
class LossConfig:
    kind: LossKind = LossKind.JACCARD_FOCAL  # the selected final cost function
    eps: float = 1e-6
    gamma: float = 2.0           # focal exponent
    focal_alpha: float = 1.0     # focal class weight (uniform)
    tversky_alpha: float = 0.3   # false-positive weight
    tversky_beta: float = 0.7    # false-negative weight
    w_region: float = 1.0
    w_focal: float = 1.0

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValidationError("LossConfig: eps must be > 0")
        if self.gamma < 0 or self.focal_alpha < 0:
            raise ValidationError("LossConfig: focal parameters must be >= 0")
        if self.tversky_alpha < 0 or self.tversky_beta < 0:
            raise ValidationError("LossConfig: tversky weights must be >= 0")
        if self.w_region < 0 or self.w_focal < 0:
            raise ValidationError("LossConfig: combination weights must be >= 0")


@dataclass(frozen=True)
class OneHotTarget:
    """Exact one-hot H x W x 3 target."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 3 or d.shape[2] != 3:
            raise ValidationError("OneHotTarget: expected an (h, w, 3) array")
        if d.size and (not np.isin(d, (0, 1)).all() or not (d.sum(axis=2) == 1).all()):
            raise ValidationError("OneHotTarget: values must be exactly one-hot")

    @classmethod
    def from_classes(cls, mask: ClassMask) -> "OneHotTarget":
        onehot = np.zeros(mask.data.shape + (3,), dtype=np.uint8)
        for c in range(3):
            onehot[:, :, c] = mask.data == c
        return cls(onehot)


def softmax(logits: ProbTensor) -> ProbTensor:
    """Per-pixel softmax with max subtraction; channel sums land within 1e-7."""
    z = logits.data.astype(np.float64)
    z = z - z.max(axis=2, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=2, keepdims=True)
    return ProbTensor(p, probabilities=True)


def _check_pair(p: ProbTensor, g: OneHotTarget) -> tuple[np.ndarray, np.ndarray]:
    if not p.probabilities:
        raise ValidationError("loss_eval: prediction must be probabilities (apply softmax first)")
    if p.data.shape != g.data.shape:
        raise ValidationError(f"loss_eval: shape mismatch {p.data.shape} vs {g.data.shape}")
    return p.data.astype(np.float64), g.data.astype(np.float64)


def _region_terms(p: np.ndarray, g: np.ndarray):
    a = (p * g).sum(axis=(0, 1))  # per-class intersection
    ps = p.sum(axis=(0, 1))
    gs = g.sum(axis=(0, 1))
    return a, ps, gs


def _region_loss(kind: LossKind, p: np.ndarray, g: np.ndarray, cfg: LossConfig) -> float:
    a, ps, gs = _region_terms(p, g)
    e = cfg.eps
    if kind is LossKind.JACCARD:
        term = (a + e) / (ps + gs - a + e)
    elif kind is LossKind.DICE:
        term = (2 * a + e) / (ps + gs + e)
    elif kind is LossKind.TVERSKY:
        term = (a + e) / (a + cfg.tversky_alpha * (ps - a) + cfg.tversky_beta * (gs - a) + e)
    else:
        raise AssertionError(kind)
    return float(1.0 - term.mean())


def _focal_loss(p: np.ndarray, g: np.ndarray, cfg: LossConfig) -> float:
    npix = p.shape[0] * p.shape[1]
    if npix == 0:
        return 0.0
    per = -cfg.focal_alpha * g * (1.0 - p) ** cfg.gamma * np.log(p + cfg.eps)
    return float(per.sum() / npix)


def loss_eval(p: ProbTensor, g: OneHotTarget, cfg: LossConfig) -> float:
    """Scalar loss of probabilities ``p`` against one-hot target ``g``."""
    pd, gd = _check_pair(p, g)
    kind = cfg.kind
    if kind is LossKind.FOCAL:
        return _focal_loss(pd, gd, cfg)
    if kind in (LossKind.JACCARD, LossKind.DICE, LossKind.TVERSKY):
        return _region_loss(kind, pd, gd, cfg)
    region = _region_loss(_REGION_OF[kind], pd, gd, cfg)
    focal = _focal_loss(pd, gd, cfg)
    return cfg.w_region * region + cfg.w_focal * focal


def _region_grad_p(kind: LossKind, p: np.ndarray, g: np.ndarray, cfg: LossConfig) -> np.ndarray:
    """dL/dp for the region losses (no softmax chain)."""
    a, ps, gs = _region_terms(p, g)
    e = cfg.eps
    if kind is LossKind.JACCARD:
        num = a + e
        den = ps + gs - a + e
        # d term/dp = (g*den - num*(1-g)) / den^2
        dterm = (g * den - num * (1.0 - g)) / den**2
    elif kind is LossKind.DICE:
        num = 2 * a + e
        den = ps + gs + e
        dterm = (2 * g * den - num) / den**2
    elif kind is LossKind.TVERSKY:
        al, be = cfg.tversky_alpha, cfg.tversky_beta
        num = a + e
        den = a + al * (ps - a) + be * (gs - a) + e
        dden = g + al * (1.0 - g) - be * g
        dterm = (g * den - num * dden) / den**2
    else:
        raise AssertionError(kind)
    return -dterm / 3.0


def _focal_grad_p(p: np.ndarray, g: np.ndarray, cfg: LossConfig) -> np.ndarray:
    npix = p.shape[0] * p.shape[1]
    if npix == 0:
        return np.zeros_like(p)
    e, gamma = cfg.eps, cfg.gamma
    one_m = 1.0 - p
    if gamma == 0.0:
        dpow = np.zeros_like(p)
    else:
        dpow = gamma * one_m ** (gamma - 1.0) * np.log(p + e)
    inner = -dpow + one_m**gamma / (p + e)
    return -cfg.focal_alpha * g * inner / npix


def _grad_p(p: np.ndarray, g: np.ndarray, cfg: LossConfig) -> np.ndarray:
    kind = cfg.kind
    if kind is LossKind.FOCAL:
        return _focal_grad_p(p, g, cfg)
    if kind in (LossKind.JACCARD, LossKind.DICE, LossKind.TVERSKY):
        return _region_grad_p(kind, p, g, cfg)
    return cfg.w_region * _region_grad_p(_REGION_OF[kind], p, g, cfg) + cfg.w_focal * _focal_grad_p(
        p, g, cfg
    )


def loss_grad(logits: ProbTensor, g: OneHotTarget, cfg: LossConfig) -> ProbTensor:
    """Analytic gradient of loss_eval(softmax(logits), g, cfg) w.r.t. logits."""
    if logits.probabilities:
        raise ValidationError("loss_grad: expected logits, got probabilities")
    if logits.data.shape != g.data.shape:
        raise ValidationError(f"loss_grad: shape mismatch {logits.data.shape} vs {g.data.shape}")
    p = softmax(logits).data
    gd = g.data.astype(np.float64)
    s = _grad_p(p, gd, cfg)
    # Softmax Jacobian: dL/dz_k = p_k * (s_k - sum_c p_c s_c)
    dot = (p * s).sum(axis=2, keepdims=True)
    grad = p * (s - dot)
    return ProbTensor(grad, probabilities=False)


def finite_diff_check(logits: ProbTensor, g: OneHotTarget, cfg: LossConfig, step: float = 1e-4) -> float:
    """Max relative error of loss_grad against central differences.

    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
    Zero-size tensors check vacuously (error 0).
    """
    if step <= 0:
        raise ValidationError("finite_diff_check: step must be > 0")
    analytic = loss_grad(logits, g, cfg).data
    if analytic.size == 0:
        return 0.0
    z = logits.data.astype(np.float64)
    worst = 0.0
    it = np.nditer(z, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        zp = z.copy()
        zp[idx] += step
        up = loss_eval(softmax(ProbTensor(zp, probabilities=False)), g, cfg)
        zm = z.copy()
        zm[idx] -= step
        down = loss_eval(softmax(ProbTensor(zm, probabilities=False)), g, cfg)
        numeric = (up - down) / (2 * step)
        a = float(analytic[idx])
        denom = max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, abs(a - numeric) / denom)
    return worst
