"""Training objectives with analytic gradients.

``pose_loss`` is the weighted sum of unsquared translation and quaternion
error norms over a clip. ``mdn_nll`` is the negative log-likelihood of a
ground-truth 7-vector under an isotropic Gaussian mixture whose parameters
come from a raw network output of width ``9 * M``.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import log_softmax, logsumexp, softmax
from .pose import Pose7, canonical_quaternion, normalize_quaternion

NORM_EPS = 1e-12
POSE_DIM = 7
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LossWeights:
    alpha1: float = 1.0
    alpha2: float = 10.0

    def __post_init__(self):
        # Zero switches a term off; negative weights would reward error.
        if not (self.alpha1 >= 0 and self.alpha2 >= 0 and self.alpha1 + self.alpha2 > 0):
            raise ValueError(f"loss weights must be non-negative and not both zero, got {self.alpha1}, {self.alpha2}")


def align_quaternion_signs(q_pred, q_gt):
    """Flip ground-truth quaternions so that <q_pred, q_gt> >= 0 row-wise."""
    sign = np.where(np.sum(q_pred * q_gt, axis=-1, keepdims=True) < 0, -1.0, 1.0)
    return q_gt * sign


def _smoothed_norm_grad(v):
    n = np.sqrt(np.sum(v * v, axis=-1, keepdims=True) + NORM_EPS ** 2)
    return v / n


def pose_loss(pred, gt, weights=LossWeights()):
    """Loss summed over all leading axes; returns ``(loss, grad_wrt_pred)``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[-1] != POSE_DIM:
        raise ValueError(f"pose_loss: shape mismatch {pred.shape} vs {gt.shape} (last axis must be 7)")
    dx = pred[..., :3] - gt[..., :3]
    dq = pred[..., 3:] - align_quaternion_signs(pred[..., 3:], gt[..., 3:])
    loss = weights.alpha1 * np.linalg.norm(dx, axis=-1).sum() + weights.alpha2 * np.linalg.norm(dq, axis=-1).sum()
    grad = np.concatenate([weights.alpha1 * _smoothed_norm_grad(dx),
                           weights.alpha2 * _smoothed_norm_grad(dq)], axis=-1)
    return float(loss), grad


@dataclass
class MixtureDensity:
    alphas: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray

    @property
    def M(self):
        return self.alphas.shape[-1]

    def validate(self):
        if abs(float(np.sum(self.alphas)) - 1.0) > 1e-9 or np.any(self.alphas < 0):
            raise ValueError("mixture weights must lie on the simplex")
        if np.any(self.sigmas <= 0):
            raise ValueError("mixture sigmas must be strictly positive")
        if self.means.shape != (self.M, POSE_DIM):
            raise ValueError(f"means must be ({self.M}, 7), got {self.means.shape}")

    def log_density(self, y):
        """log p(y) for a 7-vector ``y``."""
        return float(logsumexp(_component_log_terms(np.log(self.alphas), self.means,
                                                    np.log(self.sigmas), np.asarray(y, dtype=np.float64))))


def mdn_output_width(m):
    return m * (2 + POSE_DIM)


def _split_raw(raw, m=None):
    raw = np.asarray(raw, dtype=np.float64)
    width = raw.shape[-1]
    if m is None:
        if width % (2 + POSE_DIM):
            raise ValueError(f"raw mixture output length {width} is not a multiple of 9")
        m = width // (2 + POSE_DIM)
    if m < 1 or width != mdn_output_width(m):
        raise ValueError(f"raw mixture output length {width} does not match M={m} (expected {mdn_output_width(m)})")
    logits = raw[..., :m]
    means = raw[..., m:m + m * POSE_DIM].reshape(raw.shape[:-1] + (m, POSE_DIM))
    log_sigmas = raw[..., m + m * POSE_DIM:]
    return logits, means, log_sigmas


def mdn_activations(raw, m=None):
    logits, means, log_sigmas = _split_raw(raw, m)
    if logits.ndim != 1:
        raise ValueError("mdn_activations expects a single raw vector")
    return MixtureDensity(softmax(logits), means.copy(), np.exp(log_sigmas))


def _component_log_terms(log_alphas, means, log_sigmas, gt):
    resid = gt[..., None, :] - means
    sq = np.sum(resid * resid, axis=-1)
    return (log_alphas - POSE_DIM * log_sigmas - 0.5 * POSE_DIM * LOG_2PI
            - 0.5 * sq * np.exp(-2.0 * log_sigmas))


def mdn_nll(raw, gt, m=None):
    """Mixture NLL summed over leading axes, with gradient w.r.t. ``raw``.

    ``raw`` has shape ``(..., 9M)`` and ``gt`` shape ``(..., 7)``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    logits, means, log_sigmas = _split_raw(raw, m)
    if gt.shape != raw.shape[:-1] + (POSE_DIM,):
        raise ValueError(f"mdn_nll: ground truth shape {gt.shape} does not match raw {raw.shape}")
    log_alphas = log_softmax(logits)
    terms = _component_log_terms(log_alphas, means, log_sigmas, gt)
    lse = logsumexp(terms)
    nll = -float(np.sum(lse))

    resp = np.exp(terms - lse[..., None])
    alphas = np.exp(log_alphas)
    inv_var = np.exp(-2.0 * log_sigmas)
    resid = gt[..., None, :] - means
    sq = np.sum(resid * resid, axis=-1)
    d_logits = alphas - resp
    d_means = -(resp * inv_var)[..., None] * resid
    d_log_sigmas = resp * (POSE_DIM - sq * inv_var)
    grad = np.concatenate([d_logits, d_means.reshape(raw.shape[:-1] + (-1,)), d_log_sigmas], axis=-1)
    return nll, grad


def mixture_nll(mix, gt):
    """NLL of one ``MixtureDensity`` (already activated) at ``gt``."""
    return -mix.log_density(gt)


def mdn_point_estimate(mix):
    """Mean of the heaviest component; ties go to the lowest index."""
    k = int(np.argmax(mix.alphas))
    mean = mix.means[k]
    return Pose7(mean[:3].copy(), canonical_quaternion(normalize_quaternion(mean[3:])))
