"""Training losses, DPP kernel, analytic gradients, finite-difference oracle.

Supervised mode combines a binary cross-entropy keyframe loss with a
variation loss (the negative log-likelihood of the annotated keyframe
subset under a determinantal point process whose kernel decomposes into
per-frame quality times a Gaussian similarity of the embeddings).
Unsupervised mode combines a summary-length regularizer with a
repelling loss (mean pairwise cosine of the embeddings).  Both modes
add an L2 penalty over the weight matrices so every differentiable
term is covered by the finite-difference check.

``backward`` is a hand-written reverse pass through the whole network;
``finite_diff_grad`` is the independent central-difference oracle it is
verified against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    ForwardTrace,
    HyperParams,
    ModelParams,
    WEIGHT_FIELDS,
    forward,
    layernorm_backward,
)

SCORE_CLIP = 1e-7

MODES = ("supervised", "unsupervised")


class NumericalError(RuntimeError):
    """A numerical invariant failed (non-PSD kernel, non-finite loss...)."""


@dataclass
class LossWeights:
    """Coefficients on the individual loss terms; all default to one.

    Zeroing a coefficient drops the term entirely (used for ablations).
    """

    keyframe: float = 1.0
    variation: float = 1.0
    length: float = 1.0
    repelling: float = 1.0


@dataclass
class LossBreakdown:
    variation: float
    keyframe: float
    length: float
    repelling: float
    weight_penalty: float
    total: float

    def to_dict(self) -> dict:
        return {
            "variation": self.variation,
            "keyframe": self.keyframe,
            "length": self.length,
            "repelling": self.repelling,
            "weight_penalty": self.weight_penalty,
            "total": self.total,
        }


def pairwise_sq_dists(phi: np.ndarray) -> np.ndarray:
    """Exact symmetric matrix of squared euclidean distances between rows."""
    n = phi.shape[0]
    out = np.empty((n, n))
    # row-chunked so the (chunk, n, e) temporary stays small
    chunk = max(1, int(2**22 // max(1, n * phi.shape[1])))
    for s in range(0, n, chunk):
        diff = phi[s : s + chunk, None, :] - phi[None, :, :]
        out[s : s + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def dpp_kernel(y: np.ndarray, phi: np.ndarray, beta: float) -> np.ndarray:
    """Quality-diversity kernel L[i, j] = y_i y_j exp(-beta ||phi_i - phi_j||^2).

    Symmetric PSD with diagonal y_i^2 (the similarity of a frame with
    itself is one).
    """
    y = np.asarray(y, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    sim = np.exp(-beta * pairwise_sq_dists(phi))
    return y[:, None] * y[None, :] * sim


def dpp_log_prob(kernel: np.ndarray, subset) -> float:
    """log P(subset) = log det(L_subset) - log det(L + I).

    The normalizer uses a Cholesky factorization (L + I is positive
    definite for any PSD L); the empty submatrix has determinant one.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    n = kernel.shape[0]
    subset = np.asarray(sorted(subset), dtype=int)
    if subset.size and (subset.min() < 0 or subset.max() >= n):
        raise ValueError("subset indices out of range")
    if subset.size != np.unique(subset).size:
        raise ValueError("subset contains repeated indices")

    try:
        chol_norm = np.linalg.cholesky(kernel + np.eye(n))
    except np.linalg.LinAlgError as err:
        raise NumericalError("kernel + I is not positive definite") from err
    log_norm = 2.0 * np.log(np.diag(chol_norm)).sum()

    if subset.size == 0:
        return -log_norm
    sub = kernel[np.ix_(subset, subset)]
    sign, log_sub = np.linalg.slogdet(sub)
    if sign <= 0:
        raise NumericalError("subset kernel is numerically singular")
    return float(log_sub - log_norm)


def variation_loss(kernel: np.ndarray, keyframe_subset) -> float:
    """Negative DPP log-likelihood of the annotated keyframe subset."""
    return -dpp_log_prob(kernel, keyframe_subset)


def keyframe_loss(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Binary cross entropy between scores and 0/1 keyframe labels, summed."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError("scores and labels differ in length")
    yc = np.clip(y, SCORE_CLIP, 1.0 - SCORE_CLIP)
    return float(-(y_hat * np.log(yc) + (1.0 - y_hat) * np.log1p(-yc)).sum())


def length_loss(y: np.ndarray, sigma: float) -> float:
    """Distance of the mean score from the target summary ratio sigma."""
    return float(abs(np.asarray(y, dtype=np.float64).mean() - sigma))


def repelling_loss(phi: np.ndarray) -> float:
    """Mean cosine similarity over ordered pairs of distinct embeddings.

    Zero for a single frame (no pairs); embeddings must be nonzero.
    """
    phi = np.asarray(phi, dtype=np.float64)
    n = phi.shape[0]
    if n < 2:
        return 0.0
    norms = np.linalg.norm(phi, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("repelling loss undefined for zero-norm embeddings")
    u = phi / norms[:, None]
    cos = u @ u.T
    return float((cos.sum() - np.trace(cos)) / (n * (n - 1)))


def weight_penalty(params: ModelParams, weight_decay: float) -> float:
    """L2 penalty over weight matrices only (no biases, no norm params)."""
    if weight_decay == 0.0:
        return 0.0
    total = sum(float((getattr(params, f) ** 2).sum()) for f in WEIGHT_FIELDS)
    return weight_decay * total


def keyframe_indices(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    return np.flatnonzero(labels > 0)


def total_loss(
    trace: ForwardTrace,
    params: ModelParams,
    hyper: HyperParams,
    mode: str,
    labels: np.ndarray | None = None,
    sigma: float = 0.3,
    weights: LossWeights | None = None,
) -> LossBreakdown:
    """Mode-appropriate training loss plus the L2 weight penalty.

    supervised:   keyframe BCE + variation (needs ``labels``)
    unsupervised: length regularizer + repelling (labels are ignored)
    """
    if mode not in MODES:
        raise ValueError(f"unknown loss mode {mode!r}")
    w = weights or LossWeights()
    pen = weight_penalty(params, hyper.weight_decay)

    if mode == "supervised":
        if labels is None:
            raise ValueError("supervised loss requires keyframe labels")
        key = w.keyframe * keyframe_loss(trace.y, labels)
        var = 0.0
        if w.variation != 0.0:
            kernel = dpp_kernel(trace.y, trace.phi, hyper.beta)
            var = w.variation * variation_loss(kernel, keyframe_indices(labels))
        return LossBreakdown(var, key, 0.0, 0.0, pen, key + var + pen)

    length = w.length * length_loss(trace.y, sigma)
    rep = w.repelling * repelling_loss(trace.phi) if w.repelling != 0.0 else 0.0
    return LossBreakdown(0.0, 0.0, length, rep, pen, length + rep + pen)


# ---------------------------------------------------------------------------
# analytic gradients


def _loss_grads_y_phi(trace, hyper, mode, labels, sigma, w):
    """d(loss)/dy and d(loss)/dphi for the mode's two loss terms."""
    y, phi = trace.y, trace.phi
    n = y.shape[0]
    dy = np.zeros_like(y)
    dphi = np.zeros_like(phi)

    if mode == "supervised":
        yc = np.clip(y, SCORE_CLIP, 1.0 - SCORE_CLIP)
        live = (y > SCORE_CLIP) & (y < 1.0 - SCORE_CLIP)
        dy += w.keyframe * live * (-labels / yc + (1.0 - labels) / (1.0 - yc))

        if w.variation != 0.0:
            kernel = dpp_kernel(y, phi, hyper.beta)
            subset = keyframe_indices(labels)
            # d(-log P)/dL = (L + I)^{-1} - scatter((L_sub)^{-1})
            try:
                g = np.linalg.inv(kernel + np.eye(n))
            except np.linalg.LinAlgError as err:
                raise NumericalError("kernel + I is not invertible") from err
            if subset.size:
                try:
                    sub_inv = np.linalg.inv(kernel[np.ix_(subset, subset)])
                except np.linalg.LinAlgError as err:
                    raise NumericalError(
                        "subset kernel is numerically singular"
                    ) from err
                g[np.ix_(subset, subset)] -= sub_inv
            g *= w.variation
            sim = np.exp(-hyper.beta * pairwise_sq_dists(phi))
            # L_ij = y_i y_j sim_ij, so dy_k = 2 sum_j g_kj y_j sim_kj
            dy += 2.0 * (g * sim) @ y
            # dphi_k = -4 beta sum_j g_kj L_kj (phi_k - phi_j)
            gl = g * kernel
            row = gl.sum(axis=1)
            dphi += -4.0 * hyper.beta * (row[:, None] * phi - gl @ phi)
        return dy, dphi

    # unsupervised
    diff = y.mean() - sigma
    if diff != 0.0:
        dy += w.length * np.sign(diff) / n
    if w.repelling != 0.0 and n >= 2:
        norms = np.linalg.norm(phi, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("repelling loss undefined for zero-norm embeddings")
        u = phi / norms[:, None]
        cos = u @ u.T
        c = w.repelling / (n * (n - 1))
        # d/dphi_k of sum_{i != j} cos_ij = 2 sum_{j != k} (u_j - cos_kj u_k) / ||phi_k||
        u_sum = u.sum(axis=0)
        cos_row = cos.sum(axis=1)
        dphi += (2.0 * c / norms[:, None]) * (
            (u_sum - u) - (cos_row - 1.0)[:, None] * u
        )
    return dy, dphi


def backward(
    trace: ForwardTrace,
    x: np.ndarray,
    params: ModelParams,
    hyper: HyperParams,
    mode: str,
    labels: np.ndarray | None = None,
    sigma: float = 0.3,
    weights: LossWeights | None = None,
) -> ModelParams:
    """Exact gradient of ``total_loss`` w.r.t. every parameter.

    The trace must come from ``forward`` on the same ``x`` and
    ``params``; recorded dropout masks are honored, so the result is
    the exact gradient of the loss as realized with those masks.
    """
    if mode not in MODES:
        raise ValueError(f"unknown loss mode {mode!r}")
    if mode == "supervised" and labels is None:
        raise ValueError("supervised loss requires keyframe labels")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != trace.context.shape:
        raise ValueError("trace does not match the given feature matrix")
    w = weights or LossWeights()
    labels = None if labels is None else np.asarray(labels, dtype=np.float64)
    g = params.zeros_like()

    dy, dphi = _loss_grads_y_phi(trace, hyper, mode, labels, sigma, w)

    # score head: sigmoid -> final linear -> dropout -> layer norm -> relu
    dlogits = dy * trace.y * (1.0 - trace.y)
    g.reg_w2 += (dlogits[:, None] * trace.head_drop).sum(axis=0, keepdims=True)
    g.reg_b2 += np.array([dlogits.sum()])
    d_head_drop = dlogits[:, None] * params.reg_w2[0][None, :]
    d_ln2_out = d_head_drop * trace.head_mask
    d_relu, dg2, db2 = layernorm_backward(
        d_ln2_out, trace.ln2_xhat, trace.ln2_inv_std, params.ln2_scale
    )
    g.ln2_scale += dg2
    g.ln2_offset += db2
    d_head_pre = d_relu * (trace.head_pre > 0.0)
    g.reg_w1 += d_head_pre.T @ trace.ff_out
    g.reg_b1 += d_head_pre.sum(axis=0)
    d_ff_out = d_head_pre @ params.reg_w1

    # embedding head
    g.emb_w += dphi.T @ trace.ff_out
    g.emb_b += dphi.sum(axis=0)
    d_ff_out += dphi @ params.emb_w

    # feed-forward layer: layer norm -> dropout -> linear
    dz1, dg1, db1 = layernorm_backward(
        d_ff_out, trace.ln1_xhat, trace.ln1_inv_std, params.ln1_scale
    )
    g.ln1_scale += dg1
    g.ln1_offset += db1
    dz1 = dz1 * trace.ff_mask
    g.ff_w += dz1.T @ trace.context
    g.ff_b += dz1.sum(axis=0)
    d_context = dz1 @ params.ff_w

    # context c_i = d_i * v_i
    dd = (d_context * trace.v_proj).sum(axis=1)
    dv = d_context * trace.d[:, None]

    # d = softmax over row sums of log(1 - clipped alpha)
    dlog = trace.d * (dd - float(dd @ trace.d))
    clipped = np.clip(trace.alpha, hyper.alpha_clip, 1.0 - hyper.alpha_clip)
    inside = (trace.alpha > hyper.alpha_clip) & (
        trace.alpha < 1.0 - hyper.alpha_clip
    )
    dalpha = dlog[:, None] * (-1.0 / (1.0 - clipped)) * inside

    # column softmax
    colsum = (trace.alpha * dalpha).sum(axis=0, keepdims=True)
    da = trace.alpha * (dalpha - colsum)

    scale = 1.0 / np.sqrt(x.shape[1])
    dq = scale * (da @ trace.k_proj)
    dk = scale * (da.T @ trace.q_proj)

    g.w_q += dq.T @ x
    g.w_k += dk.T @ x
    g.w_v += dv.T @ x

    if hyper.weight_decay != 0.0:
        for name in WEIGHT_FIELDS:
            getattr(g, name)[...] += 2.0 * hyper.weight_decay * getattr(params, name)

    g.check_finite()
    return g


# ---------------------------------------------------------------------------
# finite-difference oracle


def loss_given_params(
    x: np.ndarray,
    params: ModelParams,
    hyper: HyperParams,
    mode: str,
    labels: np.ndarray | None = None,
    sigma: float = 0.3,
    weights: LossWeights | None = None,
    masks: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Scalar total loss as a pure function of the parameters.

    With ``masks`` the forward pass runs in train mode with exactly
    those dropout masks; otherwise dropout is off (eval mode).
    """
    mode_fw = "eval" if masks is None else "train"
    trace = forward(x, params, hyper, mode=mode_fw, masks=masks)
    return total_loss(trace, params, hyper, mode, labels, sigma, weights).total


def finite_diff_grad(
    x: np.ndarray,
    params: ModelParams,
    hyper: HyperParams,
    mode: str,
    labels: np.ndarray | None = None,
    sigma: float = 0.3,
    weights: LossWeights | None = None,
    step: float = 1e-5,
    masks: tuple[np.ndarray, np.ndarray] | None = None,
) -> ModelParams:
    """Central differences (f(p + h) - f(p - h)) / 2h per scalar parameter."""
    p = params.copy()
    grads = params.zeros_like()
    for name, arr in p.items():
        garr = getattr(grads, name)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            up = loss_given_params(x, p, hyper, mode, labels, sigma, weights, masks)
            arr[idx] = orig - step
            down = loss_given_params(x, p, hyper, mode, labels, sigma, weights, masks)
            arr[idx] = orig
            garr[idx] = (up - down) / (2.0 * step)
    return grads


def gradient_report(analytic: ModelParams, numeric: ModelParams) -> dict:
    """Per-parameter relative error between two gradient sets.

    The error for a tensor is the max absolute difference scaled by the
    larger of the two tensors' max magnitudes (a pair of all-zero
    tensors compares equal).
    """
    report = {}
    worst = 0.0
    for name, a in analytic.items():
        b = getattr(numeric, name)
        scale = max(np.abs(a).max(), np.abs(b).max(), 0.0)
        if scale == 0.0:
            err = 0.0
        else:
            err = float(np.abs(a - b).max() / max(scale, 1e-8))
        report[name] = err
        worst = max(worst, err)
    report["max"] = worst
    return report
