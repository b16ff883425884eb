"""Adam optimizer with bias correction, global-norm clipping, and a
central-finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import NumericsError, Tensor


class OptimizerError(NumericsError):
    """Update refused (non-finite gradients, shape mismatch)."""


@dataclass
class AdamState:
    """Moment buffers keyed by parameter name; step counts applied updates."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def for_params(params: dict[str, Tensor], lr: float = 3e-4, beta1: float = 0.9,
                   beta2: float = 0.95, eps: float = 1e-8) -> "AdamState":
        state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, t in params.items():
            state.m[name] = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
        return state


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float | None = None) -> None:
    """One bias-corrected Adam update, in place. Only names present in
    `grads` are touched; anything else is frozen by omission."""
    for name, g in grads.items():
        if name not in params:
            raise OptimizerError(f"gradient for unknown parameter {name!r}")
        if name not in state.m:
            raise OptimizerError(f"optimizer state missing for {name!r}")
        if g.shape != params[name].data.shape:
            raise OptimizerError(f"gradient shape mismatch for {name!r}")
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite gradient for {name!r}; update refused")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    step_lr = state.lr if lr is None else lr
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m[...] = b1 * m + (1.0 - b1) * g
        v[...] = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        params[name].data[...] -= step_lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.
    Returns the pre-clip norm."""
    total = 0.0
    for g in grads.values():
        total += float((g.astype(np.float64) ** 2).sum())
    norm = total**0.5
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def warmup_lr(base_lr: float, step: int, warmup_steps: int = 100) -> float:
    """Linear warmup from 0 over `warmup_steps`, then constant."""
    if warmup_steps <= 0 or step >= warmup_steps:
        return base_lr
    return base_lr * (step + 1) / warmup_steps


def grad_check(loss_fn, params: dict[str, Tensor], eps: float = 1e-3,
               n_samples: int = 5, seed: int = 0) -> float:
    """Max relative error between analytic and central finite-difference
    gradients over sampled coordinates.

    loss_fn() must rebuild the loss from the current parameter values and
    return a scalar Tensor. Relative error per coordinate is
    |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
    """
    if eps <= 0:
        raise NumericsError("grad_check eps must be positive")
    for t in params.values():
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for name, t in params.items()}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        size = flat.size
        coords = rng.choice(size, size=min(n_samples, size), replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            lp = float(loss_fn().data)
            flat[c] = orig - eps
            lm = float(loss_fn().data)
            flat[c] = orig
            g_fd = (lp - lm) / (2.0 * eps)
            g_a = float(analytic[name].reshape(-1)[c])
            rel = abs(g_a - g_fd) / max(1e-8, abs(g_a) + abs(g_fd))
            worst = max(worst, rel)
    return worst
