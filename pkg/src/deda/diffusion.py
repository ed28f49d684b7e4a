"""Generative-math core: the noise schedule, strength-to-truncation mapping,
the deterministic SDEdit driver, and truncated-timestep textual inversion,
all written against an abstract denoiser contract.

Tensors are generic float arrays; whether they hold pixels or latents is the
backend's business.  A closed-form Gaussian toy denoiser is included as the
reference backend: for data drawn from N(mu, sigma0^2 I) it implements the
exact posterior noise predictor, which makes end-to-end behaviour of the
samplers and the inversion objective checkable against pencil-and-paper
results.

Notation used throughout: ``abar`` is the cumulative product of (1 - beta)
over training timesteps, with ``abar[0] == 1`` exactly; the sampler walks a
grid of ``n_infer`` timesteps evenly spaced over [1, n_train], and an edit of
strength ``s`` enters the chain at grid index ``floor(s * n_infer)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import BackendError, DivergedError, InvalidStrengthError


# ---------------------------------------------------------------------------
# schedule

@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    n_train: int
    beta: np.ndarray          # (n_train,)   beta_t for t = 1..n_train
    alpha: np.ndarray         # (n_train,)   1 - beta_t
    alpha_bar: np.ndarray     # (n_train+1,) abar_t for t = 0..n_train, abar_0 = 1
    n_infer: int
    infer_t: np.ndarray       # (n_infer+1,) grid timesteps, infer_t[0] = 0

    def abar_at_step(self, k: int) -> float:
        """alpha_bar at the k-th inference-grid timestep (k = 0 -> 1.0)."""
        return float(self.alpha_bar[self.infer_t[k]])


def build_schedule(n_train: int = 1000, beta_min: float = 1e-4,
                   beta_max: float = 0.02, n_infer: int = 25) -> NoiseSchedule:
    """Linear beta grid with an inference grid evenly spaced over [1, n_train]."""
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")
    if not (1 <= n_infer <= n_train):
        raise ValueError(f"need 1 <= n_infer <= n_train, got {n_infer} > {n_train}")

    beta = np.linspace(beta_min, beta_max, n_train, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha)])
    if n_infer == 1:
        grid = np.array([n_train])
    else:
        grid = np.floor(np.linspace(1.0, float(n_train), n_infer) + 0.5).astype(np.int64)
    infer_t = np.concatenate([[0], grid])
    return NoiseSchedule(n_train=n_train, beta=beta, alpha=alpha,
                         alpha_bar=alpha_bar, n_infer=n_infer, infer_t=infer_t)


def truncation_index(s: float, sched: NoiseSchedule) -> int:
    """Grid index where an edit of strength ``s`` enters the chain.

    s = 0 means no editing (index 0); s = 1 means generation from scratch
    (index n_infer).
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"strength must be in [0, 1], got {s}")
    return int(np.floor(s * sched.n_infer))


# ---------------------------------------------------------------------------
# denoising contract

@dataclass(frozen=True, eq=False)
class Identifier:
    """Learned conditioning for one class: an embedding the denoiser reads."""

    class_id: int
    embedding: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embedding, dtype=np.float64)
        if not np.isfinite(emb).all():
            raise ValueError("identifier embedding must be finite")
        object.__setattr__(self, "embedding", emb)


@dataclass(frozen=True)
class EditConfig:
    strength: float
    guidance: float = 7.0     # carried for real backends; a no-op for the toy
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"strength must be in [0, 1], got {self.strength}")


@runtime_checkable
class Denoiser(Protocol):
    """Noise predictor: deterministic in (x_t, t, identifier), output shaped
    like the input.  Trainable backends additionally expose
    ``predict_noise_and_mu_grad`` returning (eps_hat, d eps_hat / d mu) with
    the gradient as an elementwise factor."""

    def predict_noise(self, x_t: np.ndarray, t: int,
                      identifier: Identifier) -> np.ndarray: ...


def _checked_prediction(den: Denoiser, x: np.ndarray, t: int,
                        identifier: Identifier) -> np.ndarray:
    eps_hat = np.asarray(den.predict_noise(x, t, identifier), dtype=np.float64)
    if eps_hat.shape != x.shape:
        raise BackendError(
            f"denoiser returned shape {eps_hat.shape}, expected {x.shape}",
            code="bad_shape")
    if not np.isfinite(eps_hat).all():
        raise BackendError("denoiser returned non-finite values", code="non_finite")
    return eps_hat


# ---------------------------------------------------------------------------
# forward / reverse processes

def forward_noise(x0: np.ndarray, k: int, eps: np.ndarray,
                  sched: NoiseSchedule) -> np.ndarray:
    """Noise x0 to the k-th inference-grid timestep:
    ``sqrt(abar) * x0 + sqrt(1 - abar) * eps``; k = 0 returns x0 exactly."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ValueError(f"eps shape {eps.shape} != x0 shape {x0.shape}")
    if not 0 <= k <= sched.n_infer:
        raise ValueError(f"grid index {k} outside [0, {sched.n_infer}]")
    if k == 0:
        return x0.copy()
    abar = sched.abar_at_step(k)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def sdedit(x0_ref: np.ndarray, identifier: Identifier, cfg: EditConfig,
           den: Denoiser, sched: NoiseSchedule) -> np.ndarray:
    """Edit by noising to the truncation point and denoising back.

    The reverse walk is the deterministic update
    ``x_prev = sqrt(abar_prev) * x0_hat + sqrt(1 - abar_prev) * eps_hat``
    with ``x0_hat = (x - sqrt(1 - abar) * eps_hat) / sqrt(abar)``, stepping
    down the inference grid.  Strength 0 returns the input bit-identically;
    the whole walk is deterministic in (input, identifier, seed, schedule).
    """
    x0_ref = np.asarray(x0_ref, dtype=np.float64)
    if not np.isfinite(x0_ref).all():
        raise ValueError("input tensor must be finite")
    k = truncation_index(cfg.strength, sched)
    if k == 0:
        return x0_ref.copy()

    rng = np.random.default_rng(cfg.seed)
    eps = rng.standard_normal(x0_ref.shape)
    x = forward_noise(x0_ref, k, eps, sched)
    for i in range(k, 0, -1):
        t = int(sched.infer_t[i])
        abar = sched.abar_at_step(i)
        abar_prev = sched.abar_at_step(i - 1)
        eps_hat = _checked_prediction(den, x, t, identifier)
        x0_hat = (x - np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(abar)
        x = np.sqrt(abar_prev) * x0_hat + np.sqrt(1.0 - abar_prev) * eps_hat
    return x


# ---------------------------------------------------------------------------
# truncated-timestep textual inversion

def sample_truncated_timesteps(k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n inference-grid indices uniformly from {1..k}."""
    if k < 1:
        raise InvalidStrengthError("truncation index 0 leaves nothing to train on")
    return rng.integers(1, k + 1, size=n)


def ti_loss(c: Identifier, batch: list[np.ndarray], s: float, den: Denoiser,
            sched: NoiseSchedule, rng: np.random.Generator) -> float:
    """One stochastic evaluation of the inversion objective: for each batch
    item draw a grid index below the truncation for strength ``s``, noise the
    item there, and score ``||eps - eps_hat||^2``; returns the batch mean."""
    if not batch:
        raise ValueError("batch must be nonempty")
    k = truncation_index(s, sched)
    ks = sample_truncated_timesteps(k, len(batch), rng)
    assert (ks <= k).all()
    total = 0.0
    for x0, ki in zip(batch, ks):
        x0 = np.asarray(x0, dtype=np.float64)
        eps = rng.standard_normal(x0.shape)
        x_t = forward_noise(x0, int(ki), eps, sched)
        eps_hat = _checked_prediction(den, x_t, int(sched.infer_t[ki]), c)
        r = eps_hat - eps
        total += float(np.sum(r * r))
    return total / len(batch)


def _reduce_to_shape(arr: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum-reduce broadcast axes so gradients land in the embedding's shape."""
    arr = np.asarray(arr, dtype=np.float64)
    while arr.ndim > len(shape):
        arr = arr.sum(axis=0)
    for axis, n in enumerate(shape):
        if arr.shape[axis] != n:
            arr = arr.sum(axis=axis, keepdims=True)
    return arr.reshape(shape)


@dataclass
class TiTrainResult:
    identifier: Identifier
    losses: list[float] = field(default_factory=list)
    timesteps: list[int] = field(default_factory=list)   # grid indices sampled


def ti_train(init: Identifier, cdps: list[np.ndarray], s: float, den: Denoiser,
             sched: NoiseSchedule, steps: int, lr: float,
             rng: np.random.Generator | None = None) -> TiTrainResult:
    """Gradient descent on the truncated inversion objective.

    Requires a denoiser exposing ``predict_noise_and_mu_grad``.  Every
    sampled grid index is recorded (all are <= the truncation index by
    construction) along with the per-step loss.
    """
    if not cdps:
        raise ValueError("need at least one tensor to invert")
    if not hasattr(den, "predict_noise_and_mu_grad"):
        raise TypeError("denoiser does not expose gradients w.r.t. the identifier")
    k = truncation_index(s, sched)
    if k < 1 and steps > 0:
        raise InvalidStrengthError("truncation index 0 leaves nothing to train on")
    rng = rng if rng is not None else np.random.default_rng(0)

    emb = init.embedding.copy()
    result = TiTrainResult(identifier=init)
    for _ in range(steps):
        ident = Identifier(class_id=init.class_id, embedding=emb)
        ks = sample_truncated_timesteps(k, len(cdps), rng)
        assert (ks <= k).all()
        loss = 0.0
        grad = np.zeros_like(emb)
        # overflow to inf is the divergence signal, not a numerics bug
        with np.errstate(over="ignore", invalid="ignore"):
            for x0, ki in zip(cdps, ks):
                x0 = np.asarray(x0, dtype=np.float64)
                eps = rng.standard_normal(x0.shape)
                x_t = forward_noise(x0, int(ki), eps, sched)
                t = int(sched.infer_t[ki])
                eps_hat, dmu = den.predict_noise_and_mu_grad(x_t, t, ident)
                r = np.asarray(eps_hat, dtype=np.float64) - eps
                loss += float(np.sum(r * r))
                grad += _reduce_to_shape(2.0 * r * dmu, emb.shape)
        loss /= len(cdps)
        grad /= len(cdps)
        result.losses.append(loss)
        result.timesteps.extend(int(v) for v in ks)
        if not (np.isfinite(loss) and np.isfinite(grad).all()):
            raise DivergedError("non-finite loss or gradient during inversion",
                                trace=result.losses)
        emb = emb - lr * grad

    result.identifier = Identifier(class_id=init.class_id, embedding=emb)
    return result


# ---------------------------------------------------------------------------
# toy backend

class ToyGaussianDenoiser:
    """Exact posterior noise predictor for data x0 ~ N(mu, sigma0^2 I).

    With ``g_t = sqrt(abar) * sigma0^2 / (abar * sigma0^2 + 1 - abar)``:

        x0_hat  = mu + g_t * (x_t - sqrt(abar) * mu)
        eps_hat = (x_t - sqrt(abar) * x0_hat) / sqrt(1 - abar)

    ``mu`` is read from the identifier embedding (broadcast against the data
    shape) unless a fixed ``mu`` is supplied.  The gradient of eps_hat with
    respect to mu is the elementwise constant ``-sqrt(abar/(1-abar)) *
    (1 - g_t*sqrt(abar))``, which enables the inversion tests.
    """

    def __init__(self, sched: NoiseSchedule, sigma0: float,
                 mu: np.ndarray | float | None = None):
        if not sigma0 > 0:
            raise ValueError("sigma0 must be > 0")
        self.sched = sched
        self.sigma0 = float(sigma0)
        self.mu = None if mu is None else np.asarray(mu, dtype=np.float64)

    def _mu(self, identifier: Identifier, shape: tuple[int, ...]) -> np.ndarray:
        if self.mu is not None:
            return self.mu
        emb = identifier.embedding
        if emb.size == int(np.prod(shape)):
            return emb.reshape(shape)
        return emb   # rely on numpy broadcasting (e.g. a per-channel mean)

    def _coeffs(self, t: int) -> tuple[float, float]:
        abar = float(self.sched.alpha_bar[t])
        var0 = self.sigma0 ** 2
        g = np.sqrt(abar) * var0 / (abar * var0 + 1.0 - abar)
        return abar, g

    def predict_noise(self, x_t: np.ndarray, t: int,
                      identifier: Identifier) -> np.ndarray:
        abar, g = self._coeffs(t)
        mu = self._mu(identifier, x_t.shape)
        x0_hat = mu + g * (x_t - np.sqrt(abar) * mu)
        return (x_t - np.sqrt(abar) * x0_hat) / np.sqrt(1.0 - abar)

    def predict_noise_and_mu_grad(self, x_t: np.ndarray, t: int,
                                  identifier: Identifier):
        abar, g = self._coeffs(t)
        mu = self._mu(identifier, x_t.shape)
        x0_hat = mu + g * (x_t - np.sqrt(abar) * mu)
        eps_hat = (x_t - np.sqrt(abar) * x0_hat) / np.sqrt(1.0 - abar)
        dmu = -np.sqrt(abar / (1.0 - abar)) * (1.0 - g * np.sqrt(abar))
        return eps_hat, dmu


def toy_gaussian_denoiser(sched: NoiseSchedule, sigma0: float,
                          mu_param_as_identifier: bool = True,
                          mu: np.ndarray | float | None = None) -> ToyGaussianDenoiser:
    """Convenience constructor; with ``mu_param_as_identifier`` the prior mean
    comes from the identifier embedding, otherwise from ``mu``."""
    if mu_param_as_identifier:
        return ToyGaussianDenoiser(sched, sigma0, mu=None)
    if mu is None:
        raise ValueError("fixed-mu denoiser needs an explicit mu")
    return ToyGaussianDenoiser(sched, sigma0, mu=mu)
