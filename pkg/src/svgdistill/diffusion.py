"""Discrete-time denoising diffusion: schedules, noising, DDIM, guidance.

Two denoiser families are provided. ``GaussianMixturePrior`` computes the
exact noise prediction of a diffused Gaussian mixture, which makes every
identity checkable in closed form. ``TinyDenoiser`` is a small numpy MLP
trained with the epsilon-prediction objective.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Hashable, Protocol, Sequence

import numpy as np
from scipy.special import logsumexp

DEFAULT_T = 1000
DEFAULT_SAMPLING_STEPS = 50
DEFAULT_GUIDANCE = 7.5
LABEL_DROPOUT = 0.1
COSINE_OFFSET = 0.008
MAX_BETA = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance-preserving schedule indexed by ``t = 0..T``.

    ``alpha[0] = 1`` and ``sigma[0] = 0`` describe clean data; diffusion
    timesteps are ``1..T``.
    """

    T: int
    alpha: np.ndarray
    sigma: np.ndarray
    kind: str = "cosine"

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return t


def make_schedule(T: int = DEFAULT_T, kind: str = "cosine") -> NoiseSchedule:
    if T < 2:
        raise ValueError("need at least 2 timesteps")
    t = np.arange(T + 1)
    if kind == "cosine":
        f = np.cos((t / T + COSINE_OFFSET) / (1 + COSINE_OFFSET) * math.pi / 2) ** 2
        alpha_bar = f / f[0]
        betas = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 0.0, MAX_BETA)
    elif kind == "linear":
        # standard 1e-4..0.02 range for T=1000, rescaled so other T reach similar noise
        scale = 1000.0 / T
        betas = np.clip(np.linspace(1e-4 * scale, 0.02 * scale, T), 0.0, MAX_BETA)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    alpha = np.sqrt(alpha_bar)
    sigma = np.sqrt(1.0 - alpha_bar)
    return NoiseSchedule(T, alpha, sigma, kind)


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    t = sched.check_t(t)
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise ValueError("x0 and eps shapes differ")
    return sched.alpha[t] * x0 + sched.sigma[t] * eps


class Denoiser(Protocol):
    def predict(self, x_t: np.ndarray, t: int, cond: Hashable | None = None) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# Analytic Gaussian-mixture prior
# ---------------------------------------------------------------------------

@dataclass
class GaussianMixturePrior:
    """Per-label isotropic Gaussian mixtures over images.

    ``components[label]`` is a list of ``(mean, stdev, weight)``. The
    unconditional branch is the label-averaged mixture unless an explicit
    ``unconditional`` list is given.
    """

    components: dict[Hashable, list[tuple[np.ndarray, float, float]]]
    sched: NoiseSchedule = field(default_factory=make_schedule)
    unconditional: list[tuple[np.ndarray, float, float]] | None = None

    def __post_init__(self):
        clean = {}
        for label, comps in self.components.items():
            clean[label] = self._normalize(comps)
        self.components = clean
        if self.unconditional is not None:
            self.unconditional = self._normalize(self.unconditional)

    @staticmethod
    def _normalize(comps):
        if not comps:
            raise ValueError("mixture needs at least one component")
        if any(float(w) < 0 for _, _, w in comps):
            raise ValueError("mixture weights must be non-negative")
        # zero-weight components contribute nothing and would break the log
        comps = [c for c in comps if float(c[2]) > 0]
        if not comps:
            raise ValueError("mixture weights sum to zero")
        total = sum(float(w) for _, _, w in comps)
        return [(np.asarray(m, dtype=float), float(s), float(w) / total) for m, s, w in comps]

    @classmethod
    def single(cls, mean: np.ndarray, stdev: float, label: Hashable = 0,
               sched: NoiseSchedule | None = None) -> "GaussianMixturePrior":
        return cls({label: [(mean, stdev, 1.0)]}, sched or make_schedule())

    @property
    def labels(self) -> list[Hashable]:
        return list(self.components)

    @property
    def shape(self) -> tuple[int, ...]:
        return next(iter(self.components.values()))[0][0].shape

    def mixture(self, cond: Hashable | None) -> list[tuple[np.ndarray, float, float]]:
        if cond is None:
            if self.unconditional is not None:
                return self.unconditional
            n = len(self.components)
            return [(m, s, w / n) for comps in self.components.values() for m, s, w in comps]
        if cond not in self.components:
            raise KeyError(f"unknown label {cond!r}")
        return self.components[cond]

    def log_density(self, x_t: np.ndarray, t: int, cond: Hashable | None = None) -> float:
        """Exact ``log p_t(x_t | cond)`` of the diffused mixture."""
        logs = self._component_logs(np.asarray(x_t, dtype=float), t, cond)[0]
        return float(logsumexp(logs))

    def _component_logs(self, x, t, cond):
        t = self.sched.check_t(t)
        a, s = self.sched.alpha[t], self.sched.sigma[t]
        comps = self.mixture(cond)
        dim = x.size
        logs, resid, var = [], [], []
        for mean, std, w in comps:
            v = a * a * std * std + s * s
            r = x - a * mean
            logs.append(math.log(w) - 0.5 * dim * math.log(2 * math.pi * v) - 0.5 * float(np.sum(r * r)) / v)
            resid.append(r)
            var.append(v)
        return np.array(logs), resid, var

    def predict(self, x_t: np.ndarray, t: int, cond: Hashable | None = None) -> np.ndarray:
        return gmm_epsilon(self, x_t, t, cond, self.sched)


def gmm_epsilon(prior: GaussianMixturePrior, x_t: np.ndarray, t: int, cond: Hashable | None,
                sched: NoiseSchedule | None = None) -> np.ndarray:
    """Exact noise prediction ``-sigma_t * grad log p_t(x_t | cond)``."""
    x = np.asarray(x_t, dtype=float)
    sched = sched or prior.sched
    t = sched.check_t(t)
    if sched is not prior.sched:
        prior = GaussianMixturePrior(prior.components, sched, prior.unconditional)
    logs, resid, var = prior._component_logs(x, t, cond)
    resp = np.exp(logs - logsumexp(logs))
    score_neg = np.zeros_like(x)
    for r_j, res, v in zip(resp, resid, var):
        if r_j:
            score_neg += r_j * res / v
    return sched.sigma[t] * score_neg


# ---------------------------------------------------------------------------
# Guidance and sampling
# ---------------------------------------------------------------------------

def cfg(denoiser: Denoiser, x_t: np.ndarray, t: int, cond: Hashable | None, omega: float) -> np.ndarray:
    """Classifier-free guided prediction ``(1 + w) * eps(x, y) - w * eps(x)``."""
    eps_c = denoiser.predict(x_t, t, cond)
    if omega == 0:
        return eps_c
    eps_u = denoiser.predict(x_t, t, None)
    return (1.0 + omega) * eps_c - omega * eps_u


def ddim_step(denoiser: Denoiser, x_t: np.ndarray, t: int, t_prev: int, cond: Hashable | None,
              sched: NoiseSchedule, omega: float = 0.0, eps: np.ndarray | None = None) -> np.ndarray:
    """Deterministic DDIM update from ``t`` to ``t_prev``.

    ``eps`` overrides the guided model prediction when given.
    """
    t, t_prev = sched.check_t(t), sched.check_t(t_prev)
    if not t_prev < t:
        raise ValueError("t_prev must be smaller than t")
    if sched.alpha[t] == 0:
        raise ValueError("alpha_t is zero; the schedule must keep alpha_T > 0")
    if eps is None:
        eps = cfg(denoiser, x_t, t, cond, omega)
    x_hat = (x_t - sched.sigma[t] * eps) / sched.alpha[t]
    return sched.alpha[t_prev] * x_hat + sched.sigma[t_prev] * eps


def timestep_ladder(T: int, steps: int) -> np.ndarray:
    """Uniformly strided timesteps ``T = t_0 > ... > t_steps = 0``."""
    if not 1 <= steps <= T:
        raise ValueError(f"steps must be in [1, {T}]")
    return np.round(np.linspace(T, 0, steps + 1)).astype(int)


def sample(denoiser: Denoiser, cond: Hashable | None, shape: Sequence[int], sched: NoiseSchedule,
           steps: int = DEFAULT_SAMPLING_STEPS, omega: float = DEFAULT_GUIDANCE, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(tuple(shape))
    ladder = timestep_ladder(sched.T, steps)
    for t, t_prev in zip(ladder[:-1], ladder[1:]):
        x = ddim_step(denoiser, x, int(t), int(t_prev), cond, sched, omega)
    return x


# ---------------------------------------------------------------------------
# Trainable denoiser
# ---------------------------------------------------------------------------

def _silu(x):
    return x / (1.0 + np.exp(-x))


def _silu_grad(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def timestep_features(t: np.ndarray, T: int, dim: int) -> np.ndarray:
    """Sinusoidal features of ``t / T`` at geometric frequencies."""
    half = dim // 2
    freqs = np.exp(-math.log(1000.0) * np.arange(half) / max(half - 1, 1))
    ang = (np.asarray(t, dtype=float)[:, None] / T) * 1000.0 * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class TinyDenoiser:
    """Residual MLP over flattened small images.

    ``h = silu([x, temb, label_emb] W1 + b1)``; ``h += silu(h W2 + b2)``;
    ``v = h W3 + b3``. The head predicts ``v = alpha*eps - sigma*x0`` and is
    converted to ``eps = sigma*x_t + alpha*v``, which keeps the clean-image
    estimate bounded where ``alpha_t`` is tiny. The last label-embedding row
    is the null label used for the unconditional branch.
    """

    PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "E")

    def __init__(self, image_shape: Sequence[int], labels: Sequence[Hashable], sched: NoiseSchedule | None = None,
                 hidden: int = 256, time_dim: int = 32, label_dim: int = 16,
                 label_dropout: float = LABEL_DROPOUT, seed: int = 0):
        self.image_shape = tuple(int(s) for s in image_shape)
        self.labels = list(labels)
        self.sched = sched or make_schedule()
        self.hidden, self.time_dim, self.label_dim = hidden, time_dim, label_dim
        self.label_dropout = label_dropout
        dim = int(np.prod(self.image_shape))
        rng = np.random.default_rng(seed)
        n_in = dim + time_dim + label_dim

        def dense(fan_in, fan_out, gain=1.0):
            return rng.normal(0.0, gain / math.sqrt(fan_in), (fan_in, fan_out))

        self.params = {
            "W1": dense(n_in, hidden), "b1": np.zeros(hidden),
            "W2": dense(hidden, hidden), "b2": np.zeros(hidden),
            "W3": dense(hidden, dim, 0.01), "b3": np.zeros(dim),
            "E": rng.normal(0.0, 1.0, (len(self.labels) + 1, label_dim)),
        }

    @property
    def dim(self) -> int:
        return int(np.prod(self.image_shape))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.image_shape

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def label_index(self, cond: Hashable | None) -> int:
        if cond is None:
            return len(self.labels)
        try:
            return self.labels.index(cond)
        except ValueError:
            raise KeyError(f"unknown label {cond!r}") from None

    def _forward(self, x, t, lab):
        p = self.params
        h0 = np.concatenate([x, timestep_features(t, self.sched.T, self.time_dim), p["E"][lab]], axis=1)
        z1 = h0 @ p["W1"] + p["b1"]
        h1 = _silu(z1)
        z2 = h1 @ p["W2"] + p["b2"]
        h2 = h1 + _silu(z2)
        v = h2 @ p["W3"] + p["b3"]
        a = self.sched.alpha[t][:, None]
        s = self.sched.sigma[t][:, None]
        return s * x + a * v, (h0, z1, h1, z2, h2)

    def predict_batch(self, x: np.ndarray, t, labels) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        t = np.broadcast_to(np.asarray(t), (len(x),))
        return self._forward(x, t, np.asarray(labels, dtype=int))[0]

    def predict(self, x_t: np.ndarray, t: int, cond: Hashable | None = None) -> np.ndarray:
        x = np.asarray(x_t, dtype=float)
        out = self.predict_batch(x.reshape(1, -1), [t], [self.label_index(cond)])
        return out.reshape(x.shape)

    def loss_and_grad(self, x0: np.ndarray, t: np.ndarray, eps: np.ndarray, labels: np.ndarray,
                      weights: np.ndarray | None = None) -> tuple[float, dict[str, np.ndarray]]:
        """Batch epsilon-prediction loss (mean over elements) and its gradients."""
        b = len(x0)
        x0 = x0.reshape(b, -1)
        eps = eps.reshape(b, -1)
        t = np.asarray(t, dtype=int)
        x_t = self.sched.alpha[t][:, None] * x0 + self.sched.sigma[t][:, None] * eps
        out, (h0, z1, h1, z2, h2) = self._forward(x_t, t, labels)
        w = np.ones(b) if weights is None else np.asarray(weights, dtype=float)
        diff = out - eps
        loss = float(np.sum(w[:, None] * diff * diff) / diff.size)
        p = self.params
        d_out = 2.0 * w[:, None] * diff / diff.size * self.sched.alpha[t][:, None]
        g = {"W3": h2.T @ d_out, "b3": d_out.sum(0)}
        d_h2 = d_out @ p["W3"].T
        d_z2 = d_h2 * _silu_grad(z2)
        g["W2"] = h1.T @ d_z2
        g["b2"] = d_z2.sum(0)
        d_h1 = d_h2 + d_z2 @ p["W2"].T
        d_z1 = d_h1 * _silu_grad(z1)
        g["W1"] = h0.T @ d_z1
        g["b1"] = d_z1.sum(0)
        d_h0 = d_z1 @ p["W1"].T
        d_lab = d_h0[:, -self.label_dim:]
        g["E"] = np.zeros_like(p["E"])
        np.add.at(g["E"], labels, d_lab)
        return loss, g

    def train(self, images: np.ndarray, labels: Sequence[Hashable], steps: int = 2000, batch: int = 64,
              lr: float = 1e-3, seed: int = 0) -> list[float]:
        """Adam on the denoising objective with label dropout; returns losses."""
        rng = np.random.default_rng(seed)
        data = np.asarray(images, dtype=float).reshape(len(images), -1)
        lab_idx = np.array([self.label_index(y) for y in labels])
        m = {k: np.zeros_like(v) for k, v in self.params.items()}
        v = {k: np.zeros_like(v) for k, v in self.params.items()}
        b1, b2, eps_adam = 0.9, 0.999, 1e-8
        history = []
        for step in range(1, steps + 1):
            idx = rng.integers(0, len(data), batch)
            t = rng.integers(1, self.sched.T + 1, batch)
            noise = rng.standard_normal((batch, data.shape[1]))
            lab = lab_idx[idx].copy()
            lab[rng.random(batch) < self.label_dropout] = len(self.labels)
            loss, grads = self.loss_and_grad(data[idx], t, noise, lab)
            history.append(loss)
            for k, g in grads.items():
                m[k] = b1 * m[k] + (1 - b1) * g
                v[k] = b2 * v[k] + (1 - b2) * g * g
                mh = m[k] / (1 - b1 ** step)
                vh = v[k] / (1 - b2 ** step)
                self.params[k] -= lr * mh / (np.sqrt(vh) + eps_adam)
        return history

    # -- checkpoint -------------------------------------------------------

    MAGIC = b"SVDTINY\x00"
    VERSION = 1

    def save(self, path) -> None:
        """Write magic, version, JSON header length + header, then float64 LE params."""
        header = {
            "image_shape": self.image_shape,
            "labels": self.labels,
            "hidden": self.hidden,
            "time_dim": self.time_dim,
            "label_dim": self.label_dim,
            "label_dropout": self.label_dropout,
            "schedule": {"T": self.sched.T, "kind": self.sched.kind},
            "params": [[k, list(self.params[k].shape)] for k in self.PARAM_NAMES],
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        flat = np.concatenate([self.params[k].ravel() for k in self.PARAM_NAMES]).astype("<f8")
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<II", self.VERSION, len(blob)))
            fh.write(blob)
            fh.write(flat.tobytes())

    @classmethod
    def load(cls, path) -> "TinyDenoiser":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:8] != cls.MAGIC:
            raise ValueError("not a TinyDenoiser checkpoint")
        version, hlen = struct.unpack("<II", data[8:16])
        if version != cls.VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
        flat = np.frombuffer(data[16 + hlen:], dtype="<f8")
        sched = make_schedule(header["schedule"]["T"], header["schedule"]["kind"])
        model = cls(header["image_shape"], header["labels"], sched, header["hidden"], header["time_dim"],
                    header["label_dim"], header["label_dropout"])
        offset = 0
        for name, shape in header["params"]:
            size = int(np.prod(shape))
            if offset + size > flat.size:
                raise ValueError("checkpoint parameter array is truncated")
            model.params[name] = flat[offset:offset + size].reshape(shape).astype(float)
            offset += size
        if offset != flat.size:
            raise ValueError("checkpoint has trailing data")
        return model


def ddpm_loss(denoiser: Denoiser, x0: np.ndarray, t: int, eps: np.ndarray, cond: Hashable | None,
              sched: NoiseSchedule, w: float = 1.0) -> tuple[float, dict[str, np.ndarray] | None]:
    """``w(t) * mean((eps_hat(x_t, t, cond) - eps)^2)`` plus parameter gradients.

    Gradients are returned only for denoisers with trainable parameters.
    """
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if isinstance(denoiser, TinyDenoiser):
        lab = np.array([denoiser.label_index(cond)])
        return denoiser.loss_and_grad(x0[None], np.array([t]), eps[None], lab, np.array([w]))
    x_t = q_sample(x0, t, eps, sched)
    diff = denoiser.predict(x_t, t, cond) - eps
    return float(w * np.mean(diff * diff)), None
