"""DDPM machinery: squared-cosine schedule, forward noising, and ancestral
sampling over an arbitrary timestep subsequence.

The full sampler and the accelerated sampler are the same routine run over
different timestep lists, with per-step betas re-derived from alpha_bar
ratios between retained timesteps; a stride-1 subsequence therefore
reproduces the full chain bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, SamplingError

BETA_MAX = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    T_train: int
    betas: np.ndarray  # (T,), in (0, BETA_MAX]
    alpha_bars: np.ndarray  # (T,), strictly decreasing
    inference_steps: int
    inference_timesteps: np.ndarray  # strictly decreasing, T-1 .. 0
    s_offset: float

    def __post_init__(self):
        ab = self.alpha_bars
        if not (np.diff(ab) < 0).all():
            raise ConfigError("alpha_bars must be strictly decreasing")
        if ab[0] < 0.99:
            raise ConfigError(f"alpha_bars[0] = {ab[0]:.4f}, expected >= 0.99")
        ts = self.inference_timesteps
        if len(ts) != self.inference_steps or ts[0] != self.T_train - 1 or ts[-1] != 0:
            raise ConfigError("inference_timesteps must run from T-1 down to 0")
        if not (np.diff(ts) < 0).all():
            raise ConfigError("inference_timesteps must be strictly decreasing")


def squared_cosine_alpha_bar(u: np.ndarray | float, T: int, s: float):
    """Continuous schedule curve f(u)/f(0), u in [0, T]."""
    f = lambda v: np.cos(((v / T + s) / (1.0 + s)) * np.pi / 2.0) ** 2
    return f(u) / f(0.0)


def inference_timestep_grid(T: int, steps: int) -> np.ndarray:
    """Evenly spaced descending timesteps including both T-1 and 0."""
    if not 2 <= steps <= T:
        raise ConfigError(f"inference_steps must be in [2, T], got {steps}")
    return np.rint(np.linspace(T - 1, 0, steps)).astype(int)


def build_schedule(T: int = 100, s_offset: float = 0.008, inference_steps: int = 8) -> NoiseSchedule:
    """Squared-cosine schedule: alpha_bar[t] = f(t+1)/f(0) for t in [0, T-1],
    beta[t] = 1 - f(t+1)/f(t) clipped to BETA_MAX."""
    if T < 2:
        raise ConfigError(f"T must be >= 2, got {T}")
    if s_offset <= 0:
        raise ConfigError(f"s_offset must be positive, got {s_offset}")
    grid = np.arange(T + 1, dtype=float)
    curve = squared_cosine_alpha_bar(grid, T, s_offset)  # curve[0] == 1
    alpha_bars = curve[1:]
    betas = np.minimum(1.0 - curve[1:] / curve[:-1], BETA_MAX)
    return NoiseSchedule(
        T_train=T,
        betas=betas,
        alpha_bars=alpha_bars,
        inference_steps=inference_steps,
        inference_timesteps=inference_timestep_grid(T, inference_steps),
        s_offset=s_offset,
    )


def add_noise(chunk: np.ndarray, t: int | np.ndarray, epsilon: np.ndarray, schedule: NoiseSchedule):
    """Forward process: z_t = sqrt(ab_t) * chunk + sqrt(1 - ab_t) * eps."""
    chunk = np.asarray(chunk)
    epsilon = np.asarray(epsilon)
    if chunk.shape != epsilon.shape:
        raise ConfigError(f"epsilon shape {epsilon.shape} != chunk shape {chunk.shape}")
    t = np.asarray(t)
    if (t < 0).any() or (t >= schedule.T_train).any():
        raise ConfigError(f"timestep out of range [0, {schedule.T_train - 1}]")
    ab = schedule.alpha_bars[t]
    while ab.ndim < chunk.ndim:
        ab = ab[..., None]
    return np.sqrt(ab) * chunk + np.sqrt(1.0 - ab) * epsilon


def effective_alphas(schedule: NoiseSchedule, timesteps: np.ndarray) -> np.ndarray:
    """Per-step alpha over a descending timestep subsequence.

    alpha_eff[i] = ab[t_i] / ab[t_{i+1}] (with ab = 1 past the end), floored
    so the implied beta never exceeds BETA_MAX.
    """
    ab = schedule.alpha_bars[timesteps]
    ab_prev = np.append(ab[1:], 1.0)
    return np.maximum(ab / ab_prev, 1.0 - BETA_MAX)


def sample(
    denoise_fn: Callable[[np.ndarray, int], np.ndarray],
    shape: tuple[int, ...],
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    mode: str = "accelerated",
    noise_scale: float = 1.0,
) -> np.ndarray:
    """Ancestral reverse diffusion from pure noise.

    full mode visits every timestep T-1..0; accelerated mode visits the
    schedule's inference subsequence.  noise_scale scales the posterior
    std (0 gives the deterministic mean chain); the last step never adds
    noise.
    """
    if mode == "full":
        timesteps = np.arange(schedule.T_train - 1, -1, -1)
    elif mode == "accelerated":
        timesteps = schedule.inference_timesteps
    else:
        raise ConfigError(f"mode must be 'full' or 'accelerated', got {mode!r}")
    alphas = effective_alphas(schedule, timesteps)
    z = rng.standard_normal(shape)
    for i, t in enumerate(timesteps):
        eps_hat = np.asarray(denoise_fn(z, int(t)))
        if not np.isfinite(eps_hat).all():
            raise SamplingError(f"denoiser returned non-finite values at step {i} (t={t})")
        ab_t = schedule.alpha_bars[t]
        a_eff = alphas[i]
        b_eff = 1.0 - a_eff
        mean = (z - b_eff / np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(a_eff)
        if i + 1 < len(timesteps):
            ab_prev = schedule.alpha_bars[timesteps[i + 1]]
            var = b_eff * (1.0 - ab_prev) / (1.0 - ab_t)
            z = mean + noise_scale * np.sqrt(var) * rng.standard_normal(shape)
        else:
            z = mean
    return z


def schedule_table(schedule: NoiseSchedule) -> str:
    """Audit dump: one (t, beta, alpha_bar) row per training timestep."""
    lines = ["t\tbeta\talpha_bar"]
    for t in range(schedule.T_train):
        lines.append(f"{t}\t{schedule.betas[t]:.12e}\t{schedule.alpha_bars[t]:.12e}")
    return "\n".join(lines) + "\n"
