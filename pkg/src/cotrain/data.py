"""Episode data model, on-disk dataset format, factor filtering, and the
alpha-ratio batch composer.

A dataset directory holds one ``ep_<id>.npz`` container per episode plus a
``manifest.tsv`` with one row per episode.  The npz container is written
uncompressed, which numpy produces byte-identically for identical input,
so re-writing the same episodes yields the same bytes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DatasetError

MANIFEST_NAME = "manifest.tsv"
MANIFEST_COLUMNS = (
    "file",
    "domain",
    "task",
    "obj",
    "dist",
    "light",
    "bg",
    "init",
    "length",
    "frequency_hz",
)


class DomainTag(Enum):
    SIM = "SIM"
    HUMAN = "HUMAN"
    REAL = "REAL"

    @property
    def is_robot(self) -> bool:
        """SIM and REAL share the robot embodiment; HUMAN does not."""
        return self is not DomainTag.HUMAN


@dataclass(frozen=True)
class FactorConfig:
    """The five scene-composition factors.

    ``dist`` names a registered distractor set and ``dist_count`` how many
    instances to draw from it; all other fields are catalog ids.
    """

    obj: str
    dist: str
    dist_count: int
    light: str
    bg: str
    init: str

    def __post_init__(self):
        if self.dist_count < 0:
            raise ConfigError(f"dist_count must be >= 0, got {self.dist_count}")

    def dist_cell(self) -> str:
        return f"{self.dist}:{self.dist_count}"

    @staticmethod
    def parse_dist_cell(cell: str) -> tuple[str, int]:
        name, _, count = cell.rpartition(":")
        return name, int(count)


@dataclass
class Episode:
    """One demonstration: per-step images, proprioceptive states, actions."""

    domain: DomainTag
    task: str
    factors: FactorConfig
    frequency_hz: float
    observations: np.ndarray  # (T, H, W, 3) uint8
    states: np.ndarray  # (T, d_s) float
    actions: np.ndarray  # (T, d_a) float
    scores_available: bool = False
    score: int = -1  # milestone score when scores_available

    def __len__(self) -> int:
        return int(self.states.shape[0])

    def validate(self, robot_dims: tuple[int, int], human_dims: tuple[int, int]) -> None:
        """Check the Episode invariants; raises DatasetError on violation."""
        T = len(self.observations)
        if not (T == len(self.states) == len(self.actions)):
            raise DatasetError(
                f"length mismatch: obs={len(self.observations)} "
                f"states={len(self.states)} actions={len(self.actions)}"
            )
        if T < 2:
            raise DatasetError(f"episode too short: {T} frames")
        if self.frequency_hz <= 0:
            raise DatasetError(f"frequency_hz must be positive, got {self.frequency_hz}")
        if self.observations.dtype != np.uint8 or self.observations.ndim != 4:
            raise DatasetError("observations must be (T, H, W, 3) uint8")
        d_s, d_a = (human_dims if self.domain is DomainTag.HUMAN else robot_dims)
        if self.states.shape[1] != d_s:
            raise DatasetError(
                f"{self.domain.value} episode has d_s={self.states.shape[1]}, expected {d_s}"
            )
        if self.actions.shape[1] != d_a:
            raise DatasetError(
                f"{self.domain.value} episode has d_a={self.actions.shape[1]}, expected {d_a}"
            )


def _manifest_row(fname: str, ep: Episode) -> str:
    f = ep.factors
    cells = (
        fname,
        ep.domain.value,
        ep.task,
        f.obj,
        f.dist_cell(),
        f.light,
        f.bg,
        f.init,
        str(len(ep)),
        repr(float(ep.frequency_hz)),
    )
    return "\t".join(cells)


def write_dataset(
    episodes: Sequence[Episode],
    path: str | Path,
    robot_dims: tuple[int, int],
    human_dims: tuple[int, int],
) -> dict:
    """Write one npz per episode plus a manifest; returns count summary.

    Deterministic: identical input produces byte-identical output files.
    """
    path = Path(path)
    for i, ep in enumerate(episodes):
        try:
            ep.validate(robot_dims, human_dims)
        except DatasetError as e:
            raise DatasetError(f"episode {i}: {e}") from e
    path.mkdir(parents=True, exist_ok=True)
    rows = []
    counts: dict[str, int] = {}
    for i, ep in enumerate(episodes):
        fname = f"ep_{i:06d}.npz"
        meta = np.array(
            [
                ep.domain.value,
                ep.task,
                ep.factors.obj,
                ep.factors.dist,
                str(ep.factors.dist_count),
                ep.factors.light,
                ep.factors.bg,
                ep.factors.init,
                repr(float(ep.frequency_hz)),
                "1" if ep.scores_available else "0",
                str(ep.score),
            ]
        )
        with open(path / fname, "wb") as fh:
            np.savez(
                fh,
                observations=ep.observations,
                states=ep.states,
                actions=ep.actions,
                meta=meta,
            )
        rows.append(_manifest_row(fname, ep))
        counts[ep.domain.value] = counts.get(ep.domain.value, 0) + 1
    header = "\t".join(MANIFEST_COLUMNS)
    (path / MANIFEST_NAME).write_text("\n".join([header, *rows]) + "\n")
    return {"episodes": len(episodes), "by_domain": counts, "path": str(path)}


def _episode_from_npz(fpath: Path) -> Episode:
    try:
        with np.load(fpath, allow_pickle=False) as z:
            meta = [str(x) for x in z["meta"]]
            obs, states, actions = z["observations"], z["states"], z["actions"]
    except Exception as e:
        raise DatasetError(f"cannot read episode file {fpath}: {e}") from e
    factors = FactorConfig(
        obj=meta[2], dist=meta[3], dist_count=int(meta[4]),
        light=meta[5], bg=meta[6], init=meta[7],
    )
    return Episode(
        domain=DomainTag(meta[0]),
        task=meta[1],
        factors=factors,
        frequency_hz=float(meta[8]),
        observations=obs,
        states=states,
        actions=actions,
        scores_available=meta[9] == "1",
        score=int(meta[10]),
    )


MetaPredicate = Callable[[DomainTag, str, FactorConfig], bool]


def read_dataset(path: str | Path, filter: MetaPredicate | None = None) -> list[Episode]:
    """Load episodes whose manifest metadata satisfies the predicate.

    The predicate sees (domain, task, factors) and runs on manifest rows
    only, so filtering never touches episode files it rejects.
    """
    path = Path(path)
    manifest = path / MANIFEST_NAME
    if not manifest.exists():
        raise DatasetError(f"no manifest at {manifest}")
    lines = manifest.read_text().splitlines()
    episodes = []
    for line in lines[1:]:
        if not line.strip():
            continue
        cells = line.split("\t")
        fname, domain, task = cells[0], DomainTag(cells[1]), cells[2]
        dist, dist_count = FactorConfig.parse_dist_cell(cells[4])
        factors = FactorConfig(
            obj=cells[3], dist=dist, dist_count=dist_count,
            light=cells[5], bg=cells[6], init=cells[7],
        )
        if filter is not None and not filter(domain, task, factors):
            continue
        episodes.append(_episode_from_npz(path / fname))
    return episodes


@dataclass
class TrainingSample:
    """One chunked behavior-cloning sample drawn from a single episode."""

    observation: np.ndarray  # (V, H, W, 3) uint8, V camera views
    state: np.ndarray  # (d_s,)
    action_chunk: np.ndarray  # (H_chunk, d_a)
    pad_mask: np.ndarray  # (H_chunk,) bool, True where padded
    domain: DomainTag


def chunk_episode(ep: Episode, horizon: int) -> list[TrainingSample]:
    """Slice an episode into per-timestep samples with action chunks.

    Chunks never cross the episode end: missing steps repeat the final
    action and are flagged in ``pad_mask``.
    """
    T = len(ep)
    samples = []
    for t in range(T):
        chunk = ep.actions[t : t + horizon]
        n_pad = horizon - len(chunk)
        mask = np.zeros(horizon, dtype=bool)
        if n_pad > 0:
            chunk = np.concatenate([chunk, np.repeat(chunk[-1:], n_pad, axis=0)])
            mask[horizon - n_pad :] = True
        samples.append(
            TrainingSample(
                observation=ep.observations[t][None],
                state=ep.states[t],
                action_chunk=np.ascontiguousarray(chunk),
                pad_mask=mask,
                domain=ep.domain,
            )
        )
    return samples


class SamplePool:
    """Uniform with-replacement sampler over training samples."""

    def __init__(self, samples: Sequence[TrainingSample]):
        self.samples = list(samples)

    @classmethod
    def from_episodes(cls, episodes: Iterable[Episode], horizon: int) -> "SamplePool":
        out: list[TrainingSample] = []
        for ep in episodes:
            out.extend(chunk_episode(ep, horizon))
        return cls(out)

    def __len__(self) -> int:
        return len(self.samples)

    def draw(self, n: int, rng: np.random.Generator) -> list[TrainingSample]:
        idx = rng.integers(0, len(self.samples), size=n)
        return [self.samples[i] for i in idx]


def human_count(batch_size: int, alpha: float) -> int:
    """Deterministic round-half-up of alpha * B."""
    return int(np.floor(alpha * batch_size + 0.5))


def compose_batch(
    sim_pool: SamplePool | None,
    hum_pool: SamplePool | None,
    batch_size: int,
    alpha: float,
    rng: np.random.Generator,
) -> list[TrainingSample]:
    """Draw a mixed batch with exactly round(alpha*B) human samples.

    Counts are deterministic per batch, so the mixed-batch mean loss is an
    exact weighted combination of the per-domain means.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    n_hum = human_count(batch_size, alpha)
    n_sim = batch_size - n_hum
    if n_hum > 0 and (hum_pool is None or len(hum_pool) == 0):
        raise ConfigError("human pool empty but alpha requests human samples")
    if n_sim > 0 and (sim_pool is None or len(sim_pool) == 0):
        raise ConfigError("sim pool empty but alpha requests sim samples")
    batch = []
    if n_sim > 0:
        batch.extend(sim_pool.draw(n_sim, rng))
    if n_hum > 0:
        batch.extend(hum_pool.draw(n_hum, rng))
    order = rng.permutation(len(batch))
    return [batch[i] for i in order]


def split_by_domain(batch: Sequence[TrainingSample]) -> dict[DomainTag, list[TrainingSample]]:
    out: dict[DomainTag, list[TrainingSample]] = {}
    for s in batch:
        out.setdefault(s.domain, []).append(s)
    return out
