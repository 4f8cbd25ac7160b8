"""Modular diffusion-policy network.

Per-view convolutional vision encoders (no weight sharing) feed
domain-specific adaptors: one adaptor per view for simulated frames, a
single shared adaptor for the human/real stream.  Embodiment-specific
state encoders, action projectors, and output heads wrap a shared
transformer encoder-decoder backbone.  Timestep conditioning is a
sinusoidal embedding passed through a feedforward and added to the decoder
queries, so observation memory can be computed once per planning call.

Routing: SIM batches use the sim adaptors and the robot branch, HUMAN the
real adaptor and the human branch, REAL the real adaptor and the robot
branch (the fine-tuning recombination).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .data import DomainTag, TrainingSample
from .errors import ConfigError, DatasetError

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PolicyConfig:
    views: int = 1
    image_hw: tuple[int, int] = (64, 64)
    robot_state_dim: int = 8
    robot_action_dim: int = 8
    human_state_dim: int = 22
    human_action_dim: int = 22
    horizon: int = 16
    hidden: int = 256
    enc_layers: int = 4
    dec_layers: int = 4
    heads: int = 4
    ffn_mult: int = 4
    conv_channels: tuple[int, ...] = (16, 32, 64, 64)
    dropout: float = 0.1
    state_dropout: float = 0.2
    dtype: str = "float32"
    recombined: bool = False

    def __post_init__(self):
        if self.views < 1:
            raise ConfigError("views must be >= 1")
        if self.hidden % self.heads != 0:
            raise ConfigError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        side = min(self.image_hw)
        if side // (2 ** len(self.conv_channels)) < 1:
            raise ConfigError(
                f"conv stack downsamples {self.image_hw} below 1x1; fewer conv_channels needed"
            )
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32

    def action_dim(self, branch: str) -> int:
        return self.robot_action_dim if branch == "robot" else self.human_action_dim

    def state_dim(self, branch: str) -> int:
        return self.robot_state_dim if branch == "robot" else self.human_state_dim


@dataclass(frozen=True)
class Route:
    adaptor: str  # "sim" | "real"
    branch: str  # "robot" | "human"


ROUTES = {
    DomainTag.SIM: Route("sim", "robot"),
    DomainTag.HUMAN: Route("real", "human"),
    DomainTag.REAL: Route("real", "robot"),
}


class VisionEncoder(nn.Module):
    """Strided conv stack; each final spatial cell becomes one token."""

    def __init__(self, cfg: PolicyConfig):
        super().__init__()
        layers = []
        c_in = 3
        for c_out in cfg.conv_channels:
            layers += [nn.Conv2d(c_in, c_out, 3, stride=2, padding=1), nn.GELU()]
            c_in = c_out
        self.convs = nn.Sequential(*layers)
        h, w = cfg.image_hw
        f = 2 ** len(cfg.conv_channels)
        self.n_tokens = math.ceil(h / f) * math.ceil(w / f)
        self.proj = nn.Linear(c_in, cfg.hidden)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        # img: (B, H, W, 3) in [0, 1]
        x = img.permute(0, 3, 1, 2) * 2.0 - 1.0
        x = self.convs(x)
        x = x.flatten(2).transpose(1, 2)  # (B, cells, C)
        return self.proj(x)


class Adaptor(nn.Module):
    """Two-layer feedforward with GELU, applied tokenwise."""

    def __init__(self, hidden: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(hidden, hidden), nn.GELU(), nn.Linear(hidden, hidden))

    def forward(self, x):
        return self.net(x)


class StateEncoder(nn.Module):
    """Dropout then a single linear map."""

    def __init__(self, d_in: int, hidden: int, p_drop: float):
        super().__init__()
        self.drop = nn.Dropout(p_drop)
        self.proj = nn.Linear(d_in, hidden)

    def forward(self, x):
        return self.proj(self.drop(x))


class ActionProjector(nn.Module):
    def __init__(self, d_in: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(d_in, hidden), nn.GELU(), nn.Linear(hidden, hidden))

    def forward(self, x):
        return self.net(x)


class TimestepEmbed(nn.Module):
    def __init__(self, hidden: int):
        super().__init__()
        self.hidden = hidden
        self.net = nn.Sequential(nn.Linear(hidden, hidden), nn.GELU(), nn.Linear(hidden, hidden))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.hidden // 2
        device, dtype = t.device, self.net[0].weight.dtype
        freqs = torch.exp(
            -math.log(10000.0) * torch.arange(half, device=device, dtype=dtype) / max(half - 1, 1)
        )
        args = t.to(dtype)[:, None] * freqs[None]
        emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
        if self.hidden % 2:
            emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
        return self.net(emb)


NORM_KEYS = ("robot_state", "robot_action", "human_state", "human_action")


class PolicyBundle(nn.Module):
    def __init__(self, cfg: PolicyConfig):
        super().__init__()
        self.cfg = cfg
        h = cfg.hidden
        self.vision_encoders = nn.ModuleList(VisionEncoder(cfg) for _ in range(cfg.views))
        self.sim_adaptors = (
            None if cfg.recombined else nn.ModuleList(Adaptor(h) for _ in range(cfg.views))
        )
        self.real_adaptor = Adaptor(h)
        branches = ("robot",) if cfg.recombined else ("robot", "human")
        self.state_encoders = nn.ModuleDict(
            {b: StateEncoder(cfg.state_dim(b), h, cfg.state_dropout) for b in branches}
        )
        self.action_projectors = nn.ModuleDict(
            {b: ActionProjector(cfg.action_dim(b), h) for b in branches}
        )
        self.heads = nn.ModuleDict({b: nn.Linear(h, cfg.action_dim(b)) for b in branches})
        self.time_embed = TimestepEmbed(h)
        enc_layer = nn.TransformerEncoderLayer(
            h, cfg.heads, h * cfg.ffn_mult, cfg.dropout, "gelu", batch_first=True, norm_first=True
        )
        dec_layer = nn.TransformerDecoderLayer(
            h, cfg.heads, h * cfg.ffn_mult, cfg.dropout, "gelu", batch_first=True, norm_first=True
        )
        self.encoder = nn.TransformerEncoder(
            enc_layer, cfg.enc_layers, norm=nn.LayerNorm(h), enable_nested_tensor=False
        )
        self.decoder = nn.TransformerDecoder(dec_layer, cfg.dec_layers, norm=nn.LayerNorm(h))
        n_tok = self.vision_encoders[0].n_tokens
        self.enc_pos = nn.Parameter(torch.randn(cfg.views * n_tok + 1, h) * 0.02)
        self.dec_pos = nn.Parameter(torch.randn(cfg.horizon, h) * 0.02)
        for key in NORM_KEYS:
            branch, kind = key.split("_")
            d = cfg.state_dim(branch) if kind == "state" else cfg.action_dim(branch)
            self.register_buffer(f"norm_{key}_center", torch.zeros(d))
            self.register_buffer(f"norm_{key}_scale", torch.ones(d))
        self.to(cfg.torch_dtype)

    # -- routing ------------------------------------------------------------

    def route_for(self, domain: DomainTag) -> Route:
        route = ROUTES[domain]
        if self.cfg.recombined and (route.adaptor == "sim" or route.branch == "human"):
            raise ConfigError(f"recombined bundle cannot route {domain.value} batches")
        return route

    # -- normalization ------------------------------------------------------

    def set_normalization(self, stats: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
        """stats maps '<branch>_<kind>' to (center, scale) arrays."""
        for key, (center, scale) in stats.items():
            if key not in NORM_KEYS:
                raise ConfigError(f"unknown normalization key {key!r}")
            getattr(self, f"norm_{key}_center").copy_(
                torch.as_tensor(center, dtype=self.cfg.torch_dtype)
            )
            getattr(self, f"norm_{key}_scale").copy_(
                torch.as_tensor(scale, dtype=self.cfg.torch_dtype)
            )

    def normalize(self, x: torch.Tensor, key: str) -> torch.Tensor:
        return (x - getattr(self, f"norm_{key}_center")) / getattr(self, f"norm_{key}_scale")

    def unnormalize(self, x: torch.Tensor, key: str) -> torch.Tensor:
        return x * getattr(self, f"norm_{key}_scale") + getattr(self, f"norm_{key}_center")

    # -- forward ------------------------------------------------------------

    def encode_obs(self, images: torch.Tensor, state: torch.Tensor, route: Route) -> torch.Tensor:
        """images (B, V, H, W, 3) in [0, 1]; state already normalized."""
        if images.shape[1] != self.cfg.views:
            raise ConfigError(f"expected {self.cfg.views} views, got {images.shape[1]}")
        tokens = []
        for v, enc in enumerate(self.vision_encoders):
            tok = enc(images[:, v])
            if route.adaptor == "sim":
                tok = self.sim_adaptors[v](tok)
            else:
                tok = self.real_adaptor(tok)
            tokens.append(tok)
        state_tok = self.state_encoders[route.branch](state)[:, None, :]
        x = torch.cat(tokens + [state_tok], dim=1) + self.enc_pos
        return self.encoder(x)

    def denoise(self, memory: torch.Tensor, z: torch.Tensor, t: torch.Tensor, route: Route):
        q = self.action_projectors[route.branch](z)
        q = q + self.dec_pos + self.time_embed(t)[:, None, :]
        out = self.decoder(q, memory)
        return self.heads[route.branch](out)

    def forward(self, images, state, z, t, route: Route):
        return self.denoise(self.encode_obs(images, state, route), z, t, route)

    # -- introspection --------------------------------------------------------

    def module_groups(self) -> dict[str, list[nn.Module]]:
        groups = {
            "vision_encoders": list(self.vision_encoders),
            "real_adaptor": [self.real_adaptor],
            "robot_branch": [
                self.state_encoders["robot"],
                self.action_projectors["robot"],
                self.heads["robot"],
            ],
            "backbone": [self.encoder, self.decoder, self.time_embed],
        }
        if self.sim_adaptors is not None:
            groups["sim_adaptors"] = list(self.sim_adaptors)
        if "human" in self.state_encoders:
            groups["human_branch"] = [
                self.state_encoders["human"],
                self.action_projectors["human"],
                self.heads["human"],
            ]
        return groups

    def group_parameters(self, names: Sequence[str]):
        for name in names:
            if name == "positional":
                yield self.enc_pos
                yield self.dec_pos
                continue
            for m in self.module_groups()[name]:
                yield from m.parameters()

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for key in sorted(self.state_dict()):
            digest.update(key.encode())
            digest.update(self.state_dict()[key].cpu().numpy().tobytes())
        return digest.hexdigest()


def init_policy(cfg: PolicyConfig, seed: int) -> PolicyBundle:
    """Build a bundle with a deterministic seeded initialization."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        bundle = PolicyBundle(cfg)
    return bundle


def recombine_for_real(pretrained: PolicyBundle) -> PolicyBundle:
    """Assemble the fine-tuning policy: vision encoders + real adaptor +
    backbone + robot branch, all parameters carried over bit for bit; the
    sim adaptors and human branch are dropped entirely."""
    if pretrained.cfg.recombined:
        raise ConfigError("bundle is already recombined")
    cfg = replace(pretrained.cfg, recombined=True)
    bundle = init_policy(cfg, seed=0)
    src = pretrained.state_dict()
    bundle.load_state_dict({k: src[k].clone() for k in bundle.state_dict()})
    return bundle


def reinit_branch(bundle: PolicyBundle, branch: str, seed: int) -> None:
    """Overwrite one embodiment branch with a fresh seeded initialization
    (used when pretraining never trained that branch's counterpart)."""
    fresh = init_policy(bundle.cfg, seed)
    own, donor = bundle.state_dict(), fresh.state_dict()
    prefixes = (f"state_encoders.{branch}.", f"action_projectors.{branch}.", f"heads.{branch}.")
    bundle.load_state_dict(
        {k: (donor[k].clone() if k.startswith(prefixes) else own[k]) for k in own}
    )


# ---------------------------------------------------------------------------
# batch collation and the noise-prediction contract

def collate(
    batch: Sequence[TrainingSample], dtype: torch.dtype
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, DomainTag]:
    domains = {s.domain for s in batch}
    if len(domains) != 1:
        raise ConfigError(f"batch mixes domains {sorted(d.value for d in domains)}")
    images = torch.from_numpy(np.stack([s.observation for s in batch])).to(dtype) / 255.0
    states = torch.from_numpy(np.stack([s.state for s in batch])).to(dtype)
    chunks = torch.from_numpy(np.stack([s.action_chunk for s in batch])).to(dtype)
    return images, states, chunks, batch[0].domain


def predict_noise(
    bundle: PolicyBundle,
    batch: Sequence[TrainingSample],
    z_t: torch.Tensor,
    t: torch.Tensor,
) -> torch.Tensor:
    """Noise prediction for a homogeneous-domain batch of samples."""
    images, states, _, domain = collate(batch, bundle.cfg.torch_dtype)
    route = bundle.route_for(domain)
    states = bundle.normalize(states, f"{route.branch}_state")
    return bundle(images, states, z_t, t, route)


# ---------------------------------------------------------------------------
# checkpoint container

def serialize_policy(bundle: PolicyBundle, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"param::{k}": v.cpu().numpy() for k, v in bundle.state_dict().items()}
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(bundle.cfg),
        "checksum": bundle.checksum(),
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array([json.dumps(meta, sort_keys=True)]), **arrays)


def load_policy(path: str | Path) -> PolicyBundle:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"][0]))
            arrays = {k[len("param::"):]: z[k] for k in z.files if k.startswith("param::")}
    except Exception as e:
        raise DatasetError(f"cannot read checkpoint {path}: {e}") from e
    if meta.get("version") != CHECKPOINT_VERSION:
        raise DatasetError(
            f"checkpoint version {meta.get('version')} != supported {CHECKPOINT_VERSION}"
        )
    raw = meta["config"]
    raw["image_hw"] = tuple(raw["image_hw"])
    raw["conv_channels"] = tuple(raw["conv_channels"])
    cfg = PolicyConfig(**raw)
    bundle = init_policy(cfg, seed=0)
    bundle.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in arrays.items()})
    if bundle.checksum() != meta["checksum"]:
        raise DatasetError(f"checkpoint {path} failed its content checksum")
    return bundle
