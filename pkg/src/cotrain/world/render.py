"""Domain-gapped rasterizer.

SIM frames are flat-shaded on a plain backdrop with a fixed palette
rotation and no sensor noise: the injected visual gap.  HUMAN and REAL
frames share one photometric pipeline (background texture, lighting gain
and tint, Gaussian sensor noise) and differ only in the embodiment sprite,
so HUMAN observations stay close to REAL ones while SIM observations do
not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import DomainTag
from .catalog import Texture
from .core import Embodiment, Scene, SceneObject, fingertips

# fixed channel rotation + lift applied to every color in SIM frames
SIM_PALETTE_MIX = 0.70
SIM_PALETTE_LIFT = 0.12
SIM_BACKDROP = np.array([0.80, 0.82, 0.84])


@dataclass(frozen=True)
class RenderConfig:
    resolution: tuple[int, int] = (64, 64)
    noise_sigma: float = 1.5  # uint8 counts, HUMAN/REAL only
    finger_radius: float = 0.016
    wrist_radius: float = 0.035
    palm_half: float = 0.028
    finger_half: float = 0.03


def _grid(resolution: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    h, w = resolution
    ys = (np.arange(h) + 0.5) / h
    xs = (np.arange(w) + 0.5) / w
    xx, yy = np.meshgrid(xs, ys)
    return xx, 1.0 - yy  # row 0 is the top of the workspace


def _texture_image(tex: Texture, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
    a = np.array(tex.tone_a)
    b = np.array(tex.tone_b)
    if tex.kind == "plain":
        m = np.zeros_like(xx)
    elif tex.kind == "checker":
        m = ((np.floor(xx * tex.freq) + np.floor(yy * tex.freq)) % 2.0)
    elif tex.kind == "stripes":
        m = 0.5 + 0.5 * np.sign(np.sin(2 * np.pi * tex.freq * (xx * 0.8 + yy * 0.6) + tex.phase))
    elif tex.kind == "bands":
        m = 0.5 + 0.5 * np.sin(2 * np.pi * tex.freq * xx + 2.2 * np.sin(2 * np.pi * yy) + tex.phase)
    elif tex.kind == "dots":
        fx = xx * tex.freq - np.floor(xx * tex.freq) - 0.5
        fy = yy * tex.freq - np.floor(yy * tex.freq) - 0.5
        m = (fx**2 + fy**2 < 0.09).astype(float)
    elif tex.kind == "speckle":
        m = 0.5 + 0.25 * np.sin(2 * np.pi * tex.freq * xx + tex.phase) * np.sin(
            2 * np.pi * (tex.freq * 1.31) * yy + 1.7
        ) + 0.25 * np.sin(2 * np.pi * (tex.freq * 0.47) * (xx + yy))
    elif tex.kind == "wrinkle":
        warp_x = xx + 0.09 * np.sin(2 * np.pi * 2.3 * yy + tex.phase)
        warp_y = yy + 0.07 * np.sin(2 * np.pi * 3.1 * xx + 0.8 + tex.phase)
        m = 0.5 + 0.5 * np.sin(
            2 * np.pi * tex.freq * warp_x + 3.0 * np.sin(2 * np.pi * 1.7 * warp_y)
        ) * np.cos(2 * np.pi * (tex.freq * 0.6) * warp_y)
        m = np.clip(m, 0.0, 1.0)
    else:
        raise ValueError(f"unknown texture kind {tex.kind!r}")
    return a[None, None, :] + (b - a)[None, None, :] * m[..., None]


def _shape_mask(obj: SceneObject, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
    dx, dy = xx - obj.xy[0], yy - obj.xy[1]
    c, s = np.cos(-obj.theta), np.sin(-obj.theta)
    lx, ly = c * dx - s * dy, s * dx + c * dy
    r = obj.radius
    if obj.shape in ("disc", "item", "button", "lid"):
        return lx**2 + ly**2 < r**2
    if obj.shape == "square":
        return np.maximum(np.abs(lx), np.abs(ly)) < r
    if obj.shape == "triangle":
        return (ly > -0.6 * r) & (ly + 2.2 * np.abs(lx) < 1.1 * r)
    if obj.shape == "ring":
        d2 = lx**2 + ly**2
        return (d2 < r**2) & (d2 > (0.55 * r) ** 2)
    if obj.shape == "pot":
        d2 = lx**2 + ly**2
        return (d2 < r**2) & (d2 > (0.72 * r) ** 2)
    if obj.shape == "hex":
        u = np.abs(lx) * 0.8660254 + np.abs(ly) * 0.5
        return np.maximum(u, np.abs(ly)) < r * 0.92
    if obj.shape == "bar":
        return (np.abs(lx) < r) & (np.abs(ly) < 0.028 * obj.size)
    raise ValueError(f"unknown shape {obj.shape!r}")


def _paint(img: np.ndarray, mask: np.ndarray, color: np.ndarray) -> None:
    img[mask] = color


def _disc_mask(xx, yy, center, radius):
    return (xx - center[0]) ** 2 + (yy - center[1]) ** 2 < radius**2


def _rect_mask(xx, yy, center, theta, half_x, half_y):
    dx, dy = xx - center[0], yy - center[1]
    c, s = np.cos(-theta), np.sin(-theta)
    lx, ly = c * dx - s * dy, s * dx + c * dy
    return (np.abs(lx) < half_x) & (np.abs(ly) < half_y)


def _draw_gripper(img, xx, yy, state, cfg: RenderConfig, color: np.ndarray):
    for arm in range(2):
        x, y, th, g = state[4 * arm : 4 * arm + 4]
        gap = 0.016 if g > 0.5 else 0.034
        _paint(img, _rect_mask(xx, yy, (x, y), th, cfg.palm_half, cfg.palm_half * 0.7), color)
        for side in (-1.0, 1.0):
            c, s = np.cos(th), np.sin(th)
            fx = x + c * 0.0 - s * side * gap
            fy = y + s * 0.0 + c * side * gap
            _paint(img, _rect_mask(xx, yy, (fx, fy), th, cfg.finger_half, 0.007), color * 0.8)


def _draw_hand(img, xx, yy, state, cfg: RenderConfig, color: np.ndarray):
    for hand in range(2):
        wx, wy, wth = state[3 * hand : 3 * hand + 3]
        _paint(img, _disc_mask(xx, yy, (wx, wy), cfg.wrist_radius), color)
        c, s = np.cos(wth), np.sin(wth)
        for ox, oy in fingertips(state, hand):
            tx = wx + c * ox - s * oy
            ty = wy + s * ox + c * oy
            _paint(img, _disc_mask(xx, yy, (tx, ty), cfg.finger_radius), color * 0.92)


def _sim_color(color: np.ndarray) -> np.ndarray:
    rolled = np.roll(color, 1)
    return np.clip(SIM_PALETTE_LIFT + SIM_PALETTE_MIX * rolled, 0.0, 1.0)


def render(
    scene: Scene,
    emb: Embodiment,
    state: np.ndarray,
    domain: DomainTag,
    catalog,
    cfg: RenderConfig | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Rasterize one observation frame as (H, W, 3) uint8."""
    cfg = cfg or RenderConfig()
    xx, yy = _grid(cfg.resolution)
    if domain is DomainTag.SIM:
        img = np.broadcast_to(SIM_BACKDROP, (*xx.shape, 3)).copy()
        for obj in scene.distractors + scene.objects:
            _paint(img, _shape_mask(obj, xx, yy), _sim_color(obj.color))
        sprite = _sim_color(np.array([0.25, 0.27, 0.32]))
        _draw_gripper(img, xx, yy, state, cfg, sprite)
    else:
        tex = catalog.background(scene.background)
        img = _texture_image(tex, xx, yy)
        for obj in scene.distractors + scene.objects:
            _paint(img, _shape_mask(obj, xx, yy), obj.color)
        if emb.kind == "hand":
            _draw_hand(img, xx, yy, state, cfg, np.array([0.87, 0.68, 0.55]))
        else:
            _draw_gripper(img, xx, yy, state, cfg, np.array([0.25, 0.27, 0.32]))
        img = img * scene.light_gain * scene.light_tint[None, None, :]
        if cfg.noise_sigma > 0 and rng is not None:
            img = img + rng.normal(0.0, cfg.noise_sigma / 255.0, img.shape)
    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)
