"""Factor catalogs: registries of object styles, distractor sets, lighting
presets, background textures, and init regions, plus the named scenario
mixes used to build each data pool.

Catalogs are declarative and serializable to a plain-text file (one entry
per line) so alternative registries can be supplied without code changes.
Ids prefixed ``ood_`` (and the entries listed in OOD_* below) are held out
of every training pool and only appear in out-of-distribution evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import FactorConfig
from ..errors import ConfigError


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ConfigError(f"degenerate rectangle {self}")

    @property
    def size(self) -> tuple[float, float]:
        return (self.x1 - self.x0, self.y1 - self.y0)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array(
            [rng.uniform(self.x0, self.x1), rng.uniform(self.y0, self.y1)]
        )

    def mirrored(self) -> "Rect":
        """Reflection about the workspace midline x = 0.5 (second arm side)."""
        return Rect(1.0 - self.x1, self.y0, 1.0 - self.x0, self.y1)

    def contains(self, xy) -> bool:
        return self.x0 <= xy[0] <= self.x1 and self.y0 <= xy[1] <= self.y1


@dataclass(frozen=True)
class ObjectStyle:
    color: tuple[float, float, float]
    size: float = 1.0


@dataclass(frozen=True)
class LightPreset:
    gain: float
    tint: tuple[float, float, float]

    def __post_init__(self):
        if self.gain <= 0:
            raise ConfigError(f"light gain must be positive, got {self.gain}")


@dataclass(frozen=True)
class Texture:
    kind: str  # plain | checker | stripes | dots | bands | speckle | wrinkle
    tone_a: tuple[float, float, float]
    tone_b: tuple[float, float, float]
    freq: float = 6.0
    phase: float = 0.0


# distractor set: list of (shape, color) choices; never "disc" so circular
# silhouettes stay a target-only cue
DistractorSet = tuple[tuple[str, tuple[float, float, float]], ...]


@dataclass
class Catalog:
    objects: dict[str, ObjectStyle] = field(default_factory=dict)
    distractors: dict[str, DistractorSet] = field(default_factory=dict)
    lights: dict[str, LightPreset] = field(default_factory=dict)
    backgrounds: dict[str, Texture] = field(default_factory=dict)
    init_regions: dict[str, Rect] = field(default_factory=dict)

    def _get(self, table: dict, kind: str, key: str):
        if key not in table:
            raise ConfigError(f"unregistered {kind} id {key!r} (known: {sorted(table)})")
        return table[key]

    def object_style(self, key: str) -> ObjectStyle:
        return self._get(self.objects, "object", key)

    def distractor_set(self, key: str) -> DistractorSet:
        return self._get(self.distractors, "distractor set", key)

    def light(self, key: str) -> LightPreset:
        return self._get(self.lights, "light", key)

    def background(self, key: str) -> Texture:
        return self._get(self.backgrounds, "background", key)

    def init_region(self, key: str) -> Rect:
        return self._get(self.init_regions, "init region", key)

    def check(self, factors: FactorConfig) -> None:
        self.object_style(factors.obj)
        self.distractor_set(factors.dist)
        self.light(factors.light)
        self.background(factors.bg)
        self.init_region(factors.init)

    # -- plain-text serialization ------------------------------------------

    def to_text(self) -> str:
        lines = []
        for k, v in sorted(self.objects.items()):
            lines.append(f"object {k} color={_fmt(v.color)} size={v.size!r}")
        for k, v in sorted(self.distractors.items()):
            items = ";".join(f"{s}@{_fmt(c)}" for s, c in v)
            lines.append(f"distractors {k} items={items if items else '-'}")
        for k, v in sorted(self.lights.items()):
            lines.append(f"light {k} gain={v.gain!r} tint={_fmt(v.tint)}")
        for k, v in sorted(self.backgrounds.items()):
            lines.append(
                f"background {k} kind={v.kind} tone_a={_fmt(v.tone_a)} "
                f"tone_b={_fmt(v.tone_b)} freq={v.freq!r} phase={v.phase!r}"
            )
        for k, v in sorted(self.init_regions.items()):
            lines.append(f"region {k} rect={v.x0!r},{v.y0!r},{v.x1!r},{v.y1!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Catalog":
        cat = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                kind, key, *fields = line.split()
                kv = dict(f.split("=", 1) for f in fields)
                if kind == "object":
                    cat.objects[key] = ObjectStyle(_tup(kv["color"]), float(kv["size"]))
                elif kind == "distractors":
                    items = kv["items"]
                    entries = []
                    if items != "-":
                        for item in items.split(";"):
                            shape, color = item.split("@")
                            entries.append((shape, _tup(color)))
                    cat.distractors[key] = tuple(entries)
                elif kind == "light":
                    cat.lights[key] = LightPreset(float(kv["gain"]), _tup(kv["tint"]))
                elif kind == "background":
                    cat.backgrounds[key] = Texture(
                        kv["kind"], _tup(kv["tone_a"]), _tup(kv["tone_b"]),
                        float(kv["freq"]), float(kv["phase"]),
                    )
                elif kind == "region":
                    x0, y0, x1, y1 = (float(x) for x in kv["rect"].split(","))
                    cat.init_regions[key] = Rect(x0, y0, x1, y1)
                else:
                    raise ConfigError(f"unknown catalog entry kind {kind!r}")
            except ConfigError:
                raise
            except Exception as e:
                raise ConfigError(f"catalog line {lineno}: cannot parse {raw!r}: {e}") from e
        return cat


def _fmt(c) -> str:
    return ",".join(repr(float(x)) for x in c)


def _tup(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(","))


def default_catalog() -> Catalog:
    cat = Catalog()
    cat.objects = {
        "set_red": ObjectStyle((0.85, 0.18, 0.15)),
        "set_green": ObjectStyle((0.15, 0.72, 0.20)),
        "set_blue": ObjectStyle((0.20, 0.35, 0.85)),
        "set_yellow": ObjectStyle((0.88, 0.78, 0.12)),
        "set_orange": ObjectStyle((0.90, 0.50, 0.10)),
        "set_teal": ObjectStyle((0.10, 0.65, 0.65)),
        # held out for OOD evaluation
        "ood_cyan": ObjectStyle((0.10, 0.85, 0.90), size=1.05),
        "ood_violet": ObjectStyle((0.60, 0.20, 0.85), size=0.95),
    }
    gray = (0.45, 0.45, 0.5)
    cat.distractors = {
        "none": (),
        "low_a": (("square", (0.55, 0.35, 0.2)), ("triangle", (0.3, 0.5, 0.3))),
        "low_b": (("square", (0.25, 0.25, 0.55)), ("triangle", (0.6, 0.55, 0.25))),
        "med_a": (
            ("square", (0.5, 0.3, 0.3)), ("triangle", (0.35, 0.35, 0.6)),
            ("ring", gray), ("square", (0.65, 0.6, 0.4)),
        ),
        "med_b": (
            ("triangle", (0.4, 0.55, 0.55)), ("square", (0.3, 0.45, 0.25)),
            ("ring", (0.55, 0.45, 0.35)),
        ),
        # held out: new shapes and colors, used at high density
        "ood_heavy_a": (
            ("hex", (0.75, 0.4, 0.55)), ("ring", (0.2, 0.6, 0.45)),
            ("hex", (0.35, 0.3, 0.2)), ("triangle", (0.8, 0.7, 0.55)),
        ),
        "ood_heavy_b": (
            ("hex", (0.25, 0.5, 0.7)), ("ring", (0.7, 0.55, 0.25)),
            ("square", (0.15, 0.2, 0.3)), ("hex", (0.5, 0.65, 0.3)),
        ),
    }
    cat.lights = {
        "neutral": LightPreset(1.0, (1.0, 1.0, 1.0)),
        "warm": LightPreset(1.05, (1.06, 1.0, 0.90)),
        "cool": LightPreset(0.98, (0.92, 0.97, 1.08)),
        "dim": LightPreset(0.78, (1.0, 1.0, 1.0)),
        "bright": LightPreset(1.22, (1.0, 1.0, 1.0)),
        "flash_blue": LightPreset(1.08, (0.85, 0.90, 1.25)),
        "ood_amber": LightPreset(0.85, (1.18, 1.02, 0.78)),
        "ood_dusk": LightPreset(1.12, (0.82, 1.08, 0.95)),
    }
    white = (0.93, 0.93, 0.91)
    cat.backgrounds = {
        "base": Texture("plain", white, white),
        "wood": Texture("bands", (0.62, 0.44, 0.28), (0.72, 0.54, 0.36), freq=9.0),
        "checker": Texture("checker", (0.82, 0.82, 0.85), (0.58, 0.60, 0.66), freq=8.0),
        "dots": Texture("dots", (0.88, 0.86, 0.80), (0.45, 0.52, 0.60), freq=10.0),
        "stripes": Texture("stripes", (0.78, 0.72, 0.60), (0.55, 0.62, 0.70), freq=7.0, phase=0.6),
        "speckle": Texture("speckle", (0.75, 0.78, 0.74), (0.52, 0.50, 0.55), freq=16.0),
        # held out: irregular warped patterns
        "ood_wrinkle_a": Texture("wrinkle", (0.70, 0.58, 0.62), (0.38, 0.42, 0.50), freq=5.0),
        "ood_wrinkle_b": Texture("wrinkle", (0.50, 0.62, 0.48), (0.30, 0.28, 0.40), freq=6.5, phase=1.9),
    }
    # regions are for the left-side target; tasks mirror them about x = 0.5
    full = Rect(0.08, 0.48, 0.42, 0.86)
    cell_w, cell_h = (full.x1 - full.x0) / 4.0, (full.y1 - full.y0) / 4.0
    cat.init_regions = {
        "full": full,
        # inner 3x3 block of the 4x4 grid over "full"
        "inner": Rect(
            full.x0 + 0.5 * cell_w, full.y0 + 0.5 * cell_h,
            full.x1 - 0.5 * cell_w, full.y1 - 0.5 * cell_h,
        ),
    }
    return cat


def held_out_ids(cat: Catalog) -> dict[str, set[str]]:
    """Ids reserved for OOD evaluation: never valid in a training pool."""
    return {
        "obj": {k for k in cat.objects if k.startswith("ood_")},
        "dist": {k for k in cat.distractors if k.startswith("ood_")},
        "light": {k for k in cat.lights if k.startswith("ood_")},
        "bg": {k for k in cat.backgrounds if k.startswith("ood_")},
    }


TRAIN_OBJECTS = ("set_red", "set_green", "set_blue", "set_yellow", "set_orange", "set_teal")


def human_scenarios() -> list[tuple[str, FactorConfig]]:
    """The 12 scenario mixes of the human capture pool."""
    combos = [
        ("base", "neutral", "none", 0, "set_red"),
        ("wood", "warm", "low_a", 2, "set_green"),
        ("checker", "cool", "low_b", 2, "set_blue"),
        ("dots", "bright", "med_a", 3, "set_yellow"),
        ("stripes", "dim", "med_b", 3, "set_orange"),
        ("speckle", "flash_blue", "low_a", 1, "set_teal"),
        ("wood", "neutral", "med_a", 4, "set_blue"),
        ("checker", "warm", "none", 0, "set_orange"),
        ("dots", "cool", "low_b", 1, "set_red"),
        ("stripes", "bright", "med_b", 2, "set_teal"),
        ("speckle", "dim", "low_a", 3, "set_yellow"),
        ("base", "flash_blue", "med_a", 2, "set_green"),
    ]
    return [
        (f"human_{i:02d}", FactorConfig(obj=o, dist=d, dist_count=n, light=l, bg=b, init="full"))
        for i, (b, l, d, n, o) in enumerate(combos)
    ]


def real_scenarios(init: str = "full") -> list[tuple[str, FactorConfig]]:
    """1 base + 3 complex scenarios: the fine-tuning (and ID eval) set."""
    return [
        ("base", FactorConfig("set_red", "none", 0, "neutral", "base", init)),
        ("complex_wood", FactorConfig("set_green", "low_a", 2, "warm", "wood", init)),
        ("complex_checker", FactorConfig("set_blue", "low_b", 2, "flash_blue", "checker", init)),
        ("complex_dots", FactorConfig("set_red", "med_a", 3, "dim", "dots", init)),
    ]


def ood_scenarios(init: str = "full") -> list[tuple[str, FactorConfig]]:
    """Two extreme scenarios built only from held-out ids plus heavy clutter."""
    return [
        ("ood_wrinkle", FactorConfig("ood_cyan", "ood_heavy_a", 6, "ood_amber", "ood_wrinkle_a", init)),
        ("ood_clutter", FactorConfig("ood_violet", "ood_heavy_b", 7, "ood_dusk", "ood_wrinkle_b", init)),
    ]


def sim_randomized_factors(rng: np.random.Generator, init: str = "full") -> FactorConfig:
    """Domain-randomized factor draw for one simulated episode."""
    dist = rng.choice(["none", "low_a", "low_b", "med_a", "med_b"])
    count = 0 if dist == "none" else int(rng.integers(1, 5))
    return FactorConfig(
        obj=str(rng.choice(TRAIN_OBJECTS)),
        dist=str(dist),
        dist_count=count,
        light=str(rng.choice(["neutral", "warm", "cool", "dim", "bright", "flash_blue"])),
        bg=str(rng.choice(["base", "wood", "checker", "dots", "stripes", "speckle"])),
        init=init,
    )
