"""Synthetic paired clean/degraded sample generation.

Four degradation families are supported: additive Gaussian noise, rain
streaks (sparse noise convolved with an oriented line kernel), haze via
the atmospheric scattering model I = J*t + A*(1-t) with constant
transmission, and 2x spatial downsampling. Clean sources are procedural
patterns (gradients, shapes, smooth texture), so datasets are fully
reproducible from a seed.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os

import numpy as np

from . import images

KINDS = ("noise", "rain", "haze", "downsample")

NOISE_SIGMAS = (15.0, 25.0, 50.0)

# Artifact parameter ranges for randomly drawn specs (the degradation
# literature fixes only the noise levels; the rest are desk-scale choices).
RAIN_DENSITY = (0.02, 0.08)
RAIN_ANGLE = (-30.0, 30.0)          # degrees from vertical
RAIN_LENGTH = (6, 12)               # pixels
RAIN_INTENSITY = (0.2, 0.5)
HAZE_T = (0.4, 0.9)                 # transmission
HAZE_A = (0.7, 1.0)                 # airlight
DOWNSAMPLE_SCALE = 2


@dataclasses.dataclass
class DegradationSpec:
    """Tagged description of one synthetic degradation."""

    kind: str
    params: dict
    seed: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        validate_params(self.kind, self.params)

    def to_json(self):
        return {"kind": self.kind, "params": self.params, "seed": int(self.seed)}


def validate_params(kind, params):
    if kind == "noise":
        if params["sigma"] < 0:
            raise ValueError(f"noise sigma must be >= 0, got {params['sigma']}")
    elif kind == "rain":
        if not 0.0 <= params["density"] <= 1.0:
            raise ValueError(f"rain density must be in [0,1], got {params['density']}")
        if params["length"] < 1:
            raise ValueError(f"rain streak length must be >= 1, got {params['length']}")
        if params["intensity"] < 0:
            raise ValueError(f"rain intensity must be >= 0, got {params['intensity']}")
    elif kind == "haze":
        if not 0.0 <= params["t"] <= 1.0:
            raise ValueError(f"haze transmission must be in [0,1], got {params['t']}")
        if not 0.0 <= params["airlight"] <= 1.0:
            raise ValueError(f"haze airlight must be in [0,1], got {params['airlight']}")
    elif kind == "downsample":
        if params["scale"] != DOWNSAMPLE_SCALE:
            raise ValueError(f"downsample scale must be {DOWNSAMPLE_SCALE}, got {params['scale']}")


# --- single-degradation generators ---

def add_gaussian_noise(img, sigma, seed):
    """Add i.i.d. Gaussian noise with std sigma on the 0-255 scale."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma / 255.0, size=img.shape)
    return np.clip(img + noise, 0.0, 1.0)


def rain_kernel(length, angle_deg):
    """Offsets of an oriented line of `length` pixels, angle from vertical."""
    rad = math.radians(angle_deg)
    dy, dx = math.cos(rad), math.sin(rad)
    cells = []
    for i in range(int(length)):
        off = i - (length - 1) / 2.0
        cell = (round(off * dy), round(off * dx))
        if cell not in cells:
            cells.append(cell)
    return cells


def add_rain_streaks(img, params, seed):
    """Overlay additive rain: sparse seeds convolved with a line kernel.

    The streak layer is nonnegative, so rain only brightens pixels
    (before the final clamp).
    """
    validate_params("rain", params)
    density = params["density"]
    if density == 0.0:
        return img.copy()
    h, w = img.shape[:2]
    rng = np.random.default_rng(seed)
    mask = rng.random((h, w)) < density
    amps = rng.uniform(0.5, 1.0, size=(h, w)) * mask
    cells = rain_kernel(params["length"], params["angle"])
    pad = max(int(params["length"]), 1)
    canvas = np.zeros((h + 2 * pad, w + 2 * pad))
    for dy, dx in cells:
        canvas[pad + dy:pad + dy + h, pad + dx:pad + dx + w] += amps
    layer = params["intensity"] * canvas[pad:pad + h, pad:pad + w]
    return np.clip(img + layer[:, :, None], 0.0, 1.0)


def apply_haze(img, t, airlight):
    """Atmospheric scattering with constant transmission: I = J*t + A*(1-t)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"transmission must be in [0,1], got {t}")
    if not 0.0 <= airlight <= 1.0:
        raise ValueError(f"airlight must be in [0,1], got {airlight}")
    return np.clip(img * t + airlight * (1.0 - t), 0.0, 1.0)


def downsample(img, scale=2):
    """Box-filter downsampling: each output pixel is the s x s block mean."""
    h, w = img.shape[:2]
    if h % scale or w % scale:
        raise ValueError(f"image dims {h}x{w} not divisible by scale {scale}")
    return img.reshape(h // scale, scale, w // scale, scale, -1).mean(axis=(1, 3))


def decimate(img, scale=2):
    """Keep every scale-th pixel (aliasing downsample, no prefilter)."""
    h, w = img.shape[:2]
    if h % scale or w % scale:
        raise ValueError(f"image dims {h}x{w} not divisible by scale {scale}")
    return img[::scale, ::scale]


def apply_spec(img, spec):
    """Apply a degradation spec to a clean image of the output resolution."""
    if spec.kind == "noise":
        return add_gaussian_noise(img, spec.params["sigma"], spec.seed)
    if spec.kind == "rain":
        return add_rain_streaks(img, spec.params, spec.seed)
    if spec.kind == "haze":
        return apply_haze(img, spec.params["t"], spec.params["airlight"])
    raise ValueError(f"apply_spec cannot handle kind {spec.kind!r}")


# --- procedural clean sources ---

def _bilinear_resize(grid, size):
    gh, gw = grid.shape[:2]
    ys = np.linspace(0.0, gh - 1.0, size)
    xs = np.linspace(0.0, gw - 1.0, size)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = grid[np.ix_(y0, x0)] * (1 - wx) + grid[np.ix_(y0, x1)] * wx
    bot = grid[np.ix_(y1, x0)] * (1 - wx) + grid[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def generate_clean(size, rng):
    """Procedural clean image: gradient + random shapes + smooth texture."""
    c0 = rng.uniform(0.1, 0.9, size=3)
    c1 = rng.uniform(0.1, 0.9, size=3)
    phi = rng.uniform(0.0, math.pi)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    proj = xx * math.cos(phi) + yy * math.sin(phi)
    proj = (proj - proj.min()) / max(proj.max() - proj.min(), 1e-9)
    img = c0 + proj[:, :, None] * (c1 - c0)

    for _ in range(int(rng.integers(1, 4))):
        color = rng.uniform(0.0, 1.0, size=3)
        cy, cx = rng.uniform(0.0, size, size=2)
        if rng.random() < 0.5:
            r = rng.uniform(size * 0.08, size * 0.3)
            inside = (yy * (size - 1) - cy) ** 2 + (xx * (size - 1) - cx) ** 2 <= r * r
        else:
            hh = rng.uniform(size * 0.1, size * 0.45)
            ww = rng.uniform(size * 0.1, size * 0.45)
            inside = (np.abs(yy * (size - 1) - cy) <= hh) & (np.abs(xx * (size - 1) - cx) <= ww)
        img = np.where(inside[:, :, None], color, img)

    grid = rng.uniform(-1.0, 1.0, size=(int(rng.integers(4, 9)), int(rng.integers(4, 9)), 3))
    amp = rng.uniform(0.08, 0.2)
    img = img + amp * _bilinear_resize(grid, size)
    return np.clip(img, 0.0, 1.0)


# --- dataset synthesis ---

def draw_spec(kind, rng):
    """Draw random spec parameters for one sample of the given kind."""
    seed = int(rng.integers(0, 2 ** 63 - 1, dtype=np.int64))
    if kind == "noise":
        params = {"sigma": float(rng.choice(NOISE_SIGMAS))}
    elif kind == "rain":
        params = {
            "density": float(rng.uniform(*RAIN_DENSITY)),
            "angle": float(rng.uniform(*RAIN_ANGLE)),
            "length": int(rng.integers(RAIN_LENGTH[0], RAIN_LENGTH[1] + 1)),
            "intensity": float(rng.uniform(*RAIN_INTENSITY)),
        }
    elif kind == "haze":
        params = {
            "t": float(rng.uniform(*HAZE_T)),
            "airlight": float(rng.uniform(*HAZE_A)),
        }
    elif kind == "downsample":
        params = {"scale": DOWNSAMPLE_SCALE}
    else:
        raise ValueError(f"unknown degradation kind {kind!r}")
    return DegradationSpec(kind, params, seed)


def _quantized(img):
    return images.from_uint8(images.to_uint8(img))


def make_dataset(config, out_dir):
    """Synthesize paired samples and write them plus a manifest.

    config keys: n, size, mixture (kind -> weight), seed, format
    ("png"/"ppm", default png). Returns the manifest (list of sample
    dicts). The same config always yields byte-identical output.
    """
    n = int(config["n"])
    size = int(config["size"])
    mixture = config["mixture"]
    seed = int(config["seed"])
    fmt = config.get("format", "png")
    kinds = sorted(mixture)
    for k in kinds:
        if k not in KINDS:
            raise ValueError(f"unknown degradation kind in mixture: {k!r}")
    weights = np.array([float(mixture[k]) for k in kinds])
    if weights.sum() <= 0 or (weights < 0).any():
        raise ValueError("mixture weights must be nonnegative with a positive sum")
    probs = weights / weights.sum()

    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)

    master = np.random.default_rng(np.random.SeedSequence([seed, 0xD5]))
    manifest = []
    for i in range(n):
        kind = kinds[int(master.choice(len(kinds), p=probs))]
        spec = draw_spec(kind, master)
        clean_rng = np.random.default_rng(np.random.SeedSequence([seed, i, 0xC1]))
        clean_path = os.path.join("images", f"{i:04d}_clean.{fmt}")
        degraded_path = os.path.join("images", f"{i:04d}_degraded.{fmt}")
        entry = {
            "id": i,
            "kind": kind,
            "params": spec.params,
            "seed": spec.seed,
            "clean_path": clean_path,
            "degraded_path": degraded_path,
        }
        if kind == "downsample":
            source = _quantized(generate_clean(size * DOWNSAMPLE_SCALE, clean_rng))
            source_path = os.path.join("images", f"{i:04d}_source.{fmt}")
            entry["params"] = dict(spec.params, source_path=source_path)
            images.save_image(os.path.join(out_dir, source_path), source)
            clean = downsample(source, DOWNSAMPLE_SCALE)
            degraded = decimate(source, DOWNSAMPLE_SCALE)
        else:
            clean = _quantized(generate_clean(size, clean_rng))
            degraded = apply_spec(clean, spec)
        images.save_image(os.path.join(out_dir, clean_path), clean)
        images.save_image(os.path.join(out_dir, degraded_path), degraded)
        manifest.append(entry)

    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(config, f, indent=1, sort_keys=True)
        f.write("\n")
    return manifest


def load_manifest(dataset_dir):
    path = os.path.join(dataset_dir, "manifest.json")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_pair(dataset_dir, entry):
    """Load one (degraded, clean) float pair from a manifest entry."""
    x = images.load_image(os.path.join(dataset_dir, entry["degraded_path"]))
    y = images.load_image(os.path.join(dataset_dir, entry["clean_path"]))
    return x, y


def regenerate_degraded(dataset_dir, entry):
    """Recompute the degraded image of one sample from stored inputs.

    Used to verify that a manifest fully determines the dataset.
    """
    params = dict(entry["params"])
    kind = entry["kind"]
    if kind == "downsample":
        source = images.load_image(os.path.join(dataset_dir, params["source_path"]))
        return decimate(source, params["scale"])
    clean = images.load_image(os.path.join(dataset_dir, entry["clean_path"]))
    spec = DegradationSpec(kind, params, entry["seed"])
    return apply_spec(clean, spec)
