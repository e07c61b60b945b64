"""Procedural dataset synthesis and on-disk layout.

Objects are procedural phantoms (rectangles, disks, gradients, glyph-like
bar patterns) in [0,1]; measurements come from the coded-mask forward model.
A dataset directory holds manifest.json plus train/val/test subdirectories
of paired PNM files; regeneration from the manifest is bit-identical.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from codedlens import optics, pnm
from codedlens.errors import ConfigError

FORMAT_VERSION = 1


@dataclass
class DatasetManifest:
    root: str
    extents: tuple = (32, 32)
    counts: dict = field(default_factory=lambda: {"train": 160, "val": 20, "test": 20})
    mask_pattern: str = "random"
    mask_density: float = 0.5
    mask_seed: int = 1
    noise_kind: str = "gaussian"
    noise_sigma: float = 0.02
    seed: int = 0
    version: int = FORMAT_VERSION

    def to_dict(self):
        return {"root": self.root, "extents": list(self.extents),
                "counts": dict(self.counts), "mask_pattern": self.mask_pattern,
                "mask_density": self.mask_density, "mask_seed": self.mask_seed,
                "noise_kind": self.noise_kind, "noise_sigma": self.noise_sigma,
                "seed": self.seed, "version": self.version}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["extents"] = tuple(d["extents"])
        return cls(**d)

    def mask(self):
        return optics.generate_mask(self.mask_pattern, self.extents,
                                    seed=self.mask_seed, density=self.mask_density)

    def psf(self):
        return optics.mask_to_psf(self.mask())


# ---------------------------------------------------------------------------
# phantoms


def _rectangles(rng, h, w):
    img = np.zeros((h, w))
    for _ in range(int(rng.integers(2, 5))):
        rh = int(rng.integers(h // 8, h // 2))
        rw = int(rng.integers(w // 8, w // 2))
        i = int(rng.integers(0, h - rh))
        j = int(rng.integers(0, w - rw))
        img[i:i + rh, j:j + rw] = rng.uniform(0.3, 1.0)
    return img


def _disks(rng, h, w):
    img = np.zeros((h, w))
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(int(rng.integers(1, 4))):
        r = float(rng.uniform(min(h, w) / 8, min(h, w) / 3))
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = rng.uniform(0.3, 1.0)
    return img


def _gradient(rng, h, w):
    theta = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:h, 0:w]
    ramp = np.cos(theta) * xx / w + np.sin(theta) * yy / h
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
    return ramp * rng.uniform(0.5, 1.0)


def _glyph(rng, h, w):
    """Binary bar/segment pattern, a stand-in for text-like content."""
    img = np.zeros((h, w))
    for _ in range(int(rng.integers(3, 7))):
        if rng.integers(2):
            i = int(rng.integers(0, h - 2))
            j = int(rng.integers(0, w // 2))
            length = int(rng.integers(w // 4, w // 2))
            img[i:i + 2, j:j + length] = 1.0
        else:
            i = int(rng.integers(0, h // 2))
            j = int(rng.integers(0, w - 2))
            length = int(rng.integers(h // 4, h // 2))
            img[i:i + length, j:j + 2] = 1.0
    return img


_FAMILIES = (_rectangles, _disks, _gradient, _glyph)


def make_phantom(rng, extents):
    h, w = extents
    fam = _FAMILIES[int(rng.integers(len(_FAMILIES)))]
    img = fam(rng, h, w)
    return np.clip(img, 0.0, 1.0)


def piecewise_constant_phantom(extents, seed=0):
    """Blocky phantom for TV-regularization experiments."""
    rng = np.random.default_rng(seed)
    h, w = extents
    img = _rectangles(rng, h, w)
    img[h // 4:h // 2, w // 4:w // 2] = 0.8
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------------------
# synthesis and loading


def generate_pairs(manifest, split):
    """Deterministic (measurement, object) pairs for one split."""
    count = int(manifest.counts.get(split, 0))
    psf = manifest.psf()
    split_offset = {"train": 0, "val": 1, "test": 2}[split]
    pairs = []
    for i in range(count):
        rng = np.random.default_rng((manifest.seed, split_offset, i))
        obj = make_phantom(rng, manifest.extents)
        noise = optics.NoiseModel(kind=manifest.noise_kind, sigma=manifest.noise_sigma,
                                  seed=int(rng.integers(2 ** 32)))
        meas = optics.simulate_measurement(obj, psf, noise)
        pairs.append((meas, obj))
    return pairs


def synthesize_dataset(manifest):
    """Write the dataset (PNM pairs + manifest + mask) under manifest.root."""
    root = manifest.root
    os.makedirs(root, exist_ok=True)
    for split in ("train", "val", "test"):
        split_dir = os.path.join(root, split)
        os.makedirs(split_dir, exist_ok=True)
        for i, (meas, obj) in enumerate(generate_pairs(manifest, split)):
            pnm.write_pnm(os.path.join(split_dir, f"{i:04d}_meas.pgm"),
                          np.clip(meas, 0.0, 1.0))
            pnm.write_pnm(os.path.join(split_dir, f"{i:04d}_obj.pgm"), obj)
    pnm.write_pnm(os.path.join(root, "mask.pgm"), manifest.mask().plane)
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=2)
    return root


def load_manifest(root):
    path = os.path.join(root, "manifest.json")
    if not os.path.exists(path):
        raise ConfigError(f"no manifest.json under {root}")
    with open(path) as fh:
        d = json.load(fh)
    if d.get("version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported dataset version {d.get('version')}")
    d["root"] = root
    return DatasetManifest.from_dict(d)


def load_split(root, split):
    """Load stored (measurement, object) pairs from a dataset directory."""
    split_dir = os.path.join(root, split)
    if not os.path.isdir(split_dir):
        raise ConfigError(f"split directory {split_dir} does not exist")
    pairs = []
    names = sorted(f for f in os.listdir(split_dir) if f.endswith("_meas.pgm"))
    for name in names:
        meas = pnm.read_pnm(os.path.join(split_dir, name))
        obj = pnm.read_pnm(os.path.join(split_dir, name.replace("_meas", "_obj")))
        pairs.append((meas, obj))
    return pairs


def load_paired_directory(root, meas_suffix="_meas.pgm", obj_suffix="_obj.pgm"):
    """Loader for user-supplied paired data laid out like a split directory."""
    pairs = []
    for name in sorted(os.listdir(root)):
        if not name.endswith(meas_suffix):
            continue
        meas = pnm.read_pnm(os.path.join(root, name))
        obj = pnm.read_pnm(os.path.join(root, name[:-len(meas_suffix)] + obj_suffix))
        pairs.append((meas, obj))
    if not pairs:
        raise ConfigError(f"no paired files found under {root}")
    return pairs
