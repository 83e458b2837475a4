"""Image ingestion: files to float RGB in [0, 1], plus a small desk-scale
crop set built from scikit-image's bundled photographs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = {".png", ".bmp", ".tif", ".tiff", ".ppm", ".jpg", ".jpeg"}


def load_image(path) -> np.ndarray:
    """(H, W, 3) float64 array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(path, img: np.ndarray) -> None:
    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def center_crop(img: np.ndarray, multiple: int) -> np.ndarray:
    h, w = img.shape[:2]
    H, W = h - h % multiple, w - w % multiple
    if H == 0 or W == 0:
        raise ValueError(f"image {h}x{w} is smaller than {multiple} pixels")
    top, left = (h - H) // 2, (w - W) // 2
    return img[top : top + H, left : left + W]


def load_directory(path, multiple: int = 16, size: int | None = None) -> list:
    """Load every image in a directory (sorted by name). Images are
    center-cropped to ``size`` when given, else to a multiple of
    ``multiple``."""
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} not found")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no images in {root}")
    out = []
    for f in files:
        img = load_image(f)
        if size is not None:
            h, w = img.shape[:2]
            if h < size or w < size:
                raise ValueError(f"{f.name} is smaller than {size}px")
            top, left = (h - size) // 2, (w - size) // 2
            img = img[top : top + size, left : left + size]
        else:
            img = center_crop(img, multiple)
        out.append(img)
    return out


def to_batch(images) -> np.ndarray:
    """List of (H, W, 3) images -> (N, 3, H, W) float32."""
    return np.stack([np.asarray(i, dtype=np.float32).transpose(2, 0, 1) for i in images])


def desk_crops(num: int = 64, size: int = 64, seed: int = 0) -> np.ndarray:
    """Random ``size`` x ``size`` RGB crops from skimage sample photographs,
    as an (N, H, W, 3) float array."""
    from skimage import data

    sources = [data.astronaut(), data.coffee(), data.chelsea(), data.rocket(),
               data.immunohistochemistry(), data.hubble_deep_field()]
    rng = np.random.default_rng(seed)
    crops = []
    for i in range(num):
        src = sources[i % len(sources)]
        h, w = src.shape[:2]
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
        crops.append(src[top : top + size, left : left + size, :3].astype(np.float64) / 255.0)
    return np.stack(crops)


def write_desk_dataset(path, num: int = 64, size: int = 64, seed: int = 0) -> list:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for i, img in enumerate(desk_crops(num, size, seed)):
        p = root / f"crop_{i:03d}.png"
        save_image(p, img)
        names.append(p)
    return names
