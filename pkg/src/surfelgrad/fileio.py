"""File formats: PFM float maps, 8-bit PNG previews, point-set text files.

PFM stores float32 scanlines bottom-to-top; we always write little-endian
(scale header -1.0). Grayscale maps use the 'Pf' tag, 3-channel maps 'PF'.
PNG previews are 8-bit sRGB; raw linear data should go to PFM.
"""

import numpy as np
from PIL import Image as PILImage

from .errors import InvalidParam


def write_pfm(path, data):
    """Write a (H, W) or (H, W, 3) float array as little-endian PFM."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        tag = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        tag = b"PF"
    else:
        raise InvalidParam(f"PFM expects (H,W) or (H,W,3), got {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(tag + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")  # negative scale = little endian
        f.write(np.flipud(arr).astype("<f4").tobytes())


def read_pfm(path):
    """Read a PFM file into a float32 array of shape (H, W) or (H, W, 3)."""
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag == b"PF":
            channels = 3
        elif tag == b"Pf":
            channels = 1
        else:
            raise InvalidParam(f"{path}: not a PFM file (tag {tag!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise InvalidParam(f"{path}: malformed PFM dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        endian = "<" if scale < 0 else ">"
        raw = f.read(w * h * channels * 4)
        if len(raw) != w * h * channels * 4:
            raise InvalidParam(f"{path}: truncated PFM payload")
    arr = np.frombuffer(raw, dtype=endian + "f4")
    arr = arr.reshape(h, w, channels) if channels == 3 else arr.reshape(h, w)
    return np.flipud(arr).copy()


def linear_to_srgb(x):
    """sRGB OETF applied to linear values already clamped to [0, 1]."""
    a = 0.055
    return np.where(x <= 0.0031308, 12.92 * x, (1 + a) * np.power(x, 1 / 2.4) - a)


def write_image_png(path, image):
    """Clamp a linear-radiance (H, W, 3) image to [0,1], sRGB-encode, save."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    srgb = linear_to_srgb(img)
    u8 = np.round(srgb * 255.0).astype(np.uint8)
    PILImage.fromarray(u8, mode="RGB").save(path)


def write_normals_png(path, normals):
    """Save a unit-normal grid as 8-bit PNG via the n -> (n+1)/2 mapping."""
    n = np.asarray(normals, dtype=np.float64)
    u8 = np.round(np.clip((n + 1.0) * 0.5, 0.0, 1.0) * 255.0).astype(np.uint8)
    PILImage.fromarray(u8, mode="RGB").save(path)


def read_image_png(path):
    """Load an 8-bit PNG back to linear radiance (inverse sRGB)."""
    u8 = np.asarray(PILImage.open(path).convert("RGB"), dtype=np.float64) / 255.0
    a = 0.055
    return np.where(u8 <= 0.04045, u8 / 12.92, ((u8 + a) / (1 + a)) ** 2.4)


def write_pointset_txt(path, points):
    """One 'x y z' triple per line, full float64 precision."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidParam(f"point set must be (N, 3), got {pts.shape}")
    with open(path, "w") as f:
        for p in pts:
            f.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")


def read_pointset_txt(path):
    pts = []
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InvalidParam(f"{path}:{line_no}: expected 3 values")
            pts.append([float(v) for v in parts])
    return np.asarray(pts, dtype=np.float64)
