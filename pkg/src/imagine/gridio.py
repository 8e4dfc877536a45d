"""PGM/PPM emission for sample grids, interpolation strips, and latent maps."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def write_pgm(path, image: np.ndarray) -> None:
    """Binary P5 with max value 255."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise DataError(f"PGM needs a 2-d image, got shape {image.shape}")
    with open(path, "wb") as f:
        f.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        f.write(np.clip(image, 0, 255).astype(np.uint8).tobytes())


def write_ppm(path, image: np.ndarray) -> None:
    """Binary P6 with max value 255; image is (H, W, 3)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DataError(f"PPM needs an (H, W, 3) image, got shape {image.shape}")
    with open(path, "wb") as f:
        f.write(f"P6\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        f.write(np.clip(image, 0, 255).astype(np.uint8).tobytes())


def to_u8(images: np.ndarray) -> np.ndarray:
    """Map float images in [0, 1] (or binary uint8) to uint8 gray levels."""
    images = np.asarray(images)
    if images.dtype == np.uint8 and images.max(initial=0) <= 1:
        return images * np.uint8(255)
    return np.clip(np.asarray(images, dtype=np.float64) * 255.0, 0, 255).astype(np.uint8)


def tile_images(images: np.ndarray, cols: int | None = None, pad: int = 1, pad_value: int = 32) -> np.ndarray:
    """Tile (n, H, W) images into one uint8 grid with thin separators."""
    images = to_u8(images)
    n, h, w = images.shape
    cols = cols or int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    grid = np.full((rows * (h + pad) + pad, cols * (w + pad) + pad), pad_value, dtype=np.uint8)
    for i in range(n):
        r, c = divmod(i, cols)
        top, left = pad + r * (h + pad), pad + c * (w + pad)
        grid[top : top + h, left : left + w] = images[i]
    return grid


def sample_sheet(path_prefix: str, images: np.ndarray, wrong: np.ndarray | None = None, cols: int | None = None) -> list[str]:
    """Write <prefix>.pgm; when a per-image error mask is given, also write a
    color sidecar <prefix>_marked.ppm framing wrong samples with a 1-pixel
    max-intensity red border."""
    grid = tile_images(images, cols=cols)
    paths = [f"{path_prefix}.pgm"]
    write_pgm(paths[0], grid)
    if wrong is not None:
        images_u8 = to_u8(images)
        n, h, w = images_u8.shape
        cols = cols or int(np.ceil(np.sqrt(n)))
        pad = 1
        rows = int(np.ceil(n / cols))
        color = np.full((rows * (h + pad) + pad, cols * (w + pad) + pad, 3), 32, dtype=np.uint8)
        for i in range(n):
            r, c = divmod(i, cols)
            top, left = pad + r * (h + pad), pad + c * (w + pad)
            tile = np.stack([images_u8[i]] * 3, axis=2)
            if wrong[i]:
                tile[0, :] = (255, 0, 0)
                tile[-1, :] = (255, 0, 0)
                tile[:, 0] = (255, 0, 0)
                tile[:, -1] = (255, 0, 0)
            color[top : top + h, left : left + w] = tile
        marked = f"{path_prefix}_marked.ppm"
        write_ppm(marked, color)
        paths.append(marked)
    return paths
