"""PNG reading/writing for images (8-bit RGB), label maps (8-bit grey) and instance maps (16-bit grey)."""
import os
from pathlib import Path
from typing import Tuple

import numpy as np
import png


def png_size(path: Path) -> Tuple[int, int]:
    """(height, width) from the PNG header without decoding pixel data."""
    with open(path, "rb") as handle:
        reader = png.Reader(file=handle)
        reader.preamble()
        return reader.height, reader.width


def read_png(path: Path) -> np.ndarray:
    with open(path, "rb") as handle:
        width, height, rows, info = png.Reader(file=handle).asDirect()
        dtype = np.uint16 if info["bitdepth"] > 8 else np.uint8
        array = np.vstack([np.asarray(row, dtype=dtype) for row in rows])
    planes = info["planes"]
    if planes == 1:
        return array.reshape(height, width)
    return array.reshape(height, width, planes)


def write_png(path: Path, array: np.ndarray) -> None:
    """Write atomically: the file appears under ``path`` only once fully written."""
    array = np.asarray(array)
    if array.ndim == 3 and array.shape[2] == 3:
        height, width = array.shape[:2]
        writer = png.Writer(width, height, greyscale=False, bitdepth=8)
        rows = array.astype(np.uint8).reshape(height, width * 3)
    elif array.ndim == 2:
        height, width = array.shape
        bitdepth = 16 if array.dtype == np.uint16 else 8
        writer = png.Writer(width, height, greyscale=True, bitdepth=bitdepth)
        rows = array.astype(np.uint16 if bitdepth == 16 else np.uint8)
    else:
        raise ValueError(f"cannot write array of shape {array.shape} as PNG")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".part")
    with open(tmp_path, "wb") as handle:
        writer.write(handle, (row.tolist() for row in rows))
    os.replace(tmp_path, path)
