"""Regenerate tests/data/*.png: 960x540 RGB crops of scikit-image sample photos."""

from pathlib import Path

import numpy as np
from PIL import Image
from skimage import data

OUT = Path(__file__).resolve().parent.parent / "tests" / "data"
SOURCES = {"astronaut": data.astronaut, "coffee": data.coffee, "chelsea": data.chelsea}


def crop_16_9(a):
    h, w = a.shape[:2]
    if w * 9 > h * 16:
        nw = h * 16 // 9
        x0 = (w - nw) // 2
        return a[:, x0:x0 + nw]
    nh = w * 9 // 16
    y0 = (h - nh) // 2
    return a[y0:y0 + nh]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, loader in SOURCES.items():
        im = Image.fromarray(np.ascontiguousarray(crop_16_9(loader())))
        im.resize((960, 540), Image.LANCZOS).save(OUT / f"{name}.png", optimize=True)


if __name__ == "__main__":
    main()
