"""Render five small geometric exemplars (circle, square, triangle, cross, ring).

They are cheap stand-ins for a real exemplar set and back the `shapes`
preset used by tests and the examples.

    python3 tools/render_shapes.py [--out assets/shapes]
"""

import argparse
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

NAMES = ["circle", "square", "triangle", "cross", "ring"]


def render(name: str) -> Image.Image:
    big = Image.new("L", (112, 112), 0)
    d = ImageDraw.Draw(big)
    if name == "circle":
        d.ellipse((20, 20, 92, 92), fill=255)
    elif name == "square":
        d.rectangle((24, 24, 88, 88), fill=255)
    elif name == "triangle":
        d.polygon([(56, 16), (96, 92), (16, 92)], fill=255)
    elif name == "cross":
        d.rectangle((46, 16, 66, 96), fill=255)
        d.rectangle((16, 46, 96, 66), fill=255)
    else:
        d.ellipse((18, 18, 94, 94), fill=255)
        d.ellipse((38, 38, 74, 74), fill=0)
    alpha = np.asarray(big.resize((28, 28), Image.LANCZOS), dtype=np.uint8)
    white = np.full_like(alpha, 255)
    return Image.fromarray(np.stack([white, alpha], axis=-1), mode="LA")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "assets" / "shapes"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(NAMES):
        render(name).save(out / f"{i}.png")
    (out / "labels.tsv").write_text("".join(f"{i}\t{n}\n" for i, n in enumerate(NAMES)))
    print(f"wrote {len(NAMES)} shapes to {out}")


if __name__ == "__main__":
    main()
