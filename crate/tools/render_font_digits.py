"""Render the ten digit exemplars used for MNIST training.

Each digit is drawn white on a transparent 28x28 canvas: the glyph is scaled
to fit a 20x20 box and then shifted so its center of mass sits at the
center, the same normalization the MNIST images went through.

    python3 tools/render_font_digits.py [--font PATH] [--out assets/font]
"""

import argparse
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

DEFAULT_FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSans-Bold.ttf"


def render(digit: str, font: ImageFont.FreeTypeFont) -> Image.Image:
    big = Image.new("L", (400, 400), 0)
    ImageDraw.Draw(big).text((100, 40), digit, fill=255, font=font)
    glyph = big.crop(big.getbbox())
    w, h = glyph.size
    scale = 20.0 / max(w, h)
    glyph = glyph.resize((max(1, round(w * scale)), max(1, round(h * scale))), Image.LANCZOS)

    canvas = np.zeros((28, 28), dtype=np.float64)
    gw, gh = glyph.size
    x0, y0 = (28 - gw) // 2, (28 - gh) // 2
    canvas[y0:y0 + gh, x0:x0 + gw] = np.asarray(glyph, dtype=np.float64)
    ys, xs = np.mgrid[0:28, 0:28]
    mass = canvas.sum()
    dy = round(13.5 - (ys * canvas).sum() / mass)
    dx = round(13.5 - (xs * canvas).sum() / mass)
    canvas = np.roll(np.roll(canvas, dy, axis=0), dx, axis=1)

    alpha = np.clip(canvas, 0, 255).astype(np.uint8)
    white = np.full_like(alpha, 255)
    return Image.fromarray(np.stack([white, alpha], axis=-1), mode="LA")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--font", default=DEFAULT_FONT)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "assets" / "font"))
    args = ap.parse_args()
    font = ImageFont.truetype(args.font, 240)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for d in range(10):
        render(str(d), font).save(out / f"{d}.png")
    (out / "labels.tsv").write_text("".join(f"{d}\t{d}\n" for d in range(10)))
    print(f"wrote 10 digits to {out}")


if __name__ == "__main__":
    main()
