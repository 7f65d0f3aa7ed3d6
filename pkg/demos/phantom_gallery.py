"""Render a gallery of synthetic phantoms.

The phantom generator draws a band-limited tissue texture (or a smooth
gradient) in raw-count units and stamps in small bright discs standing in
for microcalcifications. This script sweeps the texture correlation length,
shows both background kinds, and renders a calcification "ladder" of every
radius from 0.5 to 3 px so you can eyeball what the denoiser must preserve.

Usage: python3 demos/phantom_gallery.py [--out demo_out/gallery]
"""

import argparse
from pathlib import Path

from xraydenoise import save_image
from xraydenoise.phantom import Calcification, PhantomSpec, generate_phantom


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo_out/gallery", help="output directory")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    # Texture sweep: small scales look like speckle, large ones like
    # smooth parenchyma. All on the same seed so only the scale changes.
    for scale in (1.5, 2.5, 6.0):
        spec = PhantomSpec(width=256, height=256, tissue_scale=scale, seed=11)
        img = generate_phantom(spec)
        path = out / f"texture_scale_{scale:g}.png"
        save_image(img, path)
        print(f"wrote {path}  (range {img.pixels.min():.0f}.."
              f"{img.pixels.max():.0f} counts)")

    # The other background option.
    grad = generate_phantom(PhantomSpec(width=256, height=256,
                                        background="smooth_gradient", seed=11))
    save_image(grad, out / "smooth_gradient.png")
    print(f"wrote {out / 'smooth_gradient.png'}")

    # Calcification ladder: radii 0.5..3.0 px at fixed contrast, on a quiet
    # background so each disc is easy to inspect.
    ladder = [Calcification((128.0, 32.0 + 38.0 * i), 0.5 * (i + 1), 800.0)
              for i in range(6)]
    spec = PhantomSpec(width=256, height=256, tissue_scale=6.0,
                       intensity_range=(800.0, 1600.0),
                       calcifications=ladder, seed=12)
    img = generate_phantom(spec)
    save_image(img, out / "calcification_ladder.png")
    print(f"wrote {out / 'calcification_ladder.png'}  "
          f"({len(ladder)} discs, radii 0.5..3.0 px)")


if __name__ == "__main__":
    main()
