"""
Raster basics: compositing, alpha areas, resizing, PSNR
========================================================

Everything downstream rests on four small operations over 8-bit images.
Run from the repository root::

    python3 demos/01_compositing_and_psnr.py
"""

import numpy as np

from deda.imagecore import (Placement, alpha_area, composite_over, psnr,
                            resize_bilinear)

# a flat green background and a semi-transparent red square sprite
base = np.zeros((64, 64, 3), dtype=np.uint8)
base[:, :] = (40, 120, 40)

sprite = np.zeros((24, 24, 4), dtype=np.uint8)
sprite[:, :, 0] = 210
sprite[:, :, 3] = 160          # ~63% opacity

# Source-over blending: out = (a*s + (255-a)*b) / 255, rounded half-up.
out, visible = composite_over(base, sprite, Placement(scale=1.0, flip_h=False,
                                                      offset_x=10, offset_y=20))
print(f"composited sprite: visible alpha-weighted area = {visible:.2f} px")
print(f"total sprite area = {alpha_area(sprite):.2f} px")

# Placements may hang off the canvas; only in-bounds alpha counts.
out2, visible2 = composite_over(base, sprite, Placement(1.0, False, -12, 52))
print(f"half-off-canvas placement: visible area drops to {visible2:.2f} px")

# Bilinear resize uses align-corners sampling; a 2-pixel ramp resized to 3
# lands exactly on the midpoint.
ramp = np.array([[0, 255]], dtype=np.uint8)
print("2x1 ramp resized to 3x1:", resize_bilinear(ramp, 3, 1).tolist())

# PSNR is the diversity proxy: lower means the two images differ more.
noisy = out.copy()
noisy[::2, ::2] ^= 8
print(f"psnr(identical)  = {psnr(out, out):.1f} dB (sentinel cap)")
print(f"psnr(small edit) = {psnr(out, noisy):.1f} dB")
print(f"psnr(vs base)    = {psnr(out, base):.1f} dB")
