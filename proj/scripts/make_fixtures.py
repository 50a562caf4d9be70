"""Regenerates the synthetic test images in data/.

Each image is rendered at 128x128 and box-averaged down to 64x64 and 32x32,
then quantized to 8-bit binary PGM.
"""
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "data"
N = 128


def grid():
    y, x = np.mgrid[0:N, 0:N] / N
    return y, x


def shapes():
    y, x = grid()
    img = 0.25 + 0.35 * x
    img = np.where((x - 0.32) ** 2 + (y - 0.35) ** 2 < 0.18 ** 2, 0.85 - 0.3 * y, img)
    img = np.where((abs(x - 0.7) < 0.17) & (abs(y - 0.68) < 0.12), 0.12 + 0.2 * x, img)
    tri = (y > 0.55) & (x > 0.08) & (x < 0.45) & (y - 0.55 < 0.9 * (x - 0.08)) & (y - 0.55 < 0.9 * (0.45 - x))
    return np.where(tri, 0.6, img)


def waves():
    y, x = grid()
    r = np.hypot(x - 0.45, y - 0.55)
    return 0.5 + 0.22 * np.cos(14 * r) * np.exp(-2.5 * r) + 0.18 * np.sin(5 * x + 3 * y)


def blobs(seed=7):
    rng = np.random.default_rng(seed)
    f = np.fft.fft2(rng.standard_normal((N, N)))
    ky, kx = np.meshgrid(np.fft.fftfreq(N), np.fft.fftfreq(N), indexing="ij")
    field = np.real(np.fft.ifft2(f * np.exp(-((kx ** 2 + ky ** 2) * (N / 9.0) ** 2))))
    field = (field - field.mean()) / field.std()
    return 0.5 + 0.16 * field + 0.12 * np.tanh(4 * field)


def stripes():
    y, x = grid()
    band = (np.floor((x + 0.4 * y) * 6) % 2) * 0.35
    shade = 0.25 + 0.3 * np.exp(-((x - 0.6) ** 2 + (y - 0.3) ** 2) / 0.08)
    return band + shade


def downsample(img, factor):
    n = img.shape[0] // factor
    return img.reshape(n, factor, n, factor).mean(axis=(1, 3))


def write_pgm(path, img):
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (q.shape[1], q.shape[0]))
        f.write(q.tobytes())


def main():
    OUT.mkdir(exist_ok=True)
    for name, fn in [("shapes", shapes), ("waves", waves), ("blobs", blobs), ("stripes", stripes)]:
        img = np.clip(fn(), 0.0, 1.0)
        for size in (64, 32):
            write_pgm(OUT / f"{name}_{size}.pgm", downsample(img, N // size))


if __name__ == "__main__":
    main()
