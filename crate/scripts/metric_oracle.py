"""Reference PSNR/SSIM values for the acceptance metric check.

Pairs are regenerated bit-for-bit on the Rust side from the same SplitMix64
stream, so only the expected values are stored.
"""
import json
import sys

import numpy as np
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

MASK = (1 << 64) - 1
SIZE = 32
PAIRS = 50


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def unit(self):
        return (self.next_u64() >> 40) / float(1 << 24)


def pair(i):
    rng = SplitMix64(1000 + i)
    amp = 0.05 + 0.9 * i / (PAIRS - 1)
    a = np.array([rng.unit() for _ in range(SIZE * SIZE)], dtype=np.float32)
    b = np.empty_like(a)
    for j in range(a.size):
        v = np.float32(float(a[j]) + (rng.unit() - 0.5) * amp)
        b[j] = min(max(v, np.float32(0.0)), np.float32(1.0))
    return a.reshape(SIZE, SIZE), b.reshape(SIZE, SIZE)


def main():
    out = []
    for i in range(PAIRS):
        a, b = pair(i)
        a64, b64 = a.astype(np.float64), b.astype(np.float64)
        out.append({
            "psnr_db": peak_signal_noise_ratio(a64, b64, data_range=1.0),
            "ssim": structural_similarity(a64, b64, data_range=1.0, gaussian_weights=True,
                                          sigma=1.5, use_sample_covariance=False),
        })
    json.dump(out, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
