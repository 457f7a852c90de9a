# Temporal DFT used as a decoder condition: a periodic feature shows up as one spectral peak.
import numpy as np

from segdiff import fourier

L = 64
t = np.arange(L)
x = np.stack([np.cos(2 * np.pi * 4 * t / L), (t % 16 < 8).astype(float)], axis=1)

spec = fourier.to_complex(fourier.dft_time(x))
print("strongest bins, cosine channel:", np.argsort(-np.abs(spec[:, 0]))[:2])  # 4 and 60
print("square wave first harmonics:", np.argsort(-np.abs(spec[1:L // 2, 1]))[:3] + 1)

back = fourier.idft_time(fourier.dft_time(x))
print("round trip error %.1e" % np.abs(back - x).max())
print("radix-2 vs direct %.1e" % np.abs(fourier.dft_time_fast(x) - fourier.dft_time(x)).max())
print("energy time %.6f / freq %.6f" % ((x ** 2).sum(), (np.abs(spec) ** 2).sum() / L))
