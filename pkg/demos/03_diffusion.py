# Forward corruption of a label sequence and DDIM recovery with a perfect denoiser.
import numpy as np

from segdiff import diffusion

sched = diffusion.build_schedule(1000, "cosine")
print("abar at t=1, 500, 1000:", [round(sched.abar(t), 4) for t in (1, 500, 1000)])

labels = np.zeros((20, 2))
labels[5:12, 0] = 1
labels[9:, 1] = 1
y0 = diffusion.labels_to_signal(labels)

rng = np.random.default_rng(0)
for t in (50, 500, 950):
    y_t = diffusion.forward_noise(y0, t, rng.standard_normal(y0.shape), sched)
    print(f"t={t}: correlation with clean signal {np.corrcoef(y_t.ravel(), y0.ravel())[0, 1]:.3f}")

steps = diffusion.sampling_timesteps(1000, 25)
print("sampling steps:", steps[:4], "...", steps[-3:])
traj = diffusion.sample(lambda y, t, c: y0, None, sched, 25, seed=1, shape=y0.shape)
print("max error after 25 steps:", np.abs(traj[-1] - y0).max())

# a denoiser that only knows the sign of its input still lands on a clean binary sequence
traj = diffusion.sample(lambda y, t, c: np.sign(y), None, sched, 25, seed=1, shape=y0.shape)
print("sign-denoiser output values:", np.unique(diffusion.signal_to_probs(traj[-1])))
