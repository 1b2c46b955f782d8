"""A tour of the quantized measurement channel.

The solver never sees raw measurements; it sees bin indices from a uniform
quantizer plus a Gaussian-noise model, and everything it infers about the
unquantized value flows through the channel posterior.  This script walks
through the three ingredients in isolation:

  1. the quantizer itself (thresholds, bins, the two unbounded outer bins),
  2. posterior moments of the pre-quantization value given one bin index,
  3. the extrinsic division that turns a posterior back into a message.

Run it from anywhere; figures land in demos/out/.
"""

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bgvamp import (Quantizer, QuantizedGaussianChannel, channel_posterior,
                    extrinsic_divide)

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")
os.makedirs(OUT, exist_ok=True)

# ---------------------------------------------------------------------------
# 1. the quantizer: 2^bits uniform bins over a chosen range
# ---------------------------------------------------------------------------
print("=== 1. quantizer bookkeeping ===")
quantizer = Quantizer(bits=3, z_min=-3.0, z_max=3.0)
print(f"3-bit quantizer on [-3, 3]: step {quantizer.delta:.3f}, "
      f"thresholds {np.round(quantizer.thresholds, 3)}")

values = np.array([-10.0, -2.9, -0.1, 0.1, 2.9, 10.0])
indices = quantizer.quantize(values)
lo, hi = quantizer.bounds(indices)
for v, idx, a, b in zip(values, indices, lo, hi):
    print(f"  z = {v:6.1f}  ->  bin {idx}  =  [{a:6.2f}, {b:6.2f})")
print("values beyond the range fall into the unbounded outer bins;")
print("the solver therefore knows 'large' without knowing how large.\n")

# ---------------------------------------------------------------------------
# 2. the channel posterior: what one bin index says about z
# ---------------------------------------------------------------------------
# Sweep the prior mean past a fixed observed bin and watch the posterior
# mean: with many bits the bin pins the estimate, with one bit the
# observation only pushes toward the observed half line.
print("=== 2. posterior moments given a bin index ===")
gamma_w = 25.0  # noise precision of the pre-quantization measurement
prior_var = 1.0
prior_means = np.linspace(-3.0, 3.0, 241)

fig, (ax_mean, ax_var) = plt.subplots(1, 2, figsize=(10.0, 4.0))
for bits in (1, 3, 5):
    q = Quantizer(bits, -3.0, 3.0)
    channel = QuantizedGaussianChannel(gamma_w, q)
    y = q.quantize(np.array([0.8]))  # the bin that contains z = 0.8
    post_mean = np.empty_like(prior_means)
    post_var = np.empty_like(prior_means)
    for i, m in enumerate(prior_means):
        zm, _cols, vp = channel_posterior(channel, y.reshape(1, 1),
                                          np.array([[m]]), prior_var)
        post_mean[i] = zm[0, 0]
        post_var[i] = vp
    ax_mean.plot(prior_means, post_mean, label=f"{bits}-bit")
    ax_var.plot(prior_means, post_var, label=f"{bits}-bit")
    mid = len(prior_means) // 2
    print(f"  {bits}-bit, prior N(0,1): posterior mean "
          f"{post_mean[mid]:+.3f}, variance {post_var[mid]:.4f}")

ax_mean.axhline(0.8, color="gray", lw=0.8, ls="--", label="true z")
ax_mean.set_xlabel("prior mean")
ax_mean.set_ylabel("posterior mean of z")
ax_mean.set_title("bin containing z=0.8 observed")
ax_mean.legend()
ax_mean.grid(alpha=0.3)
ax_var.set_xlabel("prior mean")
ax_var.set_ylabel("posterior variance of z")
ax_var.set_title("more bits leave less uncertainty")
ax_var.legend()
ax_var.grid(alpha=0.3)
fig.tight_layout()
path = os.path.join(OUT, "channel_posterior_tour.svg")
fig.savefig(path)
plt.close(fig)
print(f"wrote {path}\n")

# ---------------------------------------------------------------------------
# 3. the extrinsic division: posterior minus what the prior already knew
# ---------------------------------------------------------------------------
# Message passing never forwards the posterior itself -- that would count
# the prior twice.  The extrinsic message divides the prior back out in
# the Gaussian (natural parameter) sense.
print("=== 3. extrinsic division ===")
prior_mean, prior_variance = 0.0, 1.0
q = Quantizer(5, -3.0, 3.0)
channel = QuantizedGaussianChannel(gamma_w, q)
y = q.quantize(np.array([[0.8]]))
post_mean, _cols, post_variance = channel_posterior(
    channel, y, np.array([[prior_mean]]), prior_variance)
ext_mean, ext_var, ok = extrinsic_divide(
    float(post_mean[0, 0]), post_variance, prior_mean, prior_variance)
print(f"prior     N({prior_mean:+.3f}, {prior_variance:.4f})")
print(f"posterior N({float(post_mean[0, 0]):+.3f}, {post_variance:.4f})")
print(f"extrinsic N({ext_mean:+.3f}, {ext_var:.4f})   (valid: {ok})")
print("recombining extrinsic x prior recovers the posterior: "
      f"precision {1.0 / ext_var + 1.0 / prior_variance:.4f} "
      f"vs {1.0 / post_variance:.4f}")
