"""Tour of the autodiff kernel: forward ops, hand-derived backward passes,
and the finite-difference harness that keeps them honest.

Everything the network does reduces to five operations: 3x3 convolution,
1x1 strided projection, batch normalization, relu, and the smooth-L1 loss.
Each has an explicit backward function; this script wires a tiny stack by
hand and checks every gradient against central differences.
"""

import numpy as np

from tofdepth import ops
from tofdepth.gradcheck import max_relative_error, numerical_gradient

rng = np.random.default_rng(0)


def banner(title: str) -> None:
    print(f"\n=== {title} ===")


banner("1. convolution forward")
x = rng.normal(size=(1, 5, 5, 2))  # NHWC, like every op here
kernel = rng.normal(size=(3, 2, 3, 3))  # (out, in, kh, kw)
bias = rng.normal(size=3)
y = ops.conv2d_forward(x, kernel, bias, stride=1, pad=1)
print(f"input {x.shape} -> conv 3x3/s1/p1 -> {y.shape}")
y2 = ops.conv2d_forward(x, kernel, bias, stride=2, pad=0)
print(f"input {x.shape} -> conv 3x3/s2/p0 -> {y2.shape} (the downsampling geometry)")

banner("2. a gradient, checked")
# Scalar loss = weighted sum of the output, so dL/dy is just the weights.
w = rng.normal(size=y.shape)
dx, dk, db = ops.conv2d_backward(x, kernel, w, stride=1, pad=1)
for name, arr, grad in (("input", x, dx), ("kernel", kernel, dk), ("bias", bias, db)):
    num = numerical_gradient(
        lambda: float(np.sum(w * ops.conv2d_forward(x, kernel, bias, stride=1, pad=1))),
        arr,
    )
    print(f"d loss / d {name:6s} max rel err vs finite differences: "
          f"{max_relative_error(grad, num):.2e}")

banner("3. the projection shortcut's off-by-one")
# A 3x3/s2/p0 conv reads windows centred at pixels 1, 3, 5, ... so the 1x1
# shortcut must tap those same centres: offset=1, not 0.
xp = rng.normal(size=(1, 7, 7, 2))
kp = rng.normal(size=(4, 2, 1, 1))
proj, _ = ops.proj1x1_forward_cache(xp, kp, None, stride=2, offset=1)
conv = ops.conv2d_forward(xp, rng.normal(size=(4, 2, 3, 3)), None, stride=2, pad=0)
print(f"projection output {proj.shape} matches conv branch {conv.shape}")
print(f"taps read pixels {list(range(1, 7, 2))} along each axis")

banner("4. batchnorm couples the batch")
xb = rng.normal(size=(4, 3, 3, 2))
gamma, beta = np.ones(2), np.zeros(2)
full, _ = ops.batchnorm_forward_cache(xb, gamma, beta)
solo, _ = ops.batchnorm_forward_cache(xb[:1], gamma, beta)
print(f"sample 0 normalized in a batch of 4 vs alone: "
      f"max abs difference {np.max(np.abs(full[0] - solo[0])):.3f}")
print("(batch statistics, no running averages: predictions depend on batchmates)")

banner("5. smooth-L1: quadratic near zero, linear past the knee")
residuals = np.array([-3.0, -1.0, -0.2, 0.0, 0.2, 1.0, 3.0])
losses = ops.smooth_l1(residuals, np.zeros_like(residuals))
grads = ops.smooth_l1_grad(residuals, np.zeros_like(residuals))
for r, l, g in zip(residuals, losses, grads):
    print(f"  r = {r:+.1f}   loss = {l:.3f}   dloss/dr = {g:+.1f}")
print("gradients saturate at +/-1, so metre-scale outliers cannot blow up a step")

banner("6. relu needs care around its kink")
# Central differences straddle x=0 and disagree with the (sub)gradient there;
# the test suite samples away from the kink, and whole-network checks shrink
# the step to 1e-6 so no perturbation crosses a pre-activation sign change.
xr = np.array([-0.5, -1e-7, 1e-7, 0.5])
print(f"relu({xr}) = {ops.relu(xr)}")
print("finite-difference step must stay below the smallest |pre-activation|")
