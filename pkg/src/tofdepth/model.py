"""Residual patch-to-depth regression network.

Topology: stacked groups of residual blocks over a 15x15 multi-channel
patch, spatially reduced by pad-0/stride-2 convolutions at the head of the
downsampling groups, finished by a head that collapses the remaining
extent to a single 1x1x1 regression value in normalized depth units.

The default build is 3 groups x 8 blocks (24 blocks total) with channel
widths 32/64/128 and a spatial trace 15 -> 15 -> 7 -> 3 -> 1. Two study
variants exist: `with_batch_norm` adds a normalization layer directly
after every convolution inside the blocks, and `single_scale` takes the
2-channel full-resolution-only patch.

Weights are float32; inference is read-only over the parameter dict and
safe for concurrent callers. Training mutates parameters single-writer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, InferenceError, TopologyError

PATCH_SIZE = 15

DEFAULT_GROUPS = ((8, 32, False), (8, 64, True), (8, 128, True))
DESK_GROUPS = ((2, 16, False), (2, 32, True))


@dataclass(frozen=True)
class NetworkConfig:
    """Build description; (blocks, width, downsample) per group."""

    input_channels: int = 4
    groups: tuple = DEFAULT_GROUPS
    use_batch_norm: bool = False
    seed: int = 0
    input_size: int = PATCH_SIZE

    def validate(self) -> None:
        if self.input_channels not in (2, 4):
            raise ConfigError(f"input_channels must be 2 or 4, got {self.input_channels}")
        if not self.groups:
            raise ConfigError("at least one group required")
        for g in self.groups:
            blocks, width, down = g
            if blocks < 1 or width < 1:
                raise ConfigError(f"bad group spec {g}")
        if self.groups[0][2]:
            raise ConfigError("first group must not downsample")
        if self.input_size < 3:
            raise ConfigError(f"input_size must be >= 3, got {self.input_size}")

    @property
    def block_count(self) -> int:
        return sum(g[0] for g in self.groups)

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "groups": [list(g) for g in self.groups],
            "use_batch_norm": self.use_batch_norm,
            "seed": self.seed,
            "input_size": self.input_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {"input_channels", "groups", "use_batch_norm", "seed", "input_size"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown NetworkConfig fields: {sorted(unknown)}")
        kwargs = dict(d)
        if "groups" in kwargs:
            kwargs["groups"] = tuple(tuple(g) for g in kwargs["groups"])
        return cls(**kwargs)

    @classmethod
    def default(cls, seed: int = 0) -> "NetworkConfig":
        return cls(seed=seed)

    @classmethod
    def single_scale(cls, seed: int = 0) -> "NetworkConfig":
        """Variant fed only the two full-resolution channels."""
        return cls(input_channels=2, seed=seed)

    @classmethod
    def with_batch_norm(cls, seed: int = 0) -> "NetworkConfig":
        """Variant with a normalization layer after every block convolution."""
        return cls(use_batch_norm=True, seed=seed)

    @classmethod
    def desk(cls, seed: int = 0, use_batch_norm: bool = False,
             input_channels: int = 4) -> "NetworkConfig":
        """Reduced 2x2-block build for fast CI-scale experiments."""
        return cls(input_channels=input_channels, groups=DESK_GROUPS,
                   use_batch_norm=use_batch_norm, seed=seed)


@dataclass(frozen=True)
class BlockSpec:
    """Structural record of one residual block (parameter names + geometry)."""

    name: str
    in_channels: int
    out_channels: int
    stride: int
    in_size: int
    out_size: int
    has_proj: bool
    use_bn: bool

    def layer_names(self):
        names = [f"{self.name}.conv1", f"{self.name}.conv2"]
        if self.has_proj:
            names.append(f"{self.name}.proj")
        if self.use_bn:
            names.extend([f"{self.name}.bn1", f"{self.name}.bn2"])
            if self.has_proj:
                names.append(f"{self.name}.bnp")
        return names


@dataclass(frozen=True)
class HeadConvSpec:
    name: str
    in_channels: int
    out_channels: int
    stride: int
    in_size: int
    out_size: int
    final: bool


def _plan_blocks(config: NetworkConfig):
    """Lay out block specs and verify the spatial trace stays positive."""
    blocks = []
    size = config.input_size
    channels = config.input_channels
    trace = [size]
    for gi, (n_blocks, width, downsample) in enumerate(config.groups, start=1):
        for bi in range(n_blocks):
            stride = 2 if (downsample and bi == 0) else 1
            pad = 0 if stride == 2 else 1
            out_size = ops.conv2d_out_size(size, 3, pad, stride)
            name = f"g{gi}.b{bi}"
            if out_size < 1:
                raise TopologyError(
                    f"layer {name}.conv1 output size {out_size} is non-positive "
                    f"(input {size}, stride {stride}, pad {pad})"
                )
            has_proj = stride == 2 or channels != width
            blocks.append(BlockSpec(
                name=name, in_channels=channels, out_channels=width,
                stride=stride, in_size=size, out_size=out_size,
                has_proj=has_proj, use_bn=config.use_batch_norm,
            ))
            size = out_size
            channels = width
        trace.append(size)
    return blocks, trace, size, channels


def _plan_head(size: int, channels: int):
    """Stride-2 pad-0 convolutions until 3x3, then one 3x3 regression conv."""
    specs = []
    idx = 0
    while size > 3:
        out_size = ops.conv2d_out_size(size, 3, 0, 2)
        if out_size < 3:
            raise TopologyError(
                f"head.{idx} cannot reduce size {size} onto the 3x3 grid"
            )
        specs.append(HeadConvSpec(
            name=f"head.{idx}", in_channels=channels, out_channels=channels,
            stride=2, in_size=size, out_size=out_size, final=False,
        ))
        size = out_size
        idx += 1
    if size != 3:
        raise TopologyError(f"head requires a 3x3 input, trace ends at {size}")
    specs.append(HeadConvSpec(
        name=f"head.{idx}", in_channels=channels, out_channels=1,
        stride=1, in_size=3, out_size=1, final=True,
    ))
    return specs


def _init_params(config: NetworkConfig, blocks, head):
    """Fan-in-scaled Gaussian kernels, zero biases, identity BN affine."""
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}

    def conv(name, out_c, in_c, k):
        std = np.sqrt(2.0 / (in_c * k * k))
        params[f"{name}.kernel"] = rng.normal(0.0, std, (out_c, in_c, k, k)).astype(np.float32)
        params[f"{name}.bias"] = np.zeros(out_c, dtype=np.float32)

    def bn(name, c):
        params[f"{name}.gamma"] = np.ones(c, dtype=np.float32)
        params[f"{name}.beta"] = np.zeros(c, dtype=np.float32)

    for b in blocks:
        conv(f"{b.name}.conv1", b.out_channels, b.in_channels, 3)
        if b.use_bn:
            bn(f"{b.name}.bn1", b.out_channels)
        conv(f"{b.name}.conv2", b.out_channels, b.out_channels, 3)
        if b.use_bn:
            bn(f"{b.name}.bn2", b.out_channels)
        if b.has_proj:
            conv(f"{b.name}.proj", b.out_channels, b.in_channels, 1)
            if b.use_bn:
                bn(f"{b.name}.bnp", b.out_channels)
    for h in head:
        conv(h.name, h.out_channels, h.in_channels, 3)
    return params


class Network:
    """Built network: config + structural plan + named parameter arrays."""

    def __init__(self, config: NetworkConfig, params: dict | None = None):
        config.validate()
        self.config = config
        self.blocks, self.shape_trace, size, channels = _plan_blocks(config)
        self.head = _plan_head(size, channels)
        self.shape_trace.append(1)
        if params is None:
            self.params = _init_params(config, self.blocks, self.head)
        else:
            self.params = params
            self._check_param_shapes()
        self.bn_eps = 1e-5

    def _check_param_shapes(self):
        expected = _init_params(self.config, self.blocks, self.head)
        if list(expected) != list(self.params):
            raise ConfigError("parameter names do not match the built topology")
        for name, ref in expected.items():
            if self.params[name].shape != ref.shape:
                raise ConfigError(
                    f"parameter '{name}' has shape {self.params[name].shape}, "
                    f"expected {ref.shape}"
                )

    # ---- introspection -------------------------------------------------

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    @property
    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def param_manifest(self):
        return [{"name": n, "shape": list(p.shape)} for n, p in self.params.items()]

    def summary(self) -> dict:
        return {
            "block_count": self.block_count,
            "param_count": self.param_count,
            "shape_trace": list(self.shape_trace),
            "input_channels": self.config.input_channels,
            "use_batch_norm": self.config.use_batch_norm,
        }

    # ---- forward / backward --------------------------------------------

    def _block_forward(self, spec: BlockSpec, x, tape=None):
        p = self.params
        offset = 1 if spec.stride == 2 else 0
        rec = {"spec": spec}

        h1, c1 = ops.conv2d_forward_cache(
            x, p[f"{spec.name}.conv1.kernel"], p[f"{spec.name}.conv1.bias"],
            stride=spec.stride, pad=0 if spec.stride == 2 else 1)
        rec["c1"] = c1
        if spec.use_bn:
            h1, rec["cb1"] = ops.batchnorm_forward_cache(
                h1, p[f"{spec.name}.bn1.gamma"], p[f"{spec.name}.bn1.beta"], self.bn_eps)
        rec["a1_in"] = h1
        a1 = ops.relu(h1)

        h2, c2 = ops.conv2d_forward_cache(
            a1, p[f"{spec.name}.conv2.kernel"], p[f"{spec.name}.conv2.bias"],
            stride=1, pad=1)
        rec["c2"] = c2
        if spec.use_bn:
            h2, rec["cb2"] = ops.batchnorm_forward_cache(
                h2, p[f"{spec.name}.bn2.gamma"], p[f"{spec.name}.bn2.beta"], self.bn_eps)

        if spec.has_proj:
            sc, cp = ops.proj1x1_forward_cache(
                x, p[f"{spec.name}.proj.kernel"], p[f"{spec.name}.proj.bias"],
                stride=spec.stride, offset=offset)
            rec["cp"] = cp
            if spec.use_bn:
                sc, rec["cbp"] = ops.batchnorm_forward_cache(
                    sc, p[f"{spec.name}.bnp.gamma"], p[f"{spec.name}.bnp.beta"], self.bn_eps)
        else:
            sc = x

        s = h2 + sc
        rec["s"] = s
        y = ops.relu(s)
        if tape is not None:
            tape.append(rec)
        return y

    def _block_backward(self, rec, dy, grads):
        spec = rec["spec"]
        p = self.params
        ds = ops.relu_backward(rec["s"], dy)

        dbranch = ds
        if spec.use_bn:
            dbranch, dg, db = ops.batchnorm_backward_cache(rec["cb2"], dbranch)
            grads[f"{spec.name}.bn2.gamma"] = dg
            grads[f"{spec.name}.bn2.beta"] = db
        da1, dk2, db2 = ops.conv2d_backward_cache(
            rec["c2"], p[f"{spec.name}.conv2.kernel"], dbranch)
        grads[f"{spec.name}.conv2.kernel"] = dk2
        grads[f"{spec.name}.conv2.bias"] = db2

        dh1 = ops.relu_backward(rec["a1_in"], da1)
        if spec.use_bn:
            dh1, dg, db = ops.batchnorm_backward_cache(rec["cb1"], dh1)
            grads[f"{spec.name}.bn1.gamma"] = dg
            grads[f"{spec.name}.bn1.beta"] = db
        dx, dk1, db1 = ops.conv2d_backward_cache(
            rec["c1"], p[f"{spec.name}.conv1.kernel"], dh1)
        grads[f"{spec.name}.conv1.kernel"] = dk1
        grads[f"{spec.name}.conv1.bias"] = db1

        dsc = ds
        if spec.has_proj:
            if spec.use_bn:
                dsc, dg, db = ops.batchnorm_backward_cache(rec["cbp"], dsc)
                grads[f"{spec.name}.bnp.gamma"] = dg
                grads[f"{spec.name}.bnp.beta"] = db
            dxp, dkp, dbp = ops.proj1x1_backward_cache(
                rec["cp"], p[f"{spec.name}.proj.kernel"], dsc)
            grads[f"{spec.name}.proj.kernel"] = dkp
            grads[f"{spec.name}.proj.bias"] = dbp
            dx = dx + dxp
        else:
            dx = dx + dsc
        return dx

    def _run(self, x, tape=None, check_finite=True):
        for spec in self.blocks:
            x = self._block_forward(spec, x, tape)
            if check_finite and not np.isfinite(x).all():
                raise InferenceError(f"non-finite activation after block {spec.name}")
        for h in self.head:
            y, cache = ops.conv2d_forward_cache(
                x, self.params[f"{h.name}.kernel"], self.params[f"{h.name}.bias"],
                stride=h.stride, pad=0)
            if tape is not None:
                tape.append({"head": h, "cache": cache, "pre": y if not h.final else None})
            x = y if h.final else ops.relu(y)
            if check_finite and not np.isfinite(x).all():
                raise InferenceError(f"non-finite activation after layer {h.name}")
        return x

    def forward_batch(self, patches) -> np.ndarray:
        """Map a (N, S, S, C) stack (or a list of patches) to N scalars."""
        values = np.asarray(patches)
        if values.ndim == 3:
            values = values[None]
        if values.ndim != 4:
            raise ConfigError(f"expected patch stack (N,S,S,C), got shape {values.shape}")
        expect = (self.config.input_size, self.config.input_size, self.config.input_channels)
        if values.shape[1:] != expect:
            raise ConfigError(f"patch shape {values.shape[1:]} != expected {expect}")
        x = values.astype(self._dtype, copy=False)
        out = self._run(x)
        return out.reshape(out.shape[0])

    def forward(self, patch) -> float:
        """Predict the normalized depth at the center of one patch."""
        return float(self.forward_batch(np.asarray(patch)[None])[0])

    def loss_and_grads(self, patches, targets, beta=1.0):
        """Mean smooth-L1 loss over a batch plus gradients for every parameter.

        Targets are in the same normalized units the network emits.
        """
        values = np.asarray(patches, dtype=self._dtype)
        targets = np.asarray(targets, dtype=self._dtype)
        tape: list = []
        out = self._run(values, tape=tape)
        preds = out.reshape(out.shape[0])
        losses = ops.smooth_l1(preds, targets, beta)
        loss = float(losses.mean())

        dpred = (ops.smooth_l1_grad(preds, targets, beta) / preds.size).astype(self._dtype)
        dy = dpred.reshape(out.shape)
        grads: dict[str, np.ndarray] = {}
        for rec in reversed(tape[len(self.blocks):]):
            h = rec["head"]
            if not h.final:
                dy = ops.relu_backward(rec["pre"], dy)
            dy, dk, db = ops.conv2d_backward_cache(
                rec["cache"], self.params[f"{h.name}.kernel"], dy)
            grads[f"{h.name}.kernel"] = dk
            grads[f"{h.name}.bias"] = db
        for rec in reversed(tape[: len(self.blocks)]):
            dy = self._block_backward(rec, dy, grads)
        return loss, grads

    def run_block(self, group_index: int, block_index: int, x):
        """Forward one block in isolation (for structural tests)."""
        name = f"g{group_index}.b{block_index}"
        for spec in self.blocks:
            if spec.name == name:
                return self._block_forward(spec, np.asarray(x, dtype=self._dtype))
        raise ConfigError(f"no block named {name}")

    @property
    def _dtype(self):
        return next(iter(self.params.values())).dtype

    def to_f64(self) -> "Network":
        """Double-precision clone for finite-difference checking."""
        params = {n: p.astype(np.float64) for n, p in self.params.items()}
        net = Network.__new__(Network)
        net.config = self.config
        net.blocks = self.blocks
        net.head = self.head
        net.shape_trace = self.shape_trace
        net.params = params
        net.bn_eps = self.bn_eps
        return net


def build_network(config: NetworkConfig) -> Network:
    """Construct a freshly initialized network; raises TopologyError on a bad plan."""
    return Network(config)
