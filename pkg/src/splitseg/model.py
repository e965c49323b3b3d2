"""Miniature three-branch segmentation network and its split executor.

The network follows a fixed stage schedule (output scale relative to the
input): two stride-2 convs (1/4), a residual block (1/4), a stride-2
residual block (1/8), then three parallel branches through stages 3-5. The
detail branch stays at 1/8, the context branch downsamples per stage
(1/16, 1/32, 1/64) and feeds resized compensation features back into the
detail branch, and a third branch refines at 1/8 with fewer channels.
Stage 5 uses bottleneck blocks, after which the branches are fused into a
single 1/64-scale feature map: that map is the transmitted object.

The receiver half applies pyramid pooling over the fused map, upsamples to
1/8 scale, and runs the two-conv classification head.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor_ops as T

TOTAL_STAGES = 7  # stages 0..6; the split boundary sits after stage 5
SPLIT_BOUNDARY = 5


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    input dims must be divisible by 64 (the fused feature map lives at 1/64
    scale). `feature_channels` is the channel count of the transmitted map.
    """

    input_height: int = 256
    input_width: int = 256
    base_channels: int = 16
    feature_channels: int = 64
    num_classes: int = 8
    ppm_bins: tuple[int, ...] = (1, 2, 3, 4)
    seed: int = 1234

    def __post_init__(self):
        object.__setattr__(self, "ppm_bins", tuple(int(b) for b in self.ppm_bins))
        if self.input_height % 64 or self.input_width % 64:
            raise ValueError(
                f"input dims must be divisible by 64, got {self.input_height}x{self.input_width}"
            )
        if self.input_height < 64 or self.input_width < 64:
            raise ValueError("input dims must be at least 64")
        if self.base_channels < 4:
            raise ValueError(f"base_channels must be >= 4, got {self.base_channels}")
        if self.feature_channels < 4:
            raise ValueError(f"feature_channels must be >= 4, got {self.feature_channels}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.ppm_bins:
            raise ValueError("ppm_bins must be nonempty")
        if any(b < 1 for b in self.ppm_bins):
            raise ValueError(f"ppm_bins must be positive, got {self.ppm_bins}")
        if any(a >= b for a, b in zip(self.ppm_bins, self.ppm_bins[1:])):
            raise ValueError(f"ppm_bins must be strictly increasing, got {self.ppm_bins}")
        if max(self.ppm_bins) > min(self.input_height, self.input_width) // 64:
            raise ValueError(
                f"max ppm bin {max(self.ppm_bins)} exceeds fused map size "
                f"{min(self.input_height, self.input_width) // 64}"
            )
        if not (0 <= self.seed < 1 << 64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @classmethod
    def desk_scale(cls, **overrides) -> "ModelConfig":
        """Small config meant for fast simulation runs (256x256 input)."""
        return cls(**overrides)

    @classmethod
    def full_scale(cls, **overrides) -> "ModelConfig":
        """1024x1024 config matching the reference stage resolutions."""
        defaults = dict(
            input_height=1024, input_width=1024, base_channels=32,
            feature_channels=512, num_classes=19, ppm_bins=(1, 2, 3, 6), seed=1234,
        )
        defaults.update(overrides)
        return cls(**defaults)

    def to_dict(self) -> dict:
        return {
            "input_height": self.input_height,
            "input_width": self.input_width,
            "base_channels": self.base_channels,
            "feature_channels": self.feature_channels,
            "num_classes": self.num_classes,
            "ppm_bins": list(self.ppm_bins),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            input_height=d["input_height"], input_width=d["input_width"],
            base_channels=d["base_channels"], feature_channels=d["feature_channels"],
            num_classes=d["num_classes"], ppm_bins=tuple(d["ppm_bins"]), seed=d["seed"],
        )


@dataclass
class SegmentationMap:
    """Per-pixel class indices, stored as a (height, width) int32 array."""

    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.labels, dtype=np.int32)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"labels must be a 2-D array, got shape {a.shape}")
        self.labels = a

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    def same_as(self, other: "SegmentationMap") -> bool:
        return bool(np.array_equal(self.labels, other.labels))


@dataclass(frozen=True)
class ConvPlan:
    """One convolution unit in the execution plan (conv + optional affine)."""

    name: str
    stage: int
    k: int
    cin: int
    cout: int
    stride: int
    out_h: int
    out_w: int
    affine: bool = True

    @property
    def macs(self) -> int:
        return self.k * self.k * self.cin * self.cout * self.out_h * self.out_w


def _rbb_mid(cout: int) -> int:
    return max(cout // 4, 4)


def _ppm_branch_channels(config: ModelConfig) -> int:
    return max(config.feature_channels // len(config.ppm_bins), 1)


def _head_mid(config: ModelConfig) -> int:
    return max(config.feature_channels // 4, config.num_classes)


def layer_plan(config: ModelConfig) -> list[ConvPlan]:
    """Enumerate every convolution in execution order.

    This single table drives weight construction, weight-file validation,
    and MAC accounting.
    """
    c0, c5, k = config.base_channels, config.feature_channels, config.num_classes
    h, w = config.input_height, config.input_width
    h4, w4 = h // 4, w // 4
    h8, w8 = h // 8, w // 8
    h16, w16 = h // 16, w // 16
    h32, w32 = h // 32, w // 32
    h64, w64 = h // 64, w // 64

    plans: list[ConvPlan] = []

    def conv(name, stage, ksize, cin, cout, stride, oh, ow, affine=True):
        plans.append(ConvPlan(name, stage, ksize, cin, cout, stride, oh, ow, affine))

    def rb(prefix, stage, cin, cout, stride, oh, ow):
        conv(f"{prefix}.conv1", stage, 3, cin, cout, stride, oh, ow)
        conv(f"{prefix}.conv2", stage, 3, cout, cout, 1, oh, ow)
        if stride != 1 or cin != cout:
            conv(f"{prefix}.proj", stage, 1, cin, cout, stride, oh, ow)

    def rbb(prefix, stage, cin, cout, stride, ih, iw, oh, ow):
        mid = _rbb_mid(cout)
        conv(f"{prefix}.reduce", stage, 1, cin, mid, 1, ih, iw)
        conv(f"{prefix}.conv", stage, 3, mid, mid, stride, oh, ow)
        conv(f"{prefix}.expand", stage, 1, mid, cout, 1, oh, ow)
        if stride != 1 or cin != cout:
            conv(f"{prefix}.proj", stage, 1, cin, cout, stride, oh, ow)

    conv("s0.conv1", 0, 3, 3, c0, 2, h // 2, w // 2)
    conv("s0.conv2", 0, 3, c0, c0, 2, h4, w4)
    rb("s1.rb", 1, c0, c0, 1, h4, w4)
    rb("s2.rb", 2, c0, 2 * c0, 2, h8, w8)

    rb("s3.p", 3, 2 * c0, 2 * c0, 1, h8, w8)
    rb("s3.i", 3, 2 * c0, 4 * c0, 2, h16, w16)
    rb("s3.d", 3, 2 * c0, c0, 1, h8, w8)
    conv("s3.comp", 3, 1, 4 * c0, 2 * c0, 1, h16, w16)

    rb("s4.p", 4, 2 * c0, 2 * c0, 1, h8, w8)
    rb("s4.i", 4, 4 * c0, 8 * c0, 2, h32, w32)
    rb("s4.d", 4, c0, c0, 1, h8, w8)
    conv("s4.comp", 4, 1, 8 * c0, 2 * c0, 1, h32, w32)

    rbb("s5.p", 5, 2 * c0, 2 * c0, 1, h8, w8, h8, w8)
    rbb("s5.i", 5, 8 * c0, 8 * c0, 2, h32, w32, h64, w64)
    rbb("s5.d", 5, c0, c0, 1, h8, w8, h8, w8)
    conv("s5.fuse", 5, 1, 11 * c0, c5, 1, h64, w64)

    cb = _ppm_branch_channels(config)
    for b in config.ppm_bins:
        conv(f"s6.ppm.bin{b}", 6, 1, c5, cb, 1, b, b)
    conv("s6.ppm.fuse", 6, 1, c5 + cb * len(config.ppm_bins), c5, 1, h64, w64)
    conv("s6.head1", 6, 3, c5, _head_mid(config), 1, h8, w8)
    conv("s6.head2", 6, 1, _head_mid(config), k, 1, h8, w8, affine=False)
    return plans


def param_names(plan: ConvPlan) -> list[str]:
    names = [plan.name + ".kernel", plan.name + ".bias"]
    if plan.affine:
        names += [plan.name + ".scale", plan.name + ".shift"]
    return names


def param_shape(plan: ConvPlan, suffix: str) -> tuple[int, ...]:
    if suffix == "kernel":
        return (plan.cout, plan.cin, plan.k, plan.k)
    return (plan.cout,)


@dataclass
class WeightSet:
    """All layer parameters, keyed "<layer>.<kernel|bias|scale|shift>"."""

    config: ModelConfig
    params: dict[str, np.ndarray]

    def same_as(self, other: "WeightSet") -> bool:
        if self.config != other.config or self.params.keys() != other.params.keys():
            return False
        return all(np.array_equal(self.params[k], other.params[k]) for k in self.params)


def build(config: ModelConfig) -> WeightSet:
    """Deterministically initialize weights from config.seed.

    Kernels are drawn uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out));
    biases and affine shifts start at 0, affine scales at 1.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed)))
    params: dict[str, np.ndarray] = {}
    for p in layer_plan(config):
        fan_in = p.cin * p.k * p.k
        fan_out = p.cout * p.k * p.k
        a = math.sqrt(6.0 / (fan_in + fan_out))
        params[p.name + ".kernel"] = rng.uniform(-a, a, size=(p.cout, p.cin, p.k, p.k)).astype(np.float32)
        params[p.name + ".bias"] = np.zeros(p.cout, dtype=np.float32)
        if p.affine:
            params[p.name + ".scale"] = np.ones(p.cout, dtype=np.float32)
            params[p.name + ".shift"] = np.zeros(p.cout, dtype=np.float32)
    return WeightSet(config=config, params=params)


@dataclass(frozen=True)
class StageInfo:
    stage: int
    kind: str
    out_channels: int
    out_h: int
    out_w: int


def describe(config: ModelConfig) -> list[StageInfo]:
    """Per-stage operation kind, output channels, and output resolution."""
    c0, c5, k = config.base_channels, config.feature_channels, config.num_classes
    h, w = config.input_height, config.input_width
    return [
        StageInfo(0, "conv x2", c0, h // 4, w // 4),
        StageInfo(1, "rb", c0, h // 4, w // 4),
        StageInfo(2, "rb", 2 * c0, h // 8, w // 8),
        StageInfo(3, "rb x3", 4 * c0, h // 16, w // 16),
        StageInfo(4, "rb x3", 8 * c0, h // 32, w // 32),
        StageInfo(5, "rbb x3 + fuse", c5, h // 64, w // 64),
        StageInfo(6, "ppm + conv x2", k, h // 8, w // 8),
    ]


def _unit(weights: WeightSet, name: str, x, stride: int = 1, act: bool = True) -> np.ndarray:
    p = weights.params
    kernel = p[name + ".kernel"]
    out = T.conv2d(x, kernel, p[name + ".bias"], stride=stride, padding=kernel.shape[-1] // 2)
    if name + ".scale" in p:
        out = T.affine_norm(out, p[name + ".scale"], p[name + ".shift"])
    if act:
        out = T.relu(out)
    return out


def _rb(weights: WeightSet, prefix: str, x, stride: int) -> np.ndarray:
    y = _unit(weights, prefix + ".conv1", x, stride=stride)
    y = _unit(weights, prefix + ".conv2", y, act=False)
    skip = x
    if prefix + ".proj.kernel" in weights.params:
        skip = _unit(weights, prefix + ".proj", x, stride=stride, act=False)
    return T.relu(T.add(y, skip))


def _rbb(weights: WeightSet, prefix: str, x, stride: int) -> np.ndarray:
    y = _unit(weights, prefix + ".reduce", x)
    y = _unit(weights, prefix + ".conv", y, stride=stride)
    y = _unit(weights, prefix + ".expand", y, act=False)
    skip = x
    if prefix + ".proj.kernel" in weights.params:
        skip = _unit(weights, prefix + ".proj", x, stride=stride, act=False)
    return T.relu(T.add(y, skip))


def forward_transmitter(image, weights: WeightSet) -> np.ndarray:
    """Run stages 0-5 plus branch fusion; returns the 1/64-scale feature map."""
    cfg = weights.config
    x = np.asarray(image, dtype=np.float32)
    if x.shape != (3, cfg.input_height, cfg.input_width):
        raise ValueError(
            f"image shape {x.shape} != (3, {cfg.input_height}, {cfg.input_width})"
        )
    x = _unit(weights, "s0.conv1", x, stride=2)
    x = _unit(weights, "s0.conv2", x, stride=2)
    x = _rb(weights, "s1.rb", x, 1)
    x = _rb(weights, "s2.rb", x, 2)

    p = _rb(weights, "s3.p", x, 1)
    i = _rb(weights, "s3.i", x, 2)
    d = _rb(weights, "s3.d", x, 1)
    comp = _unit(weights, "s3.comp", i, act=False)
    p = T.add(p, T.bilinear_resize(comp, p.shape[1], p.shape[2]))

    p = _rb(weights, "s4.p", p, 1)
    i = _rb(weights, "s4.i", i, 2)
    d = _rb(weights, "s4.d", d, 1)
    comp = _unit(weights, "s4.comp", i, act=False)
    p = T.add(p, T.bilinear_resize(comp, p.shape[1], p.shape[2]))

    p = _rbb(weights, "s5.p", p, 1)
    i = _rbb(weights, "s5.i", i, 2)
    d = _rbb(weights, "s5.d", d, 1)

    h64, w64 = i.shape[1], i.shape[2]
    fused = T.concat_channels([T.avg_pool_to(p, h64, w64), T.avg_pool_to(d, h64, w64), i])
    return _unit(weights, "s5.fuse", fused, act=False)


def forward_receiver(features, weights: WeightSet) -> tuple[np.ndarray, SegmentationMap]:
    """Run pyramid pooling and the head; returns full-resolution logits and labels.

    Argmax ties resolve toward the lowest class index.
    """
    cfg = weights.config
    h64, w64 = cfg.input_height // 64, cfg.input_width // 64
    x = np.asarray(features, dtype=np.float32)
    if x.shape != (cfg.feature_channels, h64, w64):
        raise ValueError(f"feature shape {x.shape} != ({cfg.feature_channels}, {h64}, {w64})")

    branches = [x]
    for b in cfg.ppm_bins:
        pooled = T.adaptive_avg_pool(x, b)
        branches.append(T.bilinear_resize(_unit(weights, f"s6.ppm.bin{b}", pooled), h64, w64))
    y = _unit(weights, "s6.ppm.fuse", T.concat_channels(branches))
    y = T.bilinear_resize(y, cfg.input_height // 8, cfg.input_width // 8)
    y = _unit(weights, "s6.head1", y)
    y = _unit(weights, "s6.head2", y, act=False)
    logits = T.bilinear_resize(y, cfg.input_height, cfg.input_width)
    labels = np.argmax(logits, axis=0).astype(np.int32)
    return logits, SegmentationMap(labels)


def forward_full(image, weights: WeightSet) -> tuple[np.ndarray, SegmentationMap]:
    """Transmitter and receiver halves composed back-to-back."""
    return forward_receiver(forward_transmitter(image, weights), weights)


def conv_macs(k: int, cin: int, cout: int, out_h: int, out_w: int) -> int:
    """Multiply-accumulates of one convolution: k*k*cin*cout*out_h*out_w."""
    return k * k * cin * cout * out_h * out_w


def mac_count(config: ModelConfig, boundary: int) -> tuple[int, int]:
    """Convolution MACs on each side of a stage boundary.

    The transmitter side covers all convolutions in stages <= boundary (the
    branch-fusion conv belongs to stage 5); the receiver side covers the
    rest. Only convolutions are counted.
    """
    if not (0 <= boundary <= TOTAL_STAGES - 1):
        raise ValueError(f"boundary must be in 0..{TOTAL_STAGES - 1}, got {boundary}")
    tx = rx = 0
    for p in layer_plan(config):
        if p.stage <= boundary:
            tx += p.macs
        else:
            rx += p.macs
    return tx, rx


def _manifest_path(path) -> Path:
    return Path(str(path) + ".json")


def _blob_path(path) -> Path:
    return Path(str(path) + ".bin")


def save_weights(weights: WeightSet, path) -> None:
    """Write `<path>.json` (manifest) and `<path>.bin` (little-endian float32 blob).

    The manifest lists {name, shape, offset} per parameter in plan order and
    embeds the model config so the file is self-describing.
    """
    entries = []
    blob = bytearray()
    for name, arr in weights.params.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": len(blob)})
        blob.extend(data)
    manifest = {
        "config": weights.config.to_dict(),
        "params": entries,
        "total_bytes": len(blob),
    }
    _manifest_path(path).write_text(json.dumps(manifest, indent=1) + "\n")
    _blob_path(path).write_bytes(bytes(blob))


def load_weights(path) -> WeightSet:
    """Load and validate a weight file pair written by save_weights.

    Raises ValueError with a "missing entry", "shape mismatch", "unexpected
    entry", or "corrupt file" message depending on the defect found.
    """
    mpath, bpath = _manifest_path(path), _blob_path(path)
    if not mpath.exists():
        raise FileNotFoundError(str(mpath))
    if not bpath.exists():
        raise FileNotFoundError(str(bpath))
    try:
        manifest = json.loads(mpath.read_text())
        config = ModelConfig.from_dict(manifest["config"])
        entries = {e["name"]: e for e in manifest["params"]}
        total = int(manifest["total_bytes"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"corrupt file: unreadable manifest {mpath} ({exc})") from exc

    blob = bpath.read_bytes()
    if len(blob) != total:
        raise ValueError(f"corrupt file: blob {bpath} has {len(blob)} bytes, manifest says {total}")

    expected: dict[str, tuple[int, ...]] = {}
    for plan in layer_plan(config):
        for name in param_names(plan):
            expected[name] = param_shape(plan, name.rsplit(".", 1)[1])

    for name in entries:
        if name not in expected:
            raise ValueError(f"unexpected entry: {name}")

    params: dict[str, np.ndarray] = {}
    for name, shape in expected.items():
        entry = entries.get(name)
        if entry is None:
            raise ValueError(f"missing entry: {name}")
        if tuple(entry["shape"]) != shape:
            raise ValueError(f"shape mismatch for {name}: manifest {entry['shape']}, expected {list(shape)}")
        count = int(np.prod(shape))
        offset = int(entry["offset"])
        end = offset + 4 * count
        if offset < 0 or end > len(blob):
            raise ValueError(f"corrupt file: entry {name} spans bytes {offset}..{end} of {len(blob)}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        if not np.isfinite(arr).all():
            raise ValueError(f"corrupt file: non-finite values in {name}")
        params[name] = arr.reshape(shape).astype(np.float32)
    return WeightSet(config=config, params=params)
