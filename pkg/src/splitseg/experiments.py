"""End-to-end experiment pipelines, the SNR sweep harness, and CSV i/o.

Three pipelines share one trained-once weight set per spec:

  traditional: raw RGB over the channel, full inference at the receiver.
  full_tx:     full inference at the transmitter, packed labels over the channel.
  split:       transmitter half, quantized features over the channel (range
               header error-free), receiver half completes inference.

Every trial derives its own noise substream from (master seed, modulation
index, SNR index, image index, pipeline index), so sweep output is a pure
function of the spec regardless of worker count or scheduling.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import codec, dataio, metrics, model, phy
from .model import ModelConfig, SegmentationMap, WeightSet
from .phy import ChannelConfig

ARTIFACT_VERSION = "0.1.0"
SNR_AXIS = "es_n0_db"

PIPELINE_INDEX = {"traditional": 0, "full_tx": 1, "split": 2}
PIPELINE_COLUMN = {"full_tx": "miou_f", "traditional": "miou_n", "split": "miou_s"}
COLUMN_PIPELINE = {v: k for k, v in PIPELINE_COLUMN.items()}
CSV_HEADER = "snr,miou_f,miou_n,miou_s"
REFERENCE_MODES = ("ground_truth", "noiseless_output")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a sweep needs; see load_spec for the JSON form."""

    model: ModelConfig
    modulations: tuple[str, ...] = (phy.QPSK, phy.QAM16)
    snr_db: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    pipelines: tuple[str, ...] = ("traditional", "full_tx", "split")
    num_images: int = 50
    master_seed: int = 20240917
    dataset: str = "synthetic"
    reference_mode: str = "noiseless_output"
    quant_bits: int = 8
    frames_per_second: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "modulations", tuple(self.modulations))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "pipelines", tuple(self.pipelines))
        for m in self.modulations:
            if m not in phy.MODULATIONS:
                raise ConfigError(f"unknown modulation {m!r}")
        if not self.modulations:
            raise ConfigError("modulations must be nonempty")
        if not self.snr_db:
            raise ConfigError("snr_db must be nonempty")
        if any(a >= b for a, b in zip(self.snr_db, self.snr_db[1:])):
            raise ConfigError(f"snr_db must be strictly increasing, got {self.snr_db}")
        if not self.pipelines:
            raise ConfigError("pipelines must be nonempty")
        for p in self.pipelines:
            if p not in PIPELINE_INDEX:
                raise ConfigError(f"unknown pipeline {p!r}")
        if self.num_images < 1:
            raise ConfigError(f"num_images must be >= 1, got {self.num_images}")
        if self.reference_mode not in REFERENCE_MODES:
            raise ConfigError(f"reference_mode {self.reference_mode!r} not in {REFERENCE_MODES}")
        if self.quant_bits not in codec.STANDARD_QUANT_BITS:
            raise ConfigError(f"quant_bits {self.quant_bits} not in {codec.STANDARD_QUANT_BITS}")
        if self.frames_per_second <= 0:
            raise ConfigError(f"frames_per_second must be positive, got {self.frames_per_second}")
        if not (0 <= self.master_seed < 1 << 64):
            raise ConfigError(f"master_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "channel": {"modulations": list(self.modulations), "snr_db": list(self.snr_db)},
            "pipelines": list(self.pipelines),
            "num_images": self.num_images,
            "master_seed": self.master_seed,
            "dataset": self.dataset,
            "reference_mode": self.reference_mode,
            "quant_bits": self.quant_bits,
            "fps": self.frames_per_second,
        }


_SPEC_KEYS = {
    "model", "channel", "pipelines", "num_images", "master_seed",
    "dataset", "reference_mode", "quant_bits", "fps",
}
_MODEL_KEYS = {
    "input_size", "input_height", "input_width",
    "base_channels", "feature_channels", "num_classes", "ppm_bins", "seed",
}


def spec_from_dict(raw: dict) -> ExperimentSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")
    unknown = set(raw) - _SPEC_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "model" not in raw or "channel" not in raw:
        raise ConfigError("config requires 'model' and 'channel' sections")

    m = raw["model"]
    unknown = set(m) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    try:
        size = int(m.get("input_size", 256))
        mc = ModelConfig(
            input_height=int(m.get("input_height", size)),
            input_width=int(m.get("input_width", size)),
            base_channels=int(m.get("base_channels", 16)),
            feature_channels=int(m.get("feature_channels", 64)),
            num_classes=int(m.get("num_classes", 8)),
            ppm_bins=tuple(m.get("ppm_bins", (1, 2, 3, 4))),
            seed=int(m.get("seed", 1234)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model config: {exc}") from exc

    ch = raw["channel"]
    unknown = set(ch) - {"modulations", "snr_db"}
    if unknown:
        raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
    try:
        return ExperimentSpec(
            model=mc,
            modulations=tuple(ch.get("modulations", (phy.QPSK, phy.QAM16))),
            snr_db=tuple(ch.get("snr_db", (5, 10, 15, 20, 25, 30))),
            pipelines=tuple(raw.get("pipelines", ("traditional", "full_tx", "split"))),
            num_images=int(raw.get("num_images", 50)),
            master_seed=int(raw.get("master_seed", mc.seed)),
            dataset=str(raw.get("dataset", "synthetic")),
            reference_mode=str(raw.get("reference_mode", "noiseless_output")),
            quant_bits=int(raw.get("quant_bits", 8)),
            frames_per_second=float(raw.get("fps", 1.0)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_spec(path) -> ExperimentSpec:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not valid JSON ({exc})") from exc
    return spec_from_dict(raw)


def derive_seed(master_seed: int, *key: int) -> int:
    """Stable 64-bit substream seed for a (namespace, index...) tuple."""
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def trial_seed(master_seed: int, mod_idx: int, snr_idx: int, image_idx: int, pipeline: str) -> int:
    return derive_seed(master_seed, 1, mod_idx, snr_idx, image_idx, PIPELINE_INDEX[pipeline])


@dataclass
class PipelineResult:
    """Output of one pipeline run on one image over one channel."""

    label_map: SegmentationMap
    bits_sent: int
    tx_macs: int
    rx_macs: int
    bit_flips: int
    channel_bits: int


def _count_flips(sent: codec.BitStream, received: codec.BitStream) -> int:
    return int(np.count_nonzero(sent.to_bits() != received.to_bits()))


def run_traditional(raster, weights: WeightSet, channel: ChannelConfig) -> PipelineResult:
    """Raw 24 bpp image over the channel; all inference at the receiver."""
    cfg = weights.config
    stream = codec.encode_image(raster)
    received = phy.transmit(stream, channel)
    decoded = codec.decode_image(received, cfg.input_height, cfg.input_width)
    _, seg = model.forward_full(dataio.raster_to_tensor(decoded), weights)
    total, _ = model.mac_count(cfg, model.TOTAL_STAGES - 1)
    return PipelineResult(seg, stream.n_bits, 0, total, _count_flips(stream, received), stream.n_bits)


def run_full_tx(raster, weights: WeightSet, channel: ChannelConfig) -> PipelineResult:
    """Full inference at the transmitter; packed label map over the channel."""
    cfg = weights.config
    _, seg = model.forward_full(dataio.raster_to_tensor(raster), weights)
    stream = codec.encode_labelmap(seg, cfg.num_classes)
    received = phy.transmit(stream, channel)
    out = codec.decode_labelmap(received, cfg.input_height, cfg.input_width, cfg.num_classes)
    total, _ = model.mac_count(cfg, model.TOTAL_STAGES - 1)
    return PipelineResult(out, stream.n_bits, total, 0, _count_flips(stream, received), stream.n_bits)


def run_split(raster, weights: WeightSet, channel: ChannelConfig, quant_bits: int = 8) -> PipelineResult:
    """Split inference: quantized stage-5 features over the channel.

    The per-channel range header traverses the channel error-free; only the
    packed code body is exposed to noise.
    """
    cfg = weights.config
    features = model.forward_transmitter(dataio.raster_to_tensor(raster), weights)
    payload = codec.quantize_features(features, quant_bits)
    header, body = codec.serialize_payload(payload)
    received_body = phy.transmit(body, channel)
    received = codec.deserialize_payload(header, received_body)
    _, seg = model.forward_receiver(codec.dequantize_features(received), weights)
    tx_macs, rx_macs = model.mac_count(cfg, model.SPLIT_BOUNDARY)
    bits_sent = header.n_bits + body.n_bits
    return PipelineResult(seg, bits_sent, tx_macs, rx_macs, _count_flips(body, received_body), body.n_bits)


@dataclass
class _SweepContext:
    spec: ExperimentSpec
    weights: WeightSet
    dataset: list
    references: list


def _build_context(spec: ExperimentSpec) -> _SweepContext:
    cfg = spec.model
    if spec.dataset == "synthetic":
        dataset = dataio.generate_synthetic(
            spec.num_images, cfg.num_classes, cfg.input_height, cfg.input_width,
            derive_seed(spec.master_seed, 0),
        )
    else:
        dataset = dataio.load_dataset_dir(spec.dataset)
        problems = []
        for i, (raster, seg) in enumerate(dataset):
            if raster.shape[:2] != (cfg.input_height, cfg.input_width):
                problems.append(f"image {i}: dims {raster.shape[:2]} != config "
                                f"({cfg.input_height}, {cfg.input_width})")
            elif seg.labels.max() >= cfg.num_classes:
                problems.append(f"image {i}: label {int(seg.labels.max())} >= K={cfg.num_classes}")
        if problems:
            raise ValueError("dataset does not match config:\n  " + "\n  ".join(problems))
        if len(dataset) < spec.num_images:
            raise ValueError(f"dataset has {len(dataset)} images, spec wants {spec.num_images}")
        dataset = dataset[: spec.num_images]

    weights = model.build(cfg)
    if spec.reference_mode == "noiseless_output":
        references = [model.forward_full(dataio.raster_to_tensor(r), weights)[1] for r, _ in dataset]
    else:
        references = [gt for _, gt in dataset]
    return _SweepContext(spec, weights, dataset, references)


def _run_trial(ctx: _SweepContext, mod_idx: int, snr_idx: int, image_idx: int) -> dict:
    spec = ctx.spec
    raster, _ = ctx.dataset[image_idx]
    reference = ctx.references[image_idx]
    out = {}
    for pipeline in spec.pipelines:
        channel = ChannelConfig(
            spec.modulations[mod_idx], spec.snr_db[snr_idx],
            trial_seed(spec.master_seed, mod_idx, snr_idx, image_idx, pipeline),
        )
        if pipeline == "traditional":
            res = run_traditional(raster, ctx.weights, channel)
        elif pipeline == "full_tx":
            res = run_full_tx(raster, ctx.weights, channel)
        else:
            res = run_split(raster, ctx.weights, channel, spec.quant_bits)
        _, mean_iou = metrics.miou(metrics.confusion(reference, res.label_map, spec.model.num_classes))
        out[pipeline] = (mean_iou, res.bit_flips, res.channel_bits, res.bits_sent)
    return out


_WORKER_CTX: _SweepContext | None = None


def _init_worker(spec: ExperimentSpec) -> None:
    global _WORKER_CTX
    _WORKER_CTX = _build_context(spec)


def _worker_trial(key: tuple[int, int, int]):
    return key, _run_trial(_WORKER_CTX, *key)


@dataclass
class SweepResult:
    """Per-SNR aggregated sweep output for one modulation."""

    modulation: str
    snr_db: list[float]
    miou_median: dict[str, list[float]]
    miou_mean: dict[str, list[float]] = field(default_factory=dict)
    ber: list[float] = field(default_factory=list)
    bits_per_image: dict[str, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list[float]:
        """Median mIoU series for a CSV column name (miou_f/miou_n/miou_s)."""
        pipeline = COLUMN_PIPELINE[name]
        return self.miou_median.get(pipeline, [float("nan")] * len(self.snr_db))


def sweep(spec: ExperimentSpec, workers: int = 1) -> list[SweepResult]:
    """Run every (modulation, snr, image) trial and aggregate per SNR row.

    Deterministic for a fixed spec at any worker count.
    """
    keys = [
        (m, s, i)
        for m in range(len(spec.modulations))
        for s in range(len(spec.snr_db))
        for i in range(spec.num_images)
    ]
    if workers <= 1:
        ctx = _build_context(spec)
        outcomes = {k: _run_trial(ctx, *k) for k in keys}
    else:
        chunk = max(len(keys) // (workers * 8), 1)
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(spec,)
        ) as pool:
            outcomes = dict(pool.map(_worker_trial, keys, chunksize=chunk))

    results = []
    for m, modulation in enumerate(spec.modulations):
        medians = {p: [] for p in spec.pipelines}
        means = {p: [] for p in spec.pipelines}
        bers = []
        for s in range(len(spec.snr_db)):
            flips = bits = 0
            for p in spec.pipelines:
                vals = [outcomes[(m, s, i)][p][0] for i in range(spec.num_images)]
                medians[p].append(float(np.median(vals)))
                means[p].append(float(np.mean(vals)))
            for i in range(spec.num_images):
                for p in spec.pipelines:
                    _, f, cb, _ = outcomes[(m, s, i)][p]
                    flips += f
                    bits += cb
            bers.append(flips / bits if bits else float("nan"))
        expected_bits = {
            p: float(metrics.bits_per_image(p, spec.model, spec.quant_bits)) for p in spec.pipelines
        }
        for (mm, s, i), out in outcomes.items():
            if mm != m:
                continue
            for p, (_, _, _, sent) in out.items():
                if sent != expected_bits[p]:
                    raise RuntimeError(
                        f"bit accounting mismatch for {p}: trial sent {sent}, formula {expected_bits[p]}"
                    )
        results.append(
            SweepResult(
                modulation=modulation,
                snr_db=list(spec.snr_db),
                miou_median=medians,
                miou_mean=means,
                ber=bers,
                bits_per_image=expected_bits,
                metadata={
                    "modulation": modulation,
                    "spec": spec.to_dict(),
                    "version": ARTIFACT_VERSION,
                    "snr_axis": SNR_AXIS,
                },
            )
        )
    return results


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(result: SweepResult, path) -> None:
    """Write the primary CSV (median mIoU) plus an `_ext` sibling.

    Primary header is exactly `snr,miou_f,miou_n,miou_s`; the sibling file
    carries means, measured BER, and per-pipeline bits per image.
    """
    path = Path(path)
    lines = [CSV_HEADER]
    for idx, snr in enumerate(result.snr_db):
        cols = [_fmt(snr)]
        for col in ("miou_f", "miou_n", "miou_s"):
            cols.append(_fmt(result.column(col)[idx]))
        lines.append(",".join(cols))
    path.write_text("\n".join(lines) + "\n")

    ext = path.with_name(path.stem + "_ext.csv")
    header = ["snr", "miou_f_mean", "miou_n_mean", "miou_s_mean", "ber", "bits_f", "bits_n", "bits_s"]
    lines = [",".join(header)]
    nan = float("nan")
    for idx, snr in enumerate(result.snr_db):
        cols = [_fmt(snr)]
        for col in ("miou_f", "miou_n", "miou_s"):
            series = result.miou_mean.get(COLUMN_PIPELINE[col])
            cols.append(_fmt(series[idx] if series else nan))
        cols.append(_fmt(result.ber[idx] if result.ber else nan))
        for col in ("miou_f", "miou_n", "miou_s"):
            cols.append(_fmt(result.bits_per_image.get(COLUMN_PIPELINE[col], nan)))
        lines.append(",".join(cols))
    ext.write_text("\n".join(lines) + "\n")


def read_csv(path) -> SweepResult:
    """Read a primary sweep CSV back; raises ValueError naming the bad line."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise ValueError(f"{path}: line 1: empty file")
    if lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: line 1: header {lines[0]!r} != {CSV_HEADER!r}")
    snrs: list[float] = []
    cols: dict[str, list[float]] = {"miou_f": [], "miou_n": [], "miou_s": []}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise ValueError(f"{path}: line {lineno}: blank row")
        fields = line.split(",")
        if len(fields) != 4:
            raise ValueError(f"{path}: line {lineno}: expected 4 fields, got {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: non-numeric field") from None
        snrs.append(values[0])
        cols["miou_f"].append(values[1])
        cols["miou_n"].append(values[2])
        cols["miou_s"].append(values[3])
    medians = {COLUMN_PIPELINE[c]: v for c, v in cols.items()}
    return SweepResult(modulation="", snr_db=snrs, miou_median=medians)


def snr_advantage(result: SweepResult, target: str = "miou_s", reference: str = "miou_f") -> float:
    """Mean dB saved by `target` reaching `reference`'s mIoU at each SNR.

    Positive means the target curve needs less SNR for the same fidelity.
    Interpolates on the rising part of the target curve; NaN when the curves
    cannot be compared. Diagnostic only.
    """
    snrs = np.asarray(result.snr_db, dtype=float)
    tgt = np.asarray(result.column(target), dtype=float)
    ref = np.asarray(result.column(reference), dtype=float)
    if np.isnan(tgt).any() or np.isnan(ref).any():
        return float("nan")
    keep = [0]
    for i in range(1, len(tgt)):
        if tgt[i] > tgt[keep[-1]]:
            keep.append(i)
    xs, ys = tgt[keep], snrs[keep]
    gains = []
    for snr, level in zip(snrs, ref):
        if xs[0] <= level <= xs[-1] and len(xs) >= 2:
            gains.append(snr - float(np.interp(level, xs, ys)))
    return float(np.mean(gains)) if gains else float("nan")
