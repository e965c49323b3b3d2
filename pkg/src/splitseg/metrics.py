"""Segmentation accuracy (IoU/mIoU), payload accounting, and reduction reports."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import model as M
from .codec import label_bits_per_pixel, payload_header_bits
from .model import ModelConfig, SegmentationMap

PIPELINES = ("traditional", "full_tx", "split")

# External reference operating point shown next to the measured
# transmitter-compute reduction in ComputeReport.
REFERENCE_TX_REDUCTION_PCT = 19.8

ABSENT_CLASS_MODES = ("exclude", "one", "zero")


def confusion(reference: SegmentationMap, predicted: SegmentationMap, num_classes: int) -> np.ndarray:
    """K x K count matrix; entry (g, p) counts pixels of true class g predicted p."""
    ref = np.asarray(reference.labels)
    pred = np.asarray(predicted.labels)
    if ref.shape != pred.shape:
        raise ValueError(f"dimension mismatch: reference {ref.shape}, predicted {pred.shape}")
    ref = ref.reshape(-1)
    pred = pred.reshape(-1)
    if ref.min() < 0 or ref.max() >= num_classes or pred.min() < 0 or pred.max() >= num_classes:
        raise ValueError(f"labels outside [0, {num_classes})")
    idx = ref.astype(np.int64) * num_classes + pred
    return np.bincount(idx, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def miou(cm: np.ndarray, absent: str = "exclude") -> tuple[list[float | None], float]:
    """Per-class IoU = TP / (TP + FP + FN) and its mean.

    Classes with no reference or predicted pixels get IoU None; `absent`
    controls how they enter the mean: dropped ("exclude"), counted as 1.0
    ("one"), or counted as 0.0 ("zero"). With every class absent the mean is
    NaN, which is distinct from a genuine 0.
    """
    if absent not in ABSENT_CLASS_MODES:
        raise ValueError(f"absent mode {absent!r} not in {ABSENT_CLASS_MODES}")
    cm = np.asarray(cm, dtype=np.int64)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = tp + fp + fn
    per_class: list[float | None] = [
        float(tp[k]) / float(denom[k]) if denom[k] else None for k in range(cm.shape[0])
    ]
    fill = {"exclude": None, "one": 1.0, "zero": 0.0}[absent]
    values = [v if v is not None else fill for v in per_class]
    values = [v for v in values if v is not None]
    if not values:
        return per_class, float("nan")
    return per_class, float(sum(values) / len(values))


def bits_per_image(pipeline: str, config: ModelConfig, quant_bits: int = 8) -> int:
    """Bits transmitted per image for one pipeline.

    traditional: 24 bpp raw RGB. full_tx: ceil(log2 K) bpp packed labels.
    split: quantized feature body plus its range header.
    """
    h, w = config.input_height, config.input_width
    if pipeline == "traditional":
        return 24 * h * w
    if pipeline == "full_tx":
        return label_bits_per_pixel(config.num_classes) * h * w
    if pipeline == "split":
        c5 = config.feature_channels
        body = c5 * (h // 64) * (w // 64) * quant_bits
        return body + payload_header_bits(c5)
    raise ValueError(f"unknown pipeline {pipeline!r}, expected one of {PIPELINES}")


def bitrate_mbps(bits: int, frames_per_second: float) -> float:
    return bits * frames_per_second / 1e6


@dataclass
class RateReport:
    """Per-pipeline payload sizes and the split pipeline's reductions."""

    bits_per_image: dict[str, int]
    mbps: dict[str, float]
    reduction_vs_traditional_pct: float
    reduction_vs_full_tx_pct: float
    quant_bits: int
    frames_per_second: float
    config: dict

    def to_dict(self) -> dict:
        return {
            "bits_per_image": dict(self.bits_per_image),
            "mbps": dict(self.mbps),
            "reduction_vs_traditional_pct": self.reduction_vs_traditional_pct,
            "reduction_vs_full_tx_pct": self.reduction_vs_full_tx_pct,
            "quant_bits": self.quant_bits,
            "frames_per_second": self.frames_per_second,
            "config": dict(self.config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def rate_report(config: ModelConfig, quant_bits: int = 8, frames_per_second: float = 1.0) -> RateReport:
    bits = {p: bits_per_image(p, config, quant_bits) for p in PIPELINES}
    mbps = {p: bitrate_mbps(b, frames_per_second) for p, b in bits.items()}
    return RateReport(
        bits_per_image=bits,
        mbps=mbps,
        reduction_vs_traditional_pct=100.0 * (1.0 - bits["split"] / bits["traditional"]),
        reduction_vs_full_tx_pct=100.0 * (1.0 - bits["split"] / bits["full_tx"]),
        quant_bits=quant_bits,
        frames_per_second=frames_per_second,
        config=config.to_dict(),
    )


@dataclass
class ComputeReport:
    """Per-pipeline transmitter/receiver MACs and the split's reduction."""

    tx_macs: dict[str, int]
    rx_macs: dict[str, int]
    tx_reduction_pct: float
    reference_tx_reduction_pct: float
    config: dict

    def to_dict(self) -> dict:
        return {
            "tx_macs": dict(self.tx_macs),
            "rx_macs": dict(self.rx_macs),
            "tx_reduction_pct": self.tx_reduction_pct,
            "reference_tx_reduction_pct": self.reference_tx_reduction_pct,
            "config": dict(self.config),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def compute_report(config: ModelConfig) -> ComputeReport:
    split_tx, split_rx = M.mac_count(config, M.SPLIT_BOUNDARY)
    total, _ = M.mac_count(config, M.TOTAL_STAGES - 1)
    return ComputeReport(
        tx_macs={"traditional": 0, "full_tx": total, "split": split_tx},
        rx_macs={"traditional": total, "full_tx": 0, "split": split_rx},
        tx_reduction_pct=100.0 * (1.0 - split_tx / total),
        reference_tx_reduction_pct=REFERENCE_TX_REDUCTION_PCT,
        config=config.to_dict(),
    )
