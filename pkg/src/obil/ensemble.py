"""Likelihood-ratio ensemble: members trained on rebalanced datasets at
distinct imbalance ratios, fused per query by uncertainty-weighted geometric
averaging in log space.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset, stratified_split
from .mlp import (CalibratedScorer, NetworkConfig, TrainingConfig,
                  load_scorer_bytes, mc_dropout_log_lr_variance,
                  mc_dropout_log_lr_variance_batch, save_scorer_bytes, train)
from .resampling import AssociatedProblemSpec, make_associated

MAGIC_ENSEMBLE = b"OBIL-ENS-v1"

# Golden-ratio increment for deriving member seeds from the master seed.
SEED_STRIDE = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def derive_member_seed(master_seed: int, k: int) -> int:
    return (master_seed ^ ((k + 1) * SEED_STRIDE)) & _MASK64


@dataclass(frozen=True)
class EnsembleConfig:
    target_qps: tuple = (1.0, 2.0, 5.0, 10.0)
    fusion_temperature: float = 1.0
    mc_samples: int = 30
    calibration_fraction: float = 0.15
    resample_method: str = "undersample"

    def __post_init__(self):
        object.__setattr__(self, "target_qps", tuple(float(q) for q in self.target_qps))
        if len(self.target_qps) == 0:
            raise ValueError("need at least one target imbalance ratio")
        if self.fusion_temperature <= 0:
            raise ValueError("fusion temperature must be positive")
        if self.mc_samples < 2:
            raise ValueError("need at least two MC samples")

    @property
    def k(self) -> int:
        return len(self.target_qps)


@dataclass
class LikelihoodRatioEnsemble:
    members: list
    config: EnsembleConfig

    def member_log_lr(self, k: int, x):
        return self.members[k].log_lr(x)

    def member_variances(self, x, rng: np.random.Generator):
        return np.array([
            mc_dropout_log_lr_variance(m, x, self.config.mc_samples, rng)
            for m in self.members
        ])

    def fusion_weights(self, x, rng: np.random.Generator):
        """Softmax of negative MC-dropout variances, temperature tau."""
        var = self.member_variances(x, rng)
        logw = -var / self.config.fusion_temperature
        logw -= logw.max()
        w = np.exp(logw)
        return w / w.sum()

    def fused_log_lr(self, x, rng: np.random.Generator) -> float:
        """Weighted geometric mean of member ratios, in log space."""
        w = self.fusion_weights(x, rng)
        logs = np.array([m.log_lr(x) for m in self.members])
        return float(w @ logs)

    def fused_log_lr_batch(self, x, rng: np.random.Generator) -> np.ndarray:
        """Fused log-LR for a whole batch; MC-dropout runs vectorized."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        var = np.stack([
            mc_dropout_log_lr_variance_batch(m, x, self.config.mc_samples, rng)
            for m in self.members
        ])  # (K, n)
        logw = -var / self.config.fusion_temperature
        logw -= logw.max(axis=0)
        w = np.exp(logw)
        w /= w.sum(axis=0)
        logs = np.stack([np.atleast_1d(m.log_lr(x)) for m in self.members])
        return np.sum(w * logs, axis=0)


def train_ensemble(dataset: LabeledDataset, cfg: EnsembleConfig,
                   net_cfg: NetworkConfig, train_cfg: TrainingConfig,
                   loss_name: str = "squared", seed: int = 0) -> LikelihoodRatioEnsemble:
    """Train one member per target ratio on independent resamples.

    A calibration split is reserved before any resampling; members train on
    the remainder, each on its own rebalanced copy with a derived seed.
    """
    dataset.require_both_classes()
    _cal, train_part = stratified_split(dataset, [cfg.calibration_fraction], seed=seed)
    if train_part.n_positive == 0 or train_part.n_negative == 0:
        train_part = dataset
    members = []
    for k, target_qp in enumerate(cfg.target_qps):
        member_seed = derive_member_seed(seed, k)
        assoc = make_associated(
            train_part,
            AssociatedProblemSpec(target_qp=target_qp, method=cfg.resample_method,
                                  seed=member_seed & 0x7FFFFFFF),
        )
        member_cfg = NetworkConfig(net_cfg.input_dim, net_cfg.hidden_dims,
                                   net_cfg.activation, net_cfg.dropout_rate,
                                   seed=member_seed & 0x7FFFFFFF)
        scorer = train(assoc, member_cfg, train_cfg, loss_name)
        members.append(scorer)
    return LikelihoodRatioEnsemble(members, cfg)


def save_ensemble_bytes(ens: LikelihoodRatioEnsemble) -> bytes:
    blobs = [save_scorer_bytes(m) for m in ens.members]
    header = {
        "target_qps": list(ens.config.target_qps),
        "fusion_temperature": ens.config.fusion_temperature,
        "mc_samples": ens.config.mc_samples,
        "calibration_fraction": ens.config.calibration_fraction,
        "resample_method": ens.config.resample_method,
        "member_sizes": [len(b) for b in blobs],
    }
    buf = io.BytesIO()
    buf.write(MAGIC_ENSEMBLE + b"\n")
    buf.write(json.dumps(header).encode() + b"\n")
    for b in blobs:
        buf.write(b)
    return buf.getvalue()


def load_ensemble_bytes(data: bytes) -> LikelihoodRatioEnsemble:
    buf = io.BytesIO(data)
    magic = buf.readline().rstrip(b"\n")
    if magic != MAGIC_ENSEMBLE:
        raise ValueError("not an ensemble container")
    header = json.loads(buf.readline().decode())
    cfg = EnsembleConfig(
        target_qps=tuple(header["target_qps"]),
        fusion_temperature=header["fusion_temperature"],
        mc_samples=header["mc_samples"],
        calibration_fraction=header["calibration_fraction"],
        resample_method=header["resample_method"],
    )
    members = [load_scorer_bytes(buf.read(n)) for n in header["member_sizes"]]
    return LikelihoodRatioEnsemble(members, cfg)


def save_ensemble(ens: LikelihoodRatioEnsemble, path):
    with open(path, "wb") as fh:
        fh.write(save_ensemble_bytes(ens))


def load_ensemble(path) -> LikelihoodRatioEnsemble:
    with open(path, "rb") as fh:
        return load_ensemble_bytes(fh.read())
