"""From-scratch MLP equalizer with staged interference cancellation.

Each detection stage owns one network mapping a 64-wide feature vector (two
received samples per symbol over a +-15 symbol window, plus two conditioning
slots carrying the nearest already-detected level on each side) to a posterior
over the symbol alphabet.  Training minimizes cross-entropy, which makes the
training objective the same quantity the rate estimator consumes.

Stages are trained with true lower-stage symbols in the conditioning slots
(genie-aided); at detection time the slots carry hard decisions from earlier
stages.  Both evaluation modes are exposed and labeled downstream.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import LinkRecords
from .config import TrainSpec
from .transmitter import build_alphabet

N_CONDITIONING_SLOTS = 2


class DivergenceError(RuntimeError):
    """Training loss went non-finite; carries where it happened."""


@dataclass(frozen=True)
class SicSchedule:
    """Partition of payload positions into stages by k mod S.

    Stage s (0-based) is detected after stages 0..s-1 and may condition on
    their symbols; the conditioning graph is acyclic by construction.
    """

    n_stages: int

    def __post_init__(self):
        if self.n_stages < 1:
            raise ValueError("need at least one stage")

    def stage_of(self, positions: np.ndarray) -> np.ndarray:
        return np.asarray(positions) % self.n_stages

    def known_before(self, stage: int, n: int) -> np.ndarray:
        """Mask of in-frame positions already detected when `stage` runs."""
        return (np.arange(n) % self.n_stages) < stage


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature training-set standardization; sigma is floored so
    structurally constant features pass through as zeros."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureStats":
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        return cls(mean=mean, std=np.where(std > 1e-12, std, 1.0))

    @classmethod
    def identity(cls, width: int) -> "FeatureStats":
        return cls(mean=np.zeros(width), std=np.ones(width))

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.std


@dataclass
class MlpParams:
    """Fully-connected rectifier network with a softmax head."""

    widths: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    stats: FeatureStats | None = None

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams(self.widths, [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases], self.stats)


def init_mlp(widths: tuple[int, ...], rng: np.random.Generator) -> MlpParams:
    """He-scaled Gaussian weights, zero biases."""
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(widths), weights, biases)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Posterior probability vectors for a batch (or single) input."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite network input")
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.widths[0]:
        raise ValueError(f"input width {h.shape[1]} != {params.widths[0]}")
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    probs = _softmax(h @ params.weights[-1] + params.biases[-1])
    return probs[0] if single else probs


def _forward_cached(params: MlpParams, x: np.ndarray):
    acts = [x]
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    probs = _softmax(h @ params.weights[-1] + params.biases[-1])
    return probs, acts


def cross_entropy_and_grads(params: MlpParams, x: np.ndarray,
                            labels: np.ndarray):
    """Mean cross-entropy in nats and gradients w.r.t. every parameter."""
    probs, acts = _forward_cached(params, x)
    n = x.shape[0]
    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grads_w, grads_b = [], []
    for layer in range(params.n_layers - 1, -1, -1):
        grads_w.append(acts[layer].T @ delta)
        grads_b.append(delta.sum(axis=0))
        if layer > 0:
            delta = (delta @ params.weights[layer].T) * (acts[layer] > 0)
    return loss, grads_w[::-1], grads_b[::-1]


@dataclass
class TrainReport:
    """Per-epoch loss history in bits, plus the endpoint summaries."""

    train_ce_bits: list[float] = field(default_factory=list)
    val_ce_bits: list[float] = field(default_factory=list)
    final_train_ce_bits: float = float("nan")
    final_val_ce_bits: float = float("nan")


class _Adam:
    def __init__(self, params: MlpParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m_w = [np.zeros_like(w) for w in params.weights]
        self.v_w = [np.zeros_like(w) for w in params.weights]
        self.m_b = [np.zeros_like(b) for b in params.biases]
        self.v_b = [np.zeros_like(b) for b in params.biases]

    def step(self, params: MlpParams, grads_w, grads_b, lr: float):
        self.t += 1
        corr1 = 1.0 - self.b1 ** self.t
        corr2 = 1.0 - self.b2 ** self.t
        for i in range(params.n_layers):
            for store_m, store_v, g, target in (
                    (self.m_w, self.v_w, grads_w[i], params.weights[i]),
                    (self.m_b, self.v_b, grads_b[i], params.biases[i])):
                store_m[i] = self.b1 * store_m[i] + (1 - self.b1) * g
                store_v[i] = self.b2 * store_v[i] + (1 - self.b2) * g * g
                target -= lr * (store_m[i] / corr1) / (
                    np.sqrt(store_v[i] / corr2) + self.eps)


def mlp_train(features: np.ndarray, labels: np.ndarray, order: int,
              spec: TrainSpec) -> tuple[MlpParams, TrainReport]:
    """Mini-batch Adam on cross-entropy; bit-reproducible from spec.seed.

    Features are standardized with training-split statistics (stored on the
    returned params).  The learning rate halves when the validation loss
    plateaus and training stops early below min_lr.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    n = features.shape[0]
    if n < 2:
        raise ValueError("need at least 2 examples")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(spec.val_fraction * n)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    stats = FeatureStats.fit(features[train_idx])
    x_train = stats.apply(features[train_idx])
    y_train = labels[train_idx]
    x_val = stats.apply(features[val_idx])
    y_val = labels[val_idx]

    widths = (features.shape[1], *spec.hidden_widths, order)
    params = init_mlp(widths, rng)
    params.stats = stats
    opt = _Adam(params)
    report = TrainReport()
    lr = spec.learning_rate
    best_val = np.inf
    stall = 0
    log2e = np.log2(np.e)
    for epoch in range(spec.epochs):
        order_idx = rng.permutation(x_train.shape[0])
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, x_train.shape[0], spec.batch_size):
            batch = order_idx[start:start + spec.batch_size]
            # overflow here is what the divergence check reports; keep it quiet
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gw, gb = cross_entropy_and_grads(params, x_train[batch],
                                                       y_train[batch])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches} "
                    f"(lr={lr:g})")
            opt.step(params, gw, gb, lr)
            epoch_loss += loss
            n_batches += 1
        val_probs = mlp_forward(params, x_val)
        picked = np.maximum(val_probs[np.arange(x_val.shape[0]), y_val], 1e-300)
        val_loss = float(-np.mean(np.log(picked)))
        report.train_ce_bits.append(epoch_loss / max(n_batches, 1) * log2e)
        report.val_ce_bits.append(val_loss * log2e)
        if val_loss < best_val - 1e-4:
            best_val = val_loss
            stall = 0
        else:
            stall += 1
            if stall > spec.lr_patience:
                lr *= spec.lr_decay
                stall = 0
                if lr < spec.min_lr:
                    break
    report.final_train_ce_bits = report.train_ce_bits[-1]
    report.final_val_ce_bits = report.val_ce_bits[-1]
    return params, report


# ---------------------------------------------------------------------------
# Featurization
# ---------------------------------------------------------------------------


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    idx = np.abs(idx)
    return np.where(idx >= n, 2 * (n - 1) - idx, idx)


def build_features(records: LinkRecords, targets: np.ndarray,
                   known_levels: np.ndarray, half_width: int
                   ) -> tuple[np.ndarray, int]:
    """Feature rows for the given global target positions.

    Layout: interleaved (even, odd) received samples for the window symbols
    left to right, then the nearest known level on the left and on the right
    (zero when no detected symbol falls inside the window, and for stage 1).
    known_levels has one entry per record position, zero where undetected.
    Windows are reflected at frame edges; the reflected-row count is returned.
    """
    targets = np.asarray(targets)
    n = records.indices.shape[0]
    fl = records.frame_len
    w = half_width
    if fl <= w:
        raise ValueError(f"frame length {fl} cannot support a +-{w} symbol "
                         "window even with reflection padding")
    frame = targets // fl
    local = targets % fl
    offsets = np.arange(-w, w + 1)
    local_win = local[:, None] + offsets[None, :]
    reflected = int(np.count_nonzero((local_win < 0) | (local_win >= fl)))
    win = frame[:, None] * fl + _reflect(local_win, fl)
    sample_feats = records.samples[win].reshape(targets.shape[0], -1)

    known = np.asarray(known_levels, dtype=float)
    known_mask = known != 0.0
    cond = np.zeros((targets.shape[0], N_CONDITIONING_SLOTS))
    for side, direction in enumerate((-1, 1)):
        dists = np.arange(1, w + 1)
        found = np.zeros(targets.shape[0], dtype=bool)
        for d in dists:
            cand_local = local + direction * d
            in_frame = (cand_local >= 0) & (cand_local < fl)
            cand = frame * fl + np.clip(cand_local, 0, fl - 1)
            hit = in_frame & ~found & known_mask[cand]
            cond[hit, side] = known[cand[hit]]
            found |= hit
    return np.concatenate([sample_feats, cond], axis=1), reflected


def featurize(records: LinkRecords, target: int, schedule: SicSchedule,
              stage: int, half_width: int,
              known_levels: np.ndarray | None = None) -> np.ndarray:
    """Single-position feature vector; lower stages are conditioned through
    known_levels (true levels masked to stages < stage when omitted)."""
    if known_levels is None:
        mask = schedule.known_before(stage, records.frame_len)
        known_levels = np.where(np.tile(mask, records.n_frames),
                                records.levels, 0.0)
    feats, _ = build_features(records, np.array([target]), known_levels,
                              half_width)
    return feats[0]


def stage_training_set(records: LinkRecords, schedule: SicSchedule,
                       stage: int, half_width: int
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Genie-conditioned features and labels for one stage.

    The symbol process is iid and the channel stationary, so the stage's
    conditioning pattern can be slid to every payload position: a target at
    residue r sees the known-symbol pattern rotated by r.  Every stage then
    trains on all positions instead of 1/S of them, which keeps the stages
    comparable to single-stage detection at equal dataset size.
    """
    n = records.indices.shape[0]
    s_count = schedule.n_stages
    pos_in_frame = np.arange(n) % records.frame_len
    feats_parts, label_parts = [], []
    for residue in range(s_count):
        targets = np.nonzero(pos_in_frame % s_count == residue)[0]
        # positions p with (p - residue + stage) mod S < stage are "known"
        frame_pos = np.arange(records.frame_len)
        mask = (frame_pos - residue + stage) % s_count < stage
        known = np.where(np.tile(mask, records.n_frames), records.levels, 0.0)
        f, _ = build_features(records, targets, known, half_width)
        feats_parts.append(f)
        label_parts.append(records.indices[targets])
    return np.concatenate(feats_parts), np.concatenate(label_parts)


def sic_detect(records: LinkRecords, models: list[MlpParams],
               schedule: SicSchedule, half_width: int,
               conditioning: str = "decision") -> np.ndarray:
    """Posteriors for every payload symbol, stage by stage.

    conditioning="decision" feeds hard argmax levels of earlier stages into
    the slots (the deployable receiver); "genie" feeds true levels, which
    isolates the per-stage networks from decision errors.
    """
    if len(models) != schedule.n_stages:
        raise ValueError(f"need {schedule.n_stages} stage models, got {len(models)}")
    if conditioning not in ("decision", "genie"):
        raise ValueError("conditioning must be 'decision' or 'genie'")
    n = records.indices.shape[0]
    order = models[0].widths[-1]
    posteriors = np.zeros((n, order))
    pos_in_frame = np.arange(n) % records.frame_len
    stage_of = schedule.stage_of(pos_in_frame)
    known = np.zeros(n)
    levels = build_alphabet(order).levels  # decisions map back to levels
    for stage in range(schedule.n_stages):
        model = models[stage]
        targets = np.nonzero(stage_of == stage)[0]
        feats, _ = build_features(records, targets, known, half_width)
        stats = model.stats or FeatureStats.identity(feats.shape[1])
        probs = mlp_forward(model, stats.apply(feats))
        posteriors[targets] = probs
        if conditioning == "genie":
            known[targets] = records.levels[targets]
        else:
            known[targets] = levels[np.argmax(probs, axis=1)]
    return posteriors


# ---------------------------------------------------------------------------
# Checkpoint format: widths, then row-major weights and biases per layer as
# little-endian float64, plus a JSON sidecar with the TrainSpec and stats.
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"MLPCKPT1"


def save_checkpoint(path: str, params: MlpParams, spec: TrainSpec,
                    dataset_hash: str = "") -> None:
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(params.widths)))
        fh.write(np.asarray(params.widths, dtype="<i8").tobytes())
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    stats = params.stats
    sidecar = {
        "train_spec": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in asdict(spec).items()},
        "dataset_hash": dataset_hash,
        "feature_mean": stats.mean.tolist() if stats else None,
        "feature_std": stats.std.tolist() if stats else None,
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_checkpoint(path: str) -> tuple[MlpParams, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise ValueError("not an equalizer checkpoint")
        (n_widths,) = struct.unpack("<Q", fh.read(8))
        widths = tuple(np.frombuffer(fh.read(8 * n_widths), dtype="<i8"))
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            weights.append(np.frombuffer(fh.read(8 * fan_in * fan_out),
                                         dtype="<f8").reshape(fan_in, fan_out).copy())
            biases.append(np.frombuffer(fh.read(8 * fan_out), dtype="<f8").copy())
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    params = MlpParams(tuple(int(w) for w in widths), weights, biases)
    if sidecar.get("feature_mean") is not None:
        params.stats = FeatureStats(np.asarray(sidecar["feature_mean"]),
                                    np.asarray(sidecar["feature_std"]))
    return params, sidecar
