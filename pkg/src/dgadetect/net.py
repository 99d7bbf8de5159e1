"""Character-level residual convolutional classifier.

Blocks are conv -> ReLU -> conv added to a (projected) skip path, followed by
a block-level ReLU and max pooling; pooling auto-skips once the sequence
length cannot shrink further. Early-layer outputs are exposed as an ordered
tap registry so detectors can consume intermediate feature vectors.

torch is used as the tensor/autograd backend; all randomness (weight init,
validation split, batch shuffling) comes from our own seeded streams so that
training is reproducible end to end.
"""

from __future__ import annotations

import copy
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .domain import CharVocab, DomainName, encode_domain, parse_domain
from .rng import SplitMix64, stream
from .synth import LabeledSample

BUNDLE_FORMAT_VERSION = 1


class NetError(ValueError):
    pass


class BundleError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetConfig:
    classes: tuple[str, ...]
    embed_dim: int = 32
    blocks: int = 3
    channels: int = 64
    kernel: int = 4
    pool: int = 2
    max_len: int = 64
    vocab_size: int = 41

    def __post_init__(self):
        if self.blocks < 1 or self.embed_dim < 1 or self.channels < 1:
            raise NetError("blocks, embed_dim, and channels must be >= 1")
        if self.kernel < 1 or self.pool < 2 or self.max_len < 1:
            raise NetError("bad kernel/pool/max_len")
        if len(self.classes) < 2:
            raise NetError("need at least 2 classes")
        if len(set(self.classes)) != len(self.classes):
            raise NetError("duplicate class names")


@dataclass(frozen=True)
class TrainConfig:
    step_size: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 50
    patience: int = 3
    val_fraction: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.val_fraction < 1.0):
            raise NetError("val_fraction must be in (0, 1)")
        if self.patience < 1:
            raise NetError("patience must be >= 1")


def length_schedule(cfg: NetConfig) -> list[tuple[bool, int]]:
    """Per block: (pooling applied, sequence length after the block)."""
    out = []
    length = cfg.max_len
    for _ in range(cfg.blocks):
        if length >= cfg.pool:
            length //= cfg.pool
            out.append((True, length))
        else:
            out.append((False, length))
    return out


def tap_registry(cfg: NetConfig) -> tuple[str, ...]:
    """Ordered tap points; pool taps are omitted where pooling is skipped.
    The penultimate entry is the feature source for new-family clustering."""
    taps = ["embed"]
    for b, (pooled, _) in enumerate(length_schedule(cfg), 1):
        taps.append(f"block{b}/pre_relu")
        taps.append(f"block{b}/post_relu")
        if pooled:
            taps.append(f"block{b}/post_pool")
    taps.append("logits")
    return tuple(taps)


def penultimate_tap(cfg: NetConfig) -> str:
    return tap_registry(cfg)[-2]


def tap_dim(cfg: NetConfig, tap: str) -> int:
    if tap == "embed":
        return cfg.embed_dim * cfg.max_len
    if tap == "logits":
        return len(cfg.classes)
    sched = length_schedule(cfg)
    for b, (pooled, after) in enumerate(sched, 1):
        before = after * cfg.pool if pooled else after
        if tap == f"block{b}/pre_relu" or tap == f"block{b}/post_relu":
            return cfg.channels * before
        if tap == f"block{b}/post_pool":
            if not pooled:
                break
            return cfg.channels * after
    raise NetError(f"unknown tap {tap!r}")


class _Block(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, pooled: bool, pool: int):
        super().__init__()
        self.conv1 = nn.Conv1d(in_ch, out_ch, kernel, padding="same")
        self.conv2 = nn.Conv1d(out_ch, out_ch, kernel, padding="same")
        self.proj = nn.Conv1d(in_ch, out_ch, 1) if in_ch != out_ch else None
        self.pooled = pooled
        self.pool = pool


class ResidualCharNet(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.emb = nn.Embedding(cfg.vocab_size, cfg.embed_dim)
        sched = length_schedule(cfg)
        blocks = []
        in_ch = cfg.embed_dim
        for pooled, _ in sched:
            blocks.append(_Block(in_ch, cfg.channels, cfg.kernel, pooled, cfg.pool))
            in_ch = cfg.channels
        self.blocks = nn.ModuleList(blocks)
        final_len = sched[-1][1]
        self.dense = nn.Linear(cfg.channels * final_len, len(cfg.classes))

    def forward_taps(self, x: torch.Tensor) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
        taps: dict[str, torch.Tensor] = {}
        h = self.emb(x).transpose(1, 2)  # (n, embed_dim, max_len)
        taps["embed"] = h
        for b, blk in enumerate(self.blocks, 1):
            out = blk.conv2(F.relu(blk.conv1(h)))
            skip = blk.proj(h) if blk.proj is not None else h
            h = out + skip
            taps[f"block{b}/pre_relu"] = h
            h = F.relu(h)
            taps[f"block{b}/post_relu"] = h
            if blk.pooled:
                h = F.max_pool1d(h, blk.pool)
                taps[f"block{b}/post_pool"] = h
        logits = self.dense(h.flatten(1))
        taps["logits"] = logits
        return logits, taps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward_taps(x)[0]


def init_net(cfg: NetConfig, seed: int) -> ResidualCharNet:
    """Deterministic fan-in-scaled uniform init; all biases zero."""
    model = ResidualCharNet(cfg)
    with torch.no_grad():
        for name, p in model.named_parameters():
            rng = stream(seed, "init:" + name)
            if name.endswith("bias"):
                p.zero_()
                continue
            if "emb" in name:
                bound = 1.0
            elif p.dim() == 3:  # conv weight (out, in, k)
                bound = 1.0 / float(np.sqrt(p.shape[1] * p.shape[2]))
            else:  # dense weight (out, in)
                bound = 1.0 / float(np.sqrt(p.shape[1]))
            vals = np.fromiter(
                ((rng.uniform() * 2.0 - 1.0) * bound for _ in range(p.numel())),
                dtype=np.float64,
                count=p.numel(),
            )
            p.copy_(torch.from_numpy(vals.astype(np.float32)).reshape(p.shape))
    return model


@dataclass(frozen=True)
class FeatureVector:
    tap: str
    values: np.ndarray


@dataclass
class NetBundle:
    """Trained network plus vocabulary, class list, and fitted detector
    artifacts. Immutable in spirit once training completes."""

    net_cfg: NetConfig
    vocab: CharVocab
    model: ResidualCharNet
    artifacts: dict = field(default_factory=dict)

    @property
    def classes(self) -> tuple[str, ...]:
        return self.net_cfg.classes


def encode_batch(domains: list[DomainName], vocab: CharVocab) -> np.ndarray:
    out = np.zeros((len(domains), vocab.max_len), dtype=np.int64)
    for i, d in enumerate(domains):
        out[i] = encode_domain(d, vocab).ids
    return out


def _as_tensor(ids: np.ndarray) -> torch.Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    return torch.from_numpy(ids)


def forward_batch(bundle: NetBundle, ids: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Softmax probabilities, shape (n, classes)."""
    model = bundle.model
    model.eval()
    chunks = []
    x = _as_tensor(ids)
    with torch.no_grad():
        for i in range(0, x.shape[0], batch_size):
            logits = model(x[i : i + batch_size])
            chunks.append(torch.softmax(logits, dim=1).numpy())
    return np.concatenate(chunks, axis=0)


def forward(bundle: NetBundle, encoded) -> np.ndarray:
    ids = np.asarray(getattr(encoded, "ids", encoded), dtype=np.int64)
    return forward_batch(bundle, ids[None, :])[0]


def forward_with_taps(bundle: NetBundle, encoded) -> tuple[np.ndarray, list[FeatureVector]]:
    ids = np.asarray(getattr(encoded, "ids", encoded), dtype=np.int64)
    model = bundle.model
    model.eval()
    with torch.no_grad():
        logits, taps = model.forward_taps(_as_tensor(ids))
        probs = torch.softmax(logits, dim=1).numpy()[0]
    vectors = [
        FeatureVector(tap=t, values=taps[t].flatten().numpy().copy())
        for t in tap_registry(bundle.net_cfg)
    ]
    return probs, vectors


def extract_features(
    bundle: NetBundle, ids: np.ndarray, tap: str, batch_size: int = 512
) -> np.ndarray:
    """Flattened tap activations for a batch, shape (n, tap_dim)."""
    if tap not in tap_registry(bundle.net_cfg):
        raise NetError(f"unknown tap {tap!r}")
    model = bundle.model
    model.eval()
    x = _as_tensor(ids)
    chunks = []
    with torch.no_grad():
        for i in range(0, x.shape[0], batch_size):
            _, taps = model.forward_taps(x[i : i + batch_size])
            chunks.append(taps[tap].flatten(1).numpy().copy())
    return np.concatenate(chunks, axis=0)


class EarlyStopper:
    """Stop after `patience` epochs without strict validation improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self._bad = 0
        self._epoch = 0

    def update(self, val_loss: float) -> bool:
        self._epoch += 1
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = self._epoch
            self._bad = 0
            return True
        self._bad += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self._bad >= self.patience


def net_config_for(samples: list[LabeledSample], vocab: CharVocab, **overrides) -> NetConfig:
    classes = tuple(sorted({s.label for s in samples}))
    return NetConfig(
        classes=classes, max_len=vocab.max_len, vocab_size=vocab.size, **overrides
    )


def train_net(
    samples: list[LabeledSample],
    vocab: CharVocab,
    train_cfg: TrainConfig,
    net_cfg: NetConfig | None = None,
) -> NetBundle:
    """Mini-batch Adam on cross-entropy with a held-out validation split and
    early stopping; returns parameters from the best validation epoch."""
    if net_cfg is None:
        net_cfg = net_config_for(samples, vocab)
    labels = sorted({s.label for s in samples})
    if len(labels) < 2:
        raise NetError("training set must contain at least two classes")

    torch.set_num_threads(1)
    class_idx = {c: i for i, c in enumerate(net_cfg.classes)}
    ids = encode_batch([s.domain for s in samples], vocab)
    y = np.array([class_idx[s.label] for s in samples], dtype=np.int64)

    rng = stream(train_cfg.rng_seed, "train")
    order = list(range(len(samples)))
    rng.shuffle(order)
    n_val = max(1, int(round(train_cfg.val_fraction * len(samples))))
    val_idx = np.array(order[:n_val])
    tr_idx = order[n_val:]
    if not tr_idx:
        raise NetError("training set too small for the validation split")

    model = init_net(net_cfg, train_cfg.rng_seed)
    opt = torch.optim.Adam(
        model.parameters(), lr=train_cfg.step_size, betas=(0.9, 0.999), eps=1e-8
    )
    x_val = torch.from_numpy(ids[val_idx])
    y_val = torch.from_numpy(y[val_idx])

    stopper = EarlyStopper(train_cfg.patience)
    best_state = copy.deepcopy(model.state_dict())
    for _epoch in range(train_cfg.max_epochs):
        rng.shuffle(tr_idx)
        model.train()
        for i in range(0, len(tr_idx), train_cfg.batch_size):
            batch = np.array(tr_idx[i : i + train_cfg.batch_size])
            xb = torch.from_numpy(ids[batch])
            yb = torch.from_numpy(y[batch])
            opt.zero_grad()
            loss = F.cross_entropy(model(xb), yb)
            loss.backward()
            opt.step()
        model.eval()
        with torch.no_grad():
            val_loss = float(F.cross_entropy(model(x_val), y_val))
        if stopper.update(val_loss):
            best_state = copy.deepcopy(model.state_dict())
        if stopper.should_stop:
            break
    model.load_state_dict(best_state)
    model.eval()
    return NetBundle(net_cfg=net_cfg, vocab=vocab, model=model)


# ---------------------------------------------------------------------------
# serialization: manifest.json + weights.bin (f32 little-endian, CRC-trailed)

def save_bundle(bundle: NetBundle, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    state = bundle.model.state_dict()
    tensor_specs = [{"name": k, "shape": list(v.shape)} for k, v in state.items()]
    blob = b"".join(
        v.detach().numpy().astype("<f4").tobytes() for v in state.values()
    )
    crc = zlib.crc32(blob) & 0xFFFFFFFF
    (path / "weights.bin").write_bytes(blob + struct.pack("<I", crc))
    cfg = bundle.net_cfg
    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "net": {
            "embed_dim": cfg.embed_dim,
            "blocks": cfg.blocks,
            "channels": cfg.channels,
            "kernel": cfg.kernel,
            "pool": cfg.pool,
            "max_len": cfg.max_len,
            "vocab_size": cfg.vocab_size,
        },
        "vocab": {"alphabet": bundle.vocab.alphabet, "max_len": bundle.vocab.max_len},
        "classes": list(cfg.classes),
        "tensors": tensor_specs,
        "weights_crc32": crc,
    }
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    from . import detectors  # late import: detectors serializes its own artifacts

    detectors.save_artifacts(bundle.artifacts, path)


def load_bundle(path) -> NetBundle:
    path = Path(path)
    try:
        with open(path / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as e:
        raise BundleError(f"no bundle manifest at {path}") from e
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise BundleError(
            f"unsupported bundle format {manifest.get('format_version')!r}"
        )
    raw = (path / "weights.bin").read_bytes()
    if len(raw) < 4:
        raise BundleError("weights blob truncated")
    blob, trailer = raw[:-4], raw[-4:]
    crc = zlib.crc32(blob) & 0xFFFFFFFF
    if struct.unpack("<I", trailer)[0] != crc or manifest["weights_crc32"] != crc:
        raise BundleError("weights checksum mismatch")

    vocab = CharVocab(
        alphabet=manifest["vocab"]["alphabet"], max_len=manifest["vocab"]["max_len"]
    )
    net_cfg = NetConfig(classes=tuple(manifest["classes"]), **manifest["net"])
    model = ResidualCharNet(net_cfg)
    state = model.state_dict()
    offset = 0
    new_state = {}
    for spec in manifest["tensors"]:
        name, shape = spec["name"], tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 4
        if end > len(blob):
            raise BundleError("weights blob truncated")
        arr = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape)
        if name not in state:
            raise BundleError(f"unexpected tensor {name!r}")
        new_state[name] = torch.from_numpy(arr.copy())
        offset = end
    if offset != len(blob):
        raise BundleError("weights blob has trailing data")
    model.load_state_dict(new_state)
    model.eval()
    bundle = NetBundle(net_cfg=net_cfg, vocab=vocab, model=model)
    from . import detectors

    bundle.artifacts = detectors.load_artifacts(path, net_cfg)
    return bundle


def classify_probs(bundle: NetBundle, raw: str) -> np.ndarray:
    return forward(bundle, encode_domain(parse_domain(raw), bundle.vocab))
