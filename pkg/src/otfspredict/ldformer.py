"""CNN-Transformer predictor for DD channel sequences (LDformer).

Pipeline per time step: strided conv + LeakyReLU blocks compress each
``(2, S, S)`` frame to a ``(C, R, R)`` map, flattened to a D-dim token.
Tokens get a learnable positional encoding and pass through post-norm
Transformer encoder layers under a causal mask. Transposed-conv blocks
mirror the encoder back to ``(2, S, S)``, adding the encoder feature map
of matching resolution at each stage (the raw input frame at full
resolution). Output position ``i`` predicts frame ``i + 1``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .dataset import DatasetSplit, WindowSet
from .errors import NumericalError
from .nn import functional as F
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.optim import Adam
from .nn.tensor import Tensor, add, as_tensor, getitem, no_grad, reshape
from .otfs import OtfsDims


@dataclass
class LdformerConfig:
    m: int = 16
    n: int = 4
    history_len: int = 10
    max_len: int | None = None
    channels: tuple[int, ...] = (8, 16, 8)
    kernel: int = 4
    stride: int = 2
    padding: int = 1
    trans_layers: int = 2
    heads: int = 4
    ffn_hidden: int | None = None
    lr: float = 1e-3
    batch: int = 8
    max_epochs: int = 60
    patience: int = 10
    seed: int = 0
    dtype: str = "float32"
    out_init_scale: float = 0.0

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.max_len is None:
            self.max_len = self.history_len
        if self.ffn_hidden is None:
            self.ffn_hidden = 2 * self.token_dim
        if self.max_len < self.history_len:
            raise ValueError("max_len must be >= history_len")
        if not self.channels:
            raise ValueError("need at least one downsampling block")
        if self.token_dim % self.heads:
            raise ValueError(f"token dim {self.token_dim} not divisible by {self.heads} heads")

    @property
    def dims(self) -> OtfsDims:
        return OtfsDims(self.m, self.n)

    @property
    def side(self) -> int:
        return self.m * self.n

    @property
    def blocks(self) -> int:
        return len(self.channels)

    def encoder_sides(self) -> list[int]:
        sides = [self.side]
        for _ in self.channels:
            sides.append(F.conv_output_size(sides[-1], self.kernel, self.stride, self.padding))
        return sides

    @property
    def latent_side(self) -> int:
        return self.encoder_sides()[-1]

    @property
    def token_dim(self) -> int:
        return self.channels[-1] * self.latent_side ** 2

    def check_architecture(self):
        """Encoder and decoder resolutions must mirror exactly."""
        sides = self.encoder_sides()
        if sides[-1] < 1:
            raise ValueError(f"encoder collapses spatial side {self.side} to {sides[-1]}")
        if sides[-1] * self.stride ** self.blocks != self.side:
            raise ValueError(f"side {self.side} is not latent {sides[-1]} times stride^{self.blocks}")
        up = sides[-1]
        for want in reversed(sides[:-1]):
            up = F.conv_transpose_output_size(up, self.kernel, self.stride, self.padding)
            if up != want:
                raise ValueError(f"decoder produces side {up}, encoder had {want}; adjust kernel/padding")

    @classmethod
    def full_scale(cls, **kw) -> "LdformerConfig":
        """512x512 frames compressed to a 32x32 latent by four stride-2 blocks."""
        base = dict(m=64, n=8, channels=(8, 16, 16, 2), trans_layers=1, heads=8, ffn_hidden=2048)
        base.update(kw)
        return cls(**base)


def parameter_breakdown(cfg: LdformerConfig) -> dict[str, int]:
    k2 = cfg.kernel ** 2
    chans = (2,) + cfg.channels
    conv = sum(chans[i] * chans[i + 1] * k2 for i in range(cfg.blocks))
    d, h = cfg.token_dim, cfg.ffn_hidden
    layer = 4 * (d * d + d) + 4 * d + (d * h + h) + (h * d + d)
    return {
        "encoder": conv + sum(chans[1:]),
        "positional": cfg.max_len * d,
        "transformer": cfg.trans_layers * layer,
        "decoder": conv + sum(chans[:-1]),
    }


def parameter_count(cfg: LdformerConfig) -> int:
    return sum(parameter_breakdown(cfg).values())


def init_params(cfg: LdformerConfig, rng: np.random.Generator | None = None) -> dict[str, Tensor]:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    dt = np.dtype(cfg.dtype)
    k = cfg.kernel
    chans = (2,) + cfg.channels
    d, h = cfg.token_dim, cfg.ffn_hidden
    arrays: dict[str, np.ndarray] = {}

    def uniform(shape, fan_in, scale=1.0):
        bound = scale * math.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, shape)

    for i in range(cfg.blocks):
        arrays[f"enc{i}.w"] = uniform((chans[i + 1], chans[i], k, k), chans[i] * k * k)
        arrays[f"enc{i}.b"] = np.zeros(chans[i + 1])
    arrays["pe"] = rng.normal(0.0, 0.02, (cfg.max_len, d))
    for layer in range(cfg.trans_layers):
        p = f"layer{layer}."
        for name in ("q", "k", "v", "o"):
            arrays[p + "w" + name] = uniform((d, d), d, 1 / math.sqrt(2))
            arrays[p + "b" + name] = np.zeros(d)
        arrays[p + "ln1.g"] = np.ones(d)
        arrays[p + "ln1.b"] = np.zeros(d)
        arrays[p + "w1"] = uniform((d, h), d)
        arrays[p + "b1"] = np.zeros(h)
        arrays[p + "w2"] = uniform((h, d), h, 1 / math.sqrt(2))
        arrays[p + "b2"] = np.zeros(d)
        arrays[p + "ln2.g"] = np.ones(d)
        arrays[p + "ln2.b"] = np.zeros(d)
    for j in range(cfg.blocks):
        cin, cout = chans[cfg.blocks - j], chans[cfg.blocks - j - 1]
        scale = cfg.out_init_scale if j == cfg.blocks - 1 else 1.0
        arrays[f"dec{j}.w"] = uniform((cin, cout, k, k), cin * k * k / cfg.stride ** 2, scale)
        arrays[f"dec{j}.b"] = np.zeros(cout)
    return {name: Tensor(a.astype(dt), requires_grad=True) for name, a in arrays.items()}


@dataclass
class TrainReport:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    best_val: float = float("inf")
    seconds: float = 0.0


class LDformer:
    """Model config plus a dict of named parameter tensors."""

    kind = "ldformer"

    def __init__(self, cfg: LdformerConfig, params: dict[str, Tensor] | None = None):
        cfg.check_architecture()
        self.cfg = cfg
        self.params = init_params(cfg) if params is None else params
        self.dtype = np.dtype(cfg.dtype)

    @property
    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    # forward pieces -----------------------------------------------------

    def encode(self, x: Tensor) -> tuple[Tensor, list[Tensor]]:
        """``x`` (B, L, 2, S, S) to latent (B, L, C_K, R, R) and per-resolution skips.

        ``skips[k]`` is the input to encoder block ``k`` (``skips[0]`` is the frame itself).
        """
        cfg = self.cfg
        b, length = x.shape[:2]
        if x.shape[2:] != (2, cfg.side, cfg.side):
            raise ValueError(f"expected frames of shape (2, {cfg.side}, {cfg.side}), got {x.shape[2:]}")
        f = reshape(x, (b * length,) + x.shape[2:])
        skips = []
        for i in range(cfg.blocks):
            skips.append(f)
            f = F.conv2d(f, self.params[f"enc{i}.w"], self.params[f"enc{i}.b"], cfg.stride, cfg.padding)
            f = F.leaky_relu(f)
        return reshape(f, (b, length) + f.shape[1:]), [reshape(s, (b, length) + s.shape[1:]) for s in skips]

    def temporal_forward(self, feats: Tensor) -> Tensor:
        """Latent maps (B, L, C, R, R) to causally-mixed tokens (B, L, D)."""
        cfg = self.cfg
        b, length = feats.shape[:2]
        if length > cfg.max_len:
            raise ValueError(f"sequence length {length} exceeds positional table of {cfg.max_len}")
        z = reshape(feats, (b, length, cfg.token_dim))
        z = add(z, getitem(self.params["pe"], slice(0, length)))
        mask = F.causal_mask(length, self.dtype)
        for layer in range(cfg.trans_layers):
            p = {k.split(".", 1)[1]: v for k, v in self.params.items() if k.startswith(f"layer{layer}.")}
            a = F.multi_head_attention(z, p, cfg.heads, mask)
            z = F.layer_norm(add(a, z), p["ln1.g"], p["ln1.b"])
            ff = F.feed_forward(z, p["w1"], p["b1"], p["w2"], p["b2"])
            z = F.layer_norm(add(ff, z), p["ln2.g"], p["ln2.b"])
        return z

    def decode(self, tokens: Tensor, skips: list[Tensor], use_skips: bool = True) -> Tensor:
        """Tokens (B, L, D) back to frames (B, L, 2, S, S)."""
        cfg = self.cfg
        b, length, d = tokens.shape
        if d != cfg.token_dim:
            raise ValueError(f"token dim {d} != {cfg.token_dim}")
        r = cfg.latent_side
        g = reshape(tokens, (b * length, cfg.channels[-1], r, r))
        for j in range(cfg.blocks):
            g = F.conv_transpose2d(g, self.params[f"dec{j}.w"], self.params[f"dec{j}.b"], cfg.stride, cfg.padding)
            if use_skips:
                s = skips[cfg.blocks - 1 - j]
                g = add(g, reshape(s, (b * length,) + s.shape[2:]))
            # the last block is the linear output head: predictions are signed
            if j < cfg.blocks - 1:
                g = F.leaky_relu(g)
        return reshape(g, (b, length) + g.shape[1:])

    def forward(self, x, use_skips: bool = True) -> Tensor:
        """Right-shifted sequence prediction for ``x`` of shape (B, L, 2, S, S)."""
        x = as_tensor(np.asarray(x.data if isinstance(x, Tensor) else x, dtype=self.dtype))
        feats, skips = self.encode(x)
        return self.decode(self.temporal_forward(feats), skips, use_skips)

    # inference ----------------------------------------------------------

    def _check_finite(self):
        for name, p in self.params.items():
            if not np.all(np.isfinite(p.data)):
                raise NumericalError(f"parameter {name!r} has non-finite values")

    def predict_one(self, history: np.ndarray) -> np.ndarray:
        """Next frame (2, S, S) from a (L, 2, S, S) history."""
        return self.predict_multi(history, 1)[0]

    def predict_multi(self, history: np.ndarray, horizon: int) -> np.ndarray:
        """Autoregressive rollout, (horizon, 2, S, S).

        Encoder outputs are cached per frame, so each extra step encodes one
        new frame and decodes only the last position.
        """
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self._check_finite()
        hist = np.asarray(history, dtype=self.dtype)
        squeeze = hist.ndim == 4
        if squeeze:
            hist = hist[None]
        out = []
        with no_grad():
            feats, skips = self.encode(Tensor(hist))
            feats, skips = feats.data, [s.data for s in skips]
            for step in range(horizon):
                tokens = self.temporal_forward(Tensor(feats))
                last = self.decode(Tensor(tokens.data[:, -1:]), [Tensor(s[:, -1:]) for s in skips]).data
                out.append(last[:, 0])
                if step + 1 < horizon:
                    nf, ns = self.encode(Tensor(last))
                    feats = np.concatenate([feats[:, 1:], nf.data], axis=1)
                    skips = [np.concatenate([s[:, 1:], n.data], axis=1) for s, n in zip(skips, ns)]
        pred = np.stack(out, axis=1).astype(np.float64)
        if not np.all(np.isfinite(pred)):
            raise NumericalError("prediction contains non-finite values")
        return pred[0] if squeeze else pred

    # persistence --------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self.params) ^ set(state)
        if missing:
            raise ValueError(f"checkpoint tensor names differ: {sorted(missing)}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"{k}: checkpoint shape {v.shape}, model {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=self.dtype)

    def save(self, path):
        save_checkpoint(path, self.state_dict())

    @classmethod
    def load(cls, path, cfg: LdformerConfig) -> "LDformer":
        model = cls(cfg)
        model.load_state_dict(load_checkpoint(path))
        return model


def _sequence_loss(model: LDformer, seqs: np.ndarray) -> Tensor:
    length = seqs.shape[1] - 1
    pred = model.forward(seqs[:, :length])
    return F.mse_loss(pred, seqs[:, 1:].astype(model.dtype))


def evaluate_loss(model: LDformer, windows: WindowSet, batch: int = 16) -> float:
    total, count = 0.0, 0
    with no_grad():
        for i in range(0, len(windows), batch):
            idx = np.arange(i, min(i + batch, len(windows)))
            loss = _sequence_loss(model, windows.sequences(idx))
            total += float(loss.data) * len(idx)
            count += len(idx)
    return total / count


def train(
    split: DatasetSplit,
    cfg: LdformerConfig,
    model: LDformer | None = None,
    log=None,
) -> tuple[LDformer, TrainReport]:
    """Adam on right-shifted MSE over all positions, early-stopped on validation loss.

    Returns the model restored to its best-validation parameters.
    """
    if split.train.history_len != cfg.history_len:
        raise ValueError(f"split uses L={split.train.history_len}, config L={cfg.history_len}")
    model = LDformer(cfg) if model is None else model
    opt = Adam(model.params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed + 1)
    report = TrainReport()
    best_state = {k: v.copy() for k, v in model.state_dict().items()}
    stale = 0
    start = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(split.train))
        losses = []
        for bi in range(0, len(order), cfg.batch):
            idx = order[bi:bi + cfg.batch]
            opt.zero_grad()
            loss = _sequence_loss(model, split.train.sequences(idx))
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericalError(f"non-finite training loss at epoch {epoch}, batch {bi // cfg.batch}")
            loss.backward()
            opt.step()
            losses.append(value)
        val = evaluate_loss(model, split.val)
        report.train_losses.append(float(np.mean(losses)))
        report.val_losses.append(val)
        report.stopped_epoch = epoch
        if log is not None:
            log(f"epoch {epoch}: train {report.train_losses[-1]:.6g} val {val:.6g}")
        if val < report.best_val:
            report.best_val, report.best_epoch, stale = val, epoch, 0
            best_state = {k: v.copy() for k, v in model.state_dict().items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    report.seconds = time.perf_counter() - start
    return model, report


def config_to_dict(cfg: LdformerConfig) -> dict:
    return asdict(cfg)
