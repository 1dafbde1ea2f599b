"""Model assembly: the two graph variants, the convolutional baseline,
the two-LSTM attention baseline, and the ablation switches, all behind
one config surface.

Class index order is fixed everywhere: negative=0, neutral=1, positive=2.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import layers
from .autodiff import Tensor
from .data import Batch, CLASS_NAMES, Example, make_batch

VARIANTS = ("asgcn_dg", "asgcn_dt", "ascnn", "bilstm_attn")

CHECKPOINT_MAGIC = b"AGCNCKPT"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class ModelConfig:
    variant: str = "asgcn_dg"
    num_gcn_layers: int = 2
    hidden_dim: int = 300
    embed_dim: int = 300
    use_position_weights: bool = True
    use_aspect_mask: bool = True
    use_gcn: bool = True
    num_classes: int = 3
    l2_lambda: float = 1e-5
    learning_rate: float = 0.001
    batch_size: int = 32
    seed: int = 1
    dropout: float = 0.0
    l2_include_embedding: bool = True

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.use_gcn and self.num_gcn_layers < 1 and self.variant in ("asgcn_dg", "asgcn_dt", "ascnn"):
            raise ConfigError("use_gcn requires num_gcn_layers >= 1")
        if self.hidden_dim < 1 or self.embed_dim < 1:
            raise ConfigError("hidden_dim and embed_dim must be positive")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")

    @property
    def feature_width(self) -> int:
        return 2 * self.hidden_dim

    def adjacency_flavor(self) -> str | None:
        """Which adjacency stack a batch must carry for this config."""
        if self.variant == "asgcn_dg" and self.use_gcn:
            return "dg"
        if self.variant == "asgcn_dt" and self.use_gcn:
            return "dt"
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, record: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(record) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**record)


class ParameterStore:
    """Named map from parameter path to tensor, in stable insertion order."""

    def __init__(self, init_note: str = ""):
        self._params: dict[str, Tensor] = {}
        self.init_note = init_note

    def add(self, path: str, tensor: Tensor) -> Tensor:
        if path in self._params:
            raise ValueError(f"duplicate parameter path: {path}")
        self._params[path] = tensor
        return tensor

    def add_group(self, prefix: str, group: dict[str, Tensor]) -> None:
        for name, tensor in group.items():
            self.add(f"{prefix}.{name}", tensor)

    def __getitem__(self, path: str) -> Tensor:
        return self._params[path]

    def __contains__(self, path: str) -> bool:
        return path in self._params

    def items(self):
        return self._params.items()

    def paths(self) -> list[str]:
        return list(self._params)

    def count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grads(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {path: tensor.data.copy() for path, tensor in self._params.items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self._params):
            raise ValueError("snapshot paths do not match the store")
        for path, data in values.items():
            self._params[path].data = np.array(data, dtype=np.float64)


@dataclass
class ModelParts:
    """Typed view of a parameter store, for use by the forward pass."""

    embedding: layers.EmbeddingTable
    lstm_fw: layers.LstmCell
    lstm_bw: layers.LstmCell
    gcn_layers: list[layers.GcnLayer] = field(default_factory=list)
    conv_layers: list[layers.ConvLayer] = field(default_factory=list)
    aspect_fw: layers.LstmCell | None = None
    aspect_bw: layers.LstmCell | None = None
    classifier_weight: Tensor | None = None
    classifier_bias: Tensor | None = None


def build_model(cfg: ModelConfig, vocab_size: int, pretrained: np.ndarray | None = None) -> ParameterStore:
    """Allocate and initialize every parameter for the configured variant.

    Matrices use fan-in scaled uniform init; biases start at zero. The
    embedding is either copied from a pretrained matrix or drawn from
    U(-0.25, 0.25), with the padding row forced to zero.
    """
    cfg.validate()
    if vocab_size < 2:
        raise ConfigError("vocab_size must cover at least padding and unknown tokens")
    rng = np.random.default_rng(cfg.seed)
    store = ParameterStore(init_note=f"fan-in scaled uniform, zero biases, seed={cfg.seed}")

    if pretrained is not None:
        pretrained = np.asarray(pretrained, dtype=np.float64)
        if pretrained.shape != (vocab_size, cfg.embed_dim):
            raise ConfigError(f"pretrained embedding shape {pretrained.shape} != ({vocab_size}, {cfg.embed_dim})")
        matrix = pretrained.copy()
        matrix[0] = 0.0
        rng.uniform(-0.25, 0.25, size=(vocab_size, cfg.embed_dim))  # keep the draw sequence stable
        store.add("embed.weight", Tensor(matrix, requires_grad=True))
    else:
        table = layers.EmbeddingTable.random(vocab_size, cfg.embed_dim, rng)
        store.add("embed.weight", table.weights)

    fw = layers.LstmCell.init(cfg.embed_dim, cfg.hidden_dim, rng)
    bw = layers.LstmCell.init(cfg.embed_dim, cfg.hidden_dim, rng)
    store.add_group("lstm.fw", fw.parameters())
    store.add_group("lstm.bw", bw.parameters())

    width = cfg.feature_width
    if cfg.variant in ("asgcn_dg", "asgcn_dt") and cfg.use_gcn:
        for l in range(cfg.num_gcn_layers):
            store.add_group(f"gcn.{l}", layers.GcnLayer.init(width, rng).parameters())
    elif cfg.variant == "ascnn" and cfg.use_gcn:
        for l in range(cfg.num_gcn_layers):
            store.add_group(f"conv.{l}", layers.ConvLayer.init(width, width, rng).parameters())
    elif cfg.variant == "bilstm_attn":
        afw = layers.LstmCell.init(cfg.embed_dim, cfg.hidden_dim, rng)
        abw = layers.LstmCell.init(cfg.embed_dim, cfg.hidden_dim, rng)
        store.add_group("aspect_lstm.fw", afw.parameters())
        store.add_group("aspect_lstm.bw", abw.parameters())

    store.add("classifier.weight", Tensor(_uniform(rng, width, (width, cfg.num_classes)), requires_grad=True))
    store.add("classifier.bias", Tensor(np.zeros(cfg.num_classes), requires_grad=True))
    return store


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _cell_from(store: ParameterStore, prefix: str) -> layers.LstmCell:
    return layers.LstmCell(
        w_input=store[f"{prefix}.input.weight"],
        w_forget=store[f"{prefix}.forget.weight"],
        w_output=store[f"{prefix}.output.weight"],
        w_candidate=store[f"{prefix}.candidate.weight"],
        b_input=store[f"{prefix}.input.bias"],
        b_forget=store[f"{prefix}.forget.bias"],
        b_output=store[f"{prefix}.output.bias"],
        b_candidate=store[f"{prefix}.candidate.bias"],
    )


def model_parts(store: ParameterStore, cfg: ModelConfig) -> ModelParts:
    parts = ModelParts(
        embedding=layers.EmbeddingTable(store["embed.weight"]),
        lstm_fw=_cell_from(store, "lstm.fw"),
        lstm_bw=_cell_from(store, "lstm.bw"),
        classifier_weight=store["classifier.weight"],
        classifier_bias=store["classifier.bias"],
    )
    for l in range(cfg.num_gcn_layers):
        if f"gcn.{l}.weight" in store:
            parts.gcn_layers.append(layers.GcnLayer(store[f"gcn.{l}.weight"], store[f"gcn.{l}.bias"]))
        if f"conv.{l}.kernel" in store:
            parts.conv_layers.append(layers.ConvLayer(store[f"conv.{l}.kernel"], store[f"conv.{l}.bias"]))
    if "aspect_lstm.fw.input.weight" in store:
        parts.aspect_fw = _cell_from(store, "aspect_lstm.fw")
        parts.aspect_bw = _cell_from(store, "aspect_lstm.bw")
    return parts


def _aspect_summed_states(parts: ModelParts, cfg: ModelConfig, batch: Batch) -> Tensor:
    """Encode aspect tokens with their own BiLSTM and sum the states."""
    m_max = max(to - frm for frm, to in batch.spans)
    size = batch.size
    aspect_ids = np.zeros((size, m_max), dtype=np.int64)
    aspect_lengths = np.zeros(size, dtype=np.int64)
    for b, (frm, to) in enumerate(batch.spans):
        aspect_ids[b, : to - frm] = batch.token_ids[b, frm:to]
        aspect_lengths[b] = to - frm
    embedded = layers.embed(aspect_ids, parts.embedding)
    states = layers.bilstm_batch(embedded, parts.aspect_fw, parts.aspect_bw, aspect_lengths)
    return states


def forward(
    store: ParameterStore,
    cfg: ModelConfig,
    batch: Batch,
    training: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the full pipeline on a prepared batch.

    Returns (logits [B, num_classes], alpha [B, n_max]); alpha rows sum to
    one over each sample's true length and are zero on padding. Softmax
    over the logits is applied by the loss or by ``predict``.
    """
    cfg.validate()
    parts = model_parts(store, cfg)
    size, n_max = batch.token_ids.shape
    lengths = batch.lengths
    valid = batch.valid

    x = layers.embed(batch.token_ids, parts.embedding)
    if training and cfg.dropout > 0.0:
        rng = dropout_rng if dropout_rng is not None else np.random.default_rng(cfg.seed)
        x = ad.dropout(x, cfg.dropout, rng)
    context = layers.bilstm_batch(x, parts.lstm_fw, parts.lstm_bw, lengths)

    if cfg.variant == "bilstm_attn":
        aspect_states = _aspect_summed_states(parts, cfg, batch)
        pooled, alpha = _attend(context, aspect_states, lengths, mask_rows=None)
    else:
        if cfg.use_gcn:
            stack = parts.gcn_layers if cfg.variant in ("asgcn_dg", "asgcn_dt") else parts.conv_layers
            if cfg.variant in ("asgcn_dg", "asgcn_dt"):
                if batch.adjacency is None:
                    raise ValueError(f"variant {cfg.variant} requires an adjacency stack on the batch")
                adjacency = batch.adjacency
            hidden = context
            for layer in stack:
                g_in = ad.scale_rows(hidden, ad.constant(batch.q)) if cfg.use_position_weights else hidden
                if cfg.variant in ("asgcn_dg", "asgcn_dt"):
                    hidden = layers.gcn_layer_batch(g_in, adjacency, layer, valid)
                else:
                    convolved = layers.conv1d_batch(g_in, layer.kernel, layer.bias)
                    hidden = ad.scale_rows(ad.relu(convolved), ad.constant(valid))
            final = hidden
        else:
            # Ablation without graph layers: position weights and masking
            # act directly on the context states; adjacency is never read.
            final = ad.scale_rows(context, ad.constant(batch.q)) if cfg.use_position_weights else context
        mask_rows = batch.spans if cfg.use_aspect_mask else None
        pooled, alpha = _attend(context, final, lengths, mask_rows)

    logits = ad.add(ad.matmul(pooled, parts.classifier_weight), parts.classifier_bias)
    return logits, alpha


def _attend(context: Tensor, features: Tensor, lengths, mask_rows) -> tuple[Tensor, Tensor]:
    if mask_rows is not None:
        features = layers.aspect_mask_batch(features, mask_rows, features.shape[1])
    return layers.aspect_attention_batch(context, features, lengths)


def predict(store: ParameterStore, cfg: ModelConfig, example: Example) -> tuple[str, np.ndarray, np.ndarray]:
    """Classify one example; ties break toward the lowest class index."""
    batch = make_batch([example], cfg.adjacency_flavor())
    logits, alpha = forward(store, cfg, batch, training=False)
    probabilities = ad.softmax(logits).data[0]
    label_index = int(np.argmax(probabilities))
    return CLASS_NAMES[label_index], probabilities, alpha.data[0, : example.n].copy()


# ---------------------------------------------------------------------------
# checkpoint format: magic, version, config echo, named float64 parameters


def save_checkpoint(path, cfg: ModelConfig, store: ParameterStore) -> None:
    buffer = io.BytesIO()
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(struct.pack("<I", CHECKPOINT_VERSION))
    config_blob = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    buffer.write(struct.pack("<I", len(config_blob)))
    buffer.write(config_blob)
    items = list(store.items())
    buffer.write(struct.pack("<I", len(items)))
    for param_path, tensor in items:
        encoded = param_path.encode("utf-8")
        buffer.write(struct.pack("<I", len(encoded)))
        buffer.write(encoded)
        buffer.write(struct.pack("<I", tensor.ndim))
        for extent in tensor.shape:
            buffer.write(struct.pack("<Q", extent))
        buffer.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    Path(path).write_bytes(buffer.getvalue())


def load_checkpoint(path) -> tuple[ModelConfig, ParameterStore]:
    blob = Path(path).read_bytes()
    view = io.BytesIO(blob)
    magic = view.read(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}, not a checkpoint file")
    (version,) = struct.unpack("<I", view.read(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (config_len,) = struct.unpack("<I", view.read(4))
    cfg = ModelConfig.from_dict(json.loads(view.read(config_len).decode("utf-8")))
    (num_params,) = struct.unpack("<I", view.read(4))
    store = ParameterStore(init_note="loaded from checkpoint")
    for _ in range(num_params):
        (name_len,) = struct.unpack("<I", view.read(4))
        param_path = view.read(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", view.read(4))
        shape = tuple(struct.unpack("<Q", view.read(8))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(view.read(count * 8), dtype="<f8").reshape(shape).copy()
        store.add(param_path, Tensor(data, requires_grad=True))
    if view.read(1):
        raise CheckpointError(f"{path}: trailing bytes after the last parameter")
    return cfg, store
