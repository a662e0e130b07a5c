"""The evolving classifier: a dynamic MLP over extracted features.

Width evolves on the last hidden layer (grow/prune via the NS statistics in
:mod:`driftlearn.growth`); depth grows by appending a fresh hidden layer when
the drift detector confirms a drift, after which the head is re-initialized
(the new component starts untrained). Structural surgery never touches
earlier hidden layers, and a layer is never pruned below one node.

Checkpoints serialize every shape, parameter, velocity buffer, the NS state
and the depth log to canonical JSON; reloading is bit-exact in 64-bit mode
and the SHA-256 of the canonical form serves as a causality fingerprint.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, StructuralError
from .extractor import ExtractorConfig, FeatureExtractor
from .growth import NsState
from .layers import DenseLayer, SoftmaxHead, cross_entropy
from .tensor import DEFAULT_DTYPE, check_finite, resolve_dtype


@dataclass
class StructuralEvent:
    kind: str  # node_added | node_pruned | layer_added
    batch: int
    sample: int
    index: int | None = None


class EvolvingNetwork:
    """Extractor + growing hidden stack + softmax head."""

    def __init__(self, extractor: FeatureExtractor, n_classes: int, *,
                 rng: np.random.Generator, dtype=DEFAULT_DTYPE,
                 ns_decay: float = 0.999, ns_cumulative: bool = False,
                 initial_width: int | None = None,
                 hidden_activation: str = "sigmoid"):
        if n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {n_classes}")
        width = initial_width if initial_width else n_classes
        self.extractor = extractor
        self.n_classes = n_classes
        self.dtype = dtype
        self.rng = rng
        self.hidden_activation = hidden_activation
        self.hidden = [DenseLayer(extractor.feature_width, width,
                                  hidden_activation, rng=rng, dtype=dtype)]
        self.head = SoftmaxHead(width, n_classes, rng=rng, dtype=dtype)
        self.ns = NsState(decay=ns_decay, cumulative=ns_cumulative)
        self.depth_log: list[tuple[int, str]] = []
        self.events: list[StructuralEvent] = []

    # ------------------------------------------------------------ shape facts

    @property
    def depth(self) -> int:
        """Conv layers + hidden layers + head."""
        return self.extractor.conv_layer_count() + len(self.hidden) + 1

    @property
    def last_width(self) -> int:
        return self.hidden[-1].n_out

    # ------------------------------------------------------------ forward

    def classify_features(self, features: np.ndarray) -> np.ndarray:
        """Pure classifier pass over already-extracted features."""
        h = np.atleast_2d(np.asarray(features, dtype=self.dtype))
        for layer in self.hidden:
            h = layer.forward(h)
        return self.head.forward(h)

    def predict(self, sensors=None, images=None):
        """Prediction pass; returns (probs, features, per-layer activations)."""
        feats = self.extractor.extract(sensors, images)
        acts = []
        h = feats
        for layer in self.hidden:
            h = layer.forward(h)
            acts.append(h)
        probs = self.head.forward(h)
        return probs, feats, acts

    def forward_train(self, sensors=None, images=None):
        """Forward pass caching everything needed for backward_step."""
        feats = self.extractor.forward(sensors, images, cache=True)
        h = feats
        for layer in self.hidden:
            h = layer.forward(h, cache=True)
        probs = self.head.forward(h, cache=True)
        return probs, feats

    def backward_step(self, targets: np.ndarray, hidden_rates, head_rate: float,
                      extractor_rate: float, momentum: float) -> float:
        """Backprop from cached forward state and apply per-layer momentum SGD."""
        if len(hidden_rates) != len(self.hidden):
            raise ConfigError(
                f"{len(hidden_rates)} rates for {len(self.hidden)} hidden layers")
        targets = np.atleast_2d(np.asarray(targets, dtype=self.dtype))
        loss = cross_entropy(self.head._cache[1], targets)
        d = self.head.backward_from_targets(targets)
        check_finite(self.head.grad_w, "head gradient", layer_index=len(self.hidden))
        for i in range(len(self.hidden) - 1, -1, -1):
            d = self.hidden[i].backward(d)
            check_finite(self.hidden[i].grad_w, "hidden gradient", layer_index=i)
        self.extractor.backward(d)
        self.head.apply_step(head_rate, momentum)
        for layer, rate in zip(self.hidden, hidden_rates):
            layer.apply_step(rate, momentum)
        self.extractor.apply_step(extractor_rate, momentum)
        return loss

    def train_features_pass(self, features: np.ndarray, targets: np.ndarray,
                            rate: float, momentum: float):
        """One per-sample pass over (features, one-hot targets), classifier only.

        Used for experience replay after a layer insertion; the extractor is
        left untouched.
        """
        features = np.atleast_2d(np.asarray(features, dtype=self.dtype))
        targets = np.atleast_2d(np.asarray(targets, dtype=self.dtype))
        for i in range(features.shape[0]):
            h = features[i:i + 1]
            for layer in self.hidden:
                h = layer.forward(h, cache=True)
            self.head.forward(h, cache=True)
            d = self.head.backward_from_targets(targets[i:i + 1])
            for layer in reversed(self.hidden):
                d = layer.backward(d)
            self.head.apply_step(rate, momentum)
            for layer in self.hidden:
                layer.apply_step(rate, momentum)

    # ------------------------------------------------------------ surgery

    def grow_node(self, batch: int, sample: int) -> StructuralEvent:
        self.hidden[-1].widen(self.rng)
        self.head.add_input(self.rng)
        event = StructuralEvent("node_added", batch, sample, self.last_width - 1)
        self.events.append(event)
        return event

    def prune_node(self, idx: int, batch: int, sample: int) -> StructuralEvent:
        if self.last_width <= 1:
            raise StructuralError("cannot prune the only node of the last hidden layer")
        self.hidden[-1].drop_unit(idx)
        self.head.drop_input(idx)
        event = StructuralEvent("node_pruned", batch, sample, idx)
        self.events.append(event)
        return event

    def select_prune_target(self, batch_features: np.ndarray) -> int:
        """Least-contributing node: mean |activation| times outgoing weight norm."""
        h = np.atleast_2d(np.asarray(batch_features, dtype=self.dtype))
        for layer in self.hidden:
            h = layer.forward(h)
        outgoing = np.linalg.norm(self.head.weights, axis=1)
        contributions = np.mean(np.abs(h), axis=0) * outgoing
        return int(np.argmin(contributions))

    def add_layer(self, batch: int, width: int | None = None) -> StructuralEvent:
        """Append a fresh hidden layer and re-initialize the head.

        The newest layer becomes the growth/pruning site. It starts at the
        width of the layer it replaces as the top unless ``width`` says
        otherwise; node growth and pruning take over from there. Callers are
        expected to follow up with a replay pass (see harness) unless replay
        is deliberately disabled.
        """
        width = width if width else self.last_width
        self.hidden.append(DenseLayer(self.last_width, width, self.hidden_activation,
                                      rng=self.rng, dtype=self.dtype))
        self.head = SoftmaxHead(width, self.n_classes, rng=self.rng, dtype=self.dtype)
        self.reset_velocities()
        self.depth_log.append((batch, "layer_added"))
        event = StructuralEvent("layer_added", batch, 0)
        self.events.append(event)
        return event

    def reset_velocities(self) -> None:
        """Zero every momentum buffer; stale velocity is poison after surgery."""
        layers = [*self.hidden, self.head]
        layers += [layer for _, layer in self.extractor.named_layers()]
        for layer in layers:
            for name, value in vars(layer).items():
                if name.startswith("vel_") and isinstance(value, np.ndarray):
                    value[...] = 0.0

    # ------------------------------------------------------------ checkpoints

    @staticmethod
    def _layer_state(layer) -> dict:
        return {name: arr.tolist() for name, arr in vars(layer).items()
                if isinstance(arr, np.ndarray)
                and not name.startswith(("grad_", "_"))}

    @staticmethod
    def _load_layer(layer, state: dict, dtype):
        for name, value in state.items():
            setattr(layer, name, np.asarray(value, dtype=dtype))

    def to_state(self) -> dict:
        ext = self.extractor
        return {
            "format": 1,
            "n_classes": self.n_classes,
            "dtype": str(np.dtype(self.dtype)),
            "hidden_activation": self.hidden_activation,
            "extractor": {
                "config": asdict(ext.cfg),
                "u": ext.u,
                "layers": {name: self._layer_state(layer)
                           for name, layer in ext.named_layers()},
            },
            "hidden": [dict(self._layer_state(layer), activation=layer.activation)
                       for layer in self.hidden],
            "head": self._layer_state(self.head),
            "ns": self.ns.state(),
            "depth_log": [list(entry) for entry in self.depth_log],
        }

    @classmethod
    def from_state(cls, state: dict, *, rng: np.random.Generator | None = None):
        dtype = resolve_dtype(state["dtype"])
        rng = rng if rng is not None else np.random.default_rng(0)
        ext_state = state["extractor"]
        cfg_kw = dict(ext_state["config"])
        cfg_kw["conv1d_channels"] = [tuple(p) for p in cfg_kw["conv1d_channels"]]
        cfg_kw["conv2d_channels"] = tuple(cfg_kw["conv2d_channels"])
        extractor = FeatureExtractor(ExtractorConfig(**cfg_kw), ext_state["u"],
                                     rng=np.random.default_rng(0), dtype=dtype)
        for name, layer in extractor.named_layers():
            cls._load_layer(layer, ext_state["layers"][name], dtype)
        net = cls(extractor, state["n_classes"], rng=rng, dtype=dtype,
                  hidden_activation=state["hidden_activation"])
        net.hidden = []
        for layer_state in state["hidden"]:
            payload = dict(layer_state)
            activation = payload.pop("activation")
            w = np.asarray(payload["weights"], dtype=dtype)
            layer = DenseLayer(w.shape[0], w.shape[1], activation,
                               rng=np.random.default_rng(0), dtype=dtype)
            cls._load_layer(layer, payload, dtype)
            net.hidden.append(layer)
        head_w = np.asarray(state["head"]["weights"], dtype=dtype)
        net.head = SoftmaxHead(head_w.shape[0], head_w.shape[1],
                               rng=np.random.default_rng(0), dtype=dtype)
        cls._load_layer(net.head, state["head"], dtype)
        net.ns.load(state["ns"])
        net.depth_log = [tuple(entry) for entry in state["depth_log"]]
        return net

    def canonical_json(self) -> str:
        return json.dumps(self.to_state(), sort_keys=True, separators=(",", ":"))

    def checkpoint_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def save_checkpoint(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.canonical_json())

    @classmethod
    def load_checkpoint(cls, path, *, rng: np.random.Generator | None = None):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_state(json.load(fh), rng=rng)
